"""Sequence classification heads over per-frame backbone features."""
from .backbones import (
    FeatureBackbone,
    StubBackbone,
    create_backbone,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .classifier import HybridClassifier, init_parameters
from .config import RecurrentHeadConfig, TransformerHeadConfig

__all__ = [
    "FeatureBackbone",
    "StubBackbone",
    "create_backbone",
    "HybridClassifier",
    "init_parameters",
    "RecurrentHeadConfig",
    "TransformerHeadConfig",
    "load_checkpoint",
    "save_checkpoint",
]
