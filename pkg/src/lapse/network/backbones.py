"""Per-frame feature extractors.

The classifier heads only see (T, feature_dim) arrays, so anything exposing
feature_dim and extract() plugs in.  The stub backbone is a fixed random
projection of coarse color statistics, enough for tests and demos without
any deep-learning dependency.  The convolutional backbones load lazily and
live behind the 'backbones' extra.
"""
from __future__ import annotations

from typing import Protocol

import numpy as np

from ..errors import ConfigError, ValidationError

RESNET50_DIM = 2048
EFFICIENTNET_B0_DIM = 1280

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class FeatureBackbone(Protocol):
    """Frame stack (T, 224, 224, 3) in [0, 1] -> features (T, feature_dim)."""

    name: str
    feature_dim: int

    def extract(self, frames: np.ndarray) -> np.ndarray: ...


def _check_frames(frames: np.ndarray) -> None:
    if frames.ndim != 4 or frames.shape[1:] != (224, 224, 3):
        raise ValidationError(
            f"expected frames (T, 224, 224, 3), got shape {frames.shape}"
        )


class StubBackbone:
    """Coarse 8x8 block means projected through a seeded random matrix.

    Deterministic for a given seed, cheap, and sensitive enough to image
    content for pipeline tests.
    """

    name = "stub"

    def __init__(self, feature_dim: int = 64, seed: int = 0):
        if feature_dim <= 0:
            raise ConfigError(f"feature_dim must be positive, got {feature_dim}")
        self.feature_dim = feature_dim
        rng = np.random.default_rng(seed)
        self._projection = rng.standard_normal((192, feature_dim)) / np.sqrt(192.0)

    def extract(self, frames: np.ndarray) -> np.ndarray:
        _check_frames(frames)
        t = frames.shape[0]
        blocks = frames.reshape(t, 8, 28, 8, 28, 3).mean(axis=(2, 4))
        raw = blocks.reshape(t, 192).astype(np.float64)
        return raw @ self._projection


class _TorchBackbone:
    """Shared plumbing for the torchvision models."""

    def __init__(self, pretrained: bool, device: str):
        try:
            import torch
            import torchvision
        except ImportError as exc:  # pragma: no cover - depends on extras
            raise ConfigError(
                f"backbone {self.name!r} requires torch and torchvision "
                "(install the 'backbones' extra)"
            ) from exc
        self._torch = torch
        self._device = device
        self._model = self._build(torchvision, pretrained).to(device)
        self._model.eval()
        self._mean = torch.tensor(IMAGENET_MEAN, device=device).view(1, 3, 1, 1)
        self._std = torch.tensor(IMAGENET_STD, device=device).view(1, 3, 1, 1)

    def _build(self, torchvision, pretrained: bool):  # pragma: no cover
        raise NotImplementedError

    def extract(self, frames: np.ndarray) -> np.ndarray:
        _check_frames(frames)
        torch = self._torch
        with torch.no_grad():
            batch = torch.from_numpy(np.ascontiguousarray(frames)).float()
            batch = batch.permute(0, 3, 1, 2).to(self._device)
            batch = (batch - self._mean) / self._std
            features = self._model(batch)
            features = features.reshape(features.shape[0], -1)
        return features.cpu().numpy().astype(np.float64)


class ResNet50Backbone(_TorchBackbone):
    """ResNet50 up to global average pooling; 2048-wide features."""

    name = "resnet50"
    feature_dim = RESNET50_DIM

    def __init__(self, pretrained: bool = False, device: str = "cpu"):
        super().__init__(pretrained, device)

    def _build(self, torchvision, pretrained: bool):
        from torch import nn

        weights = (
            torchvision.models.ResNet50_Weights.IMAGENET1K_V2 if pretrained else None
        )
        model = torchvision.models.resnet50(weights=weights)
        model.fc = nn.Identity()
        return model


class EfficientNetB0Backbone(_TorchBackbone):
    """EfficientNetB0 up to global average pooling; 1280-wide features."""

    name = "efficientnetb0"
    feature_dim = EFFICIENTNET_B0_DIM

    def __init__(self, pretrained: bool = False, device: str = "cpu"):
        super().__init__(pretrained, device)

    def _build(self, torchvision, pretrained: bool):
        from torch import nn

        weights = (
            torchvision.models.EfficientNet_B0_Weights.IMAGENET1K_V1
            if pretrained
            else None
        )
        model = torchvision.models.efficientnet_b0(weights=weights)
        model.classifier = nn.Identity()
        return model


BACKBONE_DIMS = {
    "stub": None,
    "resnet50": RESNET50_DIM,
    "efficientnetb0": EFFICIENTNET_B0_DIM,
}


def create_backbone(
    name: str,
    feature_dim: int = 64,
    seed: int = 0,
    pretrained: bool = False,
    device: str = "cpu",
) -> FeatureBackbone:
    """Build a backbone by name; feature_dim and seed apply to the stub only."""
    if name == "stub":
        return StubBackbone(feature_dim=feature_dim, seed=seed)
    if name == "resnet50":
        return ResNet50Backbone(pretrained=pretrained, device=device)
    if name in ("efficientnetb0", "efficientnet_b0"):
        return EfficientNetB0Backbone(pretrained=pretrained, device=device)
    raise ConfigError(
        f"unknown backbone {name!r}; expected one of {sorted(BACKBONE_DIMS)}"
    )
