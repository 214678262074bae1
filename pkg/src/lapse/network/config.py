"""Head configurations for the two classifier families."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ConfigError

SEQUENCE_LENGTH = 10
NUM_CLASSES = 2


@dataclass(frozen=True)
class TransformerHeadConfig:
    """Self-attention encoder over the frame sequence.

    Features enter at full backbone width (2048 or 1280); attention keeps
    that width while the position-wise feed-forward bottlenecks to ff_dim.
    """

    embed_dim: int
    num_heads: int = 16
    ff_dim: int = 8
    num_layers: int = 1
    seq_len: int = SEQUENCE_LENGTH
    dropout: float = 0.5
    num_classes: int = NUM_CLASSES
    kind: str = field(default="transformer", init=False)

    def __post_init__(self):
        if self.embed_dim <= 0:
            raise ConfigError(f"embed_dim must be positive, got {self.embed_dim}")
        if self.num_heads <= 0:
            raise ConfigError(f"num_heads must be positive, got {self.num_heads}")
        if self.embed_dim % self.num_heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by "
                f"num_heads {self.num_heads}"
            )
        if self.ff_dim <= 0:
            raise ConfigError(f"ff_dim must be positive, got {self.ff_dim}")
        if self.num_layers <= 0:
            raise ConfigError(f"num_layers must be positive, got {self.num_layers}")
        if self.seq_len <= 0:
            raise ConfigError(f"seq_len must be positive, got {self.seq_len}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads


@dataclass(frozen=True)
class RecurrentHeadConfig:
    """LSTM or GRU over the frame sequence, optionally bidirectional."""

    input_dim: int
    units: int = 64
    cell: str = "lstm"
    bidirectional: bool = False
    mid_dim: int = 64
    dropout_steps: float = 0.4
    dropout: float = 0.5
    seq_len: int = SEQUENCE_LENGTH
    num_classes: int = NUM_CLASSES
    kind: str = field(default="recurrent", init=False)

    def __post_init__(self):
        if self.input_dim <= 0:
            raise ConfigError(f"input_dim must be positive, got {self.input_dim}")
        if self.units <= 0:
            raise ConfigError(f"units must be positive, got {self.units}")
        if self.cell not in ("lstm", "gru"):
            raise ConfigError(f"cell must be 'lstm' or 'gru', got {self.cell!r}")
        if self.mid_dim <= 0:
            raise ConfigError(f"mid_dim must be positive, got {self.mid_dim}")
        if not 0.0 <= self.dropout_steps < 1.0:
            raise ConfigError(
                f"dropout_steps must be in [0, 1), got {self.dropout_steps}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.seq_len <= 0:
            raise ConfigError(f"seq_len must be positive, got {self.seq_len}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")

    @property
    def step_dim(self) -> int:
        """Width of the per-step output fed to the middle dense layer."""
        return self.units * (2 if self.bidirectional else 1)


HeadConfig = TransformerHeadConfig | RecurrentHeadConfig


def config_to_dict(config: HeadConfig) -> dict:
    if isinstance(config, TransformerHeadConfig):
        return {
            "kind": config.kind,
            "embed_dim": config.embed_dim,
            "num_heads": config.num_heads,
            "ff_dim": config.ff_dim,
            "num_layers": config.num_layers,
            "seq_len": config.seq_len,
            "dropout": config.dropout,
            "num_classes": config.num_classes,
        }
    if isinstance(config, RecurrentHeadConfig):
        return {
            "kind": config.kind,
            "input_dim": config.input_dim,
            "units": config.units,
            "cell": config.cell,
            "bidirectional": config.bidirectional,
            "mid_dim": config.mid_dim,
            "dropout_steps": config.dropout_steps,
            "dropout": config.dropout,
            "seq_len": config.seq_len,
            "num_classes": config.num_classes,
        }
    raise ConfigError(f"unknown config type {type(config).__name__}")


def config_from_dict(data: dict) -> HeadConfig:
    kind = data.get("kind")
    fields = {k: v for k, v in data.items() if k != "kind"}
    try:
        if kind == "transformer":
            return TransformerHeadConfig(**fields)
        if kind == "recurrent":
            return RecurrentHeadConfig(**fields)
    except TypeError as exc:
        raise ConfigError(f"bad config fields for kind {kind!r}: {exc}") from exc
    raise ConfigError(f"unknown config kind {kind!r}")
