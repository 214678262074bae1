"""Checkpoint IO: parameters plus config in one .npz archive.

Arrays round-trip bit exact.  The config travels as a JSON string under a
reserved key so a checkpoint is self-describing, and loading into a
mismatched architecture fails instead of silently reshaping.
"""
from __future__ import annotations

import json

import numpy as np

from ..errors import CheckpointError
from .config import HeadConfig, config_from_dict, config_to_dict

META_KEY = "__meta__"
FORMAT_VERSION = 1


def save_checkpoint(path, config: HeadConfig, params: dict, extra: dict | None = None) -> None:
    """Write params and config to path; extra must be JSON-serializable."""
    meta = {
        "format_version": FORMAT_VERSION,
        "config": config_to_dict(config),
        "extra": extra or {},
    }
    arrays = dict(params)
    if META_KEY in arrays:
        raise CheckpointError(f"parameter name {META_KEY!r} is reserved")
    arrays[META_KEY] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> tuple[HeadConfig, dict, dict]:
    """Read (config, params, extra) back from a checkpoint file."""
    try:
        archive = np.load(path)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path!r}: {exc}") from exc
    with archive:
        if META_KEY not in archive.files:
            raise CheckpointError(f"checkpoint {path!r} has no metadata entry")
        try:
            meta = json.loads(bytes(archive[META_KEY]).decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupt metadata in {path!r}: {exc}") from exc
        version = meta.get("format_version")
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version!r} in {path!r}"
            )
        config = config_from_dict(meta["config"])
        params = {name: archive[name] for name in archive.files if name != META_KEY}
    return config, params, meta.get("extra", {})


def load_into(path, config: HeadConfig) -> tuple[dict, dict]:
    """Load a checkpoint, requiring its config to match the given one."""
    saved_config, params, extra = load_checkpoint(path)
    if saved_config != config:
        raise CheckpointError(
            "checkpoint config does not match: "
            f"saved {config_to_dict(saved_config)}, requested {config_to_dict(config)}"
        )
    return params, extra
