"""Offline augmentation and class balancing.

A policy is sampled once per segment copy and applied identically to every
frame, so temporal appearance stays consistent within a clip.  Transforms run
in a fixed order (flip, blur, gamma, brightness, saturation) and the result
is clamped to [0, 1] once at the end.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .annotations import EventClass, EventSegment
from .errors import ValidationError
from .tasks import SegmentRef

BLUR_SIGMA = 5.0
BLUR_TRUNCATE = 2.0  # kernel radius 10 at sigma 5
GAMMA_VALUE = 0.5
BRIGHTNESS_RANGE = 0.3
SATURATION_FACTOR = 1.5
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class AugmentationPolicy:
    """One sampled combination of photometric transforms.

    Neutral parameter values (no flip, sigma 0, gamma 1, delta 0, factor 1)
    make the corresponding transform a no-op.
    """

    hflip: bool = False
    blur_sigma: float = 0.0
    gamma: float = 1.0
    brightness_delta: float = 0.0
    saturation_factor: float = 1.0

    def __post_init__(self):
        if self.blur_sigma not in (0.0, BLUR_SIGMA):
            raise ValidationError(
                f"blur_sigma must be 0 or {BLUR_SIGMA}, got {self.blur_sigma}"
            )
        if self.gamma not in (1.0, GAMMA_VALUE):
            raise ValidationError(
                f"gamma must be 1.0 or {GAMMA_VALUE}, got {self.gamma}"
            )
        if not -BRIGHTNESS_RANGE <= self.brightness_delta <= BRIGHTNESS_RANGE:
            raise ValidationError(
                f"brightness_delta must be in [-{BRIGHTNESS_RANGE}, "
                f"{BRIGHTNESS_RANGE}], got {self.brightness_delta}"
            )
        if self.saturation_factor not in (1.0, SATURATION_FACTOR):
            raise ValidationError(
                f"saturation_factor must be 1.0 or {SATURATION_FACTOR}, "
                f"got {self.saturation_factor}"
            )

    @property
    def is_identity(self) -> bool:
        return (
            not self.hflip
            and self.blur_sigma == 0.0
            and self.gamma == 1.0
            and self.brightness_delta == 0.0
            and self.saturation_factor == 1.0
        )

    def to_string(self) -> str:
        return (
            f"hflip={int(self.hflip)};blur_sigma={self.blur_sigma!r};"
            f"gamma={self.gamma!r};brightness_delta={self.brightness_delta!r};"
            f"saturation_factor={self.saturation_factor!r}"
        )


IDENTITY_POLICY = AugmentationPolicy()


def parse_policy(text: str) -> AugmentationPolicy:
    """Inverse of AugmentationPolicy.to_string."""
    fields: dict[str, str] = {}
    for part in text.split(";"):
        if "=" not in part:
            raise ValidationError(f"bad policy field {part!r} in {text!r}")
        key, value = part.split("=", 1)
        fields[key] = value
    try:
        return AugmentationPolicy(
            hflip=bool(int(fields["hflip"])),
            blur_sigma=float(fields["blur_sigma"]),
            gamma=float(fields["gamma"]),
            brightness_delta=float(fields["brightness_delta"]),
            saturation_factor=float(fields["saturation_factor"]),
        )
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"bad policy string {text!r}: {exc}") from exc


def sample_policy(rng_seed: int | np.random.Generator) -> AugmentationPolicy:
    """Draw each transform independently at p=0.5.

    An enabled blur uses sigma 5, an enabled gamma uses 0.5, an enabled
    saturation uses factor 1.5, and an enabled brightness shifts all
    channels by a uniform delta in [-0.3, 0.3].  The draw order is fixed so
    a given seed always yields the same policy.
    """
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.default_rng(rng_seed)
    )
    hflip = bool(rng.random() < 0.5)
    blur = bool(rng.random() < 0.5)
    gamma = bool(rng.random() < 0.5)
    use_brightness = bool(rng.random() < 0.5)
    delta = float(rng.uniform(-BRIGHTNESS_RANGE, BRIGHTNESS_RANGE))
    saturation = bool(rng.random() < 0.5)
    return AugmentationPolicy(
        hflip=hflip,
        blur_sigma=BLUR_SIGMA if blur else 0.0,
        gamma=GAMMA_VALUE if gamma else 1.0,
        brightness_delta=delta if use_brightness else 0.0,
        saturation_factor=SATURATION_FACTOR if saturation else 1.0,
    )


def hflip_frames(frames: np.ndarray) -> np.ndarray:
    """Mirror along the width axis (axis -2)."""
    return frames[..., ::-1, :]


def blur_frames(frames: np.ndarray, sigma: float = BLUR_SIGMA) -> np.ndarray:
    """Gaussian blur each frame and channel independently, spatial axes only.

    Reflect padding keeps interior mean intensity stable.
    """
    sigmas = [0.0] * frames.ndim
    sigmas[-3] = sigma
    sigmas[-2] = sigma
    return gaussian_filter(
        frames.astype(np.float64), sigma=sigmas, mode="reflect", truncate=BLUR_TRUNCATE
    )


def gamma_frames(frames: np.ndarray, gamma: float = GAMMA_VALUE) -> np.ndarray:
    """Per-channel power curve: x ** gamma on non-negative input."""
    return np.power(np.maximum(frames, 0.0), gamma)


def brightness_frames(frames: np.ndarray, delta: float) -> np.ndarray:
    return frames + delta


def saturation_frames(
    frames: np.ndarray, factor: float = SATURATION_FACTOR
) -> np.ndarray:
    """Push channels away from per-pixel luma by the given factor."""
    weights = np.asarray(LUMA_WEIGHTS, dtype=np.float64)
    luma = np.tensordot(frames, weights, axes=([-1], [0]))[..., np.newaxis]
    return luma + factor * (frames - luma)


def apply_policy(frames: np.ndarray, policy: AugmentationPolicy) -> np.ndarray:
    """Apply a policy to (..., H, W, 3) frames in [0, 1]; returns float64.

    The identity policy returns the input values bit for bit.  All stages
    run unclamped and the result is clipped to [0, 1] once, so brightness
    and saturation compose linearly before the final limit.
    """
    if frames.ndim < 3 or frames.shape[-1] != 3:
        raise ValidationError(
            f"expected (..., H, W, 3) frames, got shape {frames.shape}"
        )
    if not np.all(np.isfinite(frames)):
        raise ValidationError("frames contain non-finite values")
    out = frames.astype(np.float64)
    if policy.is_identity:
        return out
    if policy.hflip:
        out = hflip_frames(out)
    if policy.blur_sigma > 0.0:
        out = blur_frames(out, policy.blur_sigma)
    if policy.gamma != 1.0:
        out = gamma_frames(out, policy.gamma)
    if policy.brightness_delta != 0.0:
        out = brightness_frames(out, policy.brightness_delta)
    if policy.saturation_factor != 1.0:
        out = saturation_frames(out, policy.saturation_factor)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class AugmentedRef:
    """A segment reference with its (possibly identity) augmentation."""

    ref: SegmentRef
    policy: AugmentationPolicy
    copy_index: int = 0

    @property
    def label(self) -> EventClass:
        return self.ref.segment.label


def balance_classes(
    positives: Sequence[SegmentRef],
    negatives: Sequence[SegmentRef],
    seed: int = 0,
) -> tuple[list[AugmentedRef], list[AugmentedRef]]:
    """Top up the minority class with augmented copies until counts match.

    Originals keep the identity policy at copy_index 0.  Copies cycle over
    the minority originals round-robin with freshly sampled policies so no
    single segment dominates, and counts end exactly equal.
    """
    if not positives or not negatives:
        raise ValidationError("both classes must be non-empty to balance")
    pos = [AugmentedRef(ref=r, policy=IDENTITY_POLICY) for r in positives]
    neg = [AugmentedRef(ref=r, policy=IDENTITY_POLICY) for r in negatives]
    rng = np.random.default_rng(seed)
    minority, majority = (pos, neg) if len(pos) < len(neg) else (neg, pos)
    originals = list(minority)
    copies_per_original = [0] * len(originals)
    i = 0
    while len(minority) < len(majority):
        slot = i % len(originals)
        copies_per_original[slot] += 1
        minority.append(
            AugmentedRef(
                ref=originals[slot].ref,
                policy=sample_policy(rng),
                copy_index=copies_per_original[slot],
            )
        )
        i += 1
    return pos, neg


AUGMENTED_COLUMNS = ("case_id", "label", "start_sec", "end_sec", "policy", "copy_index")


def write_augmented_manifest(refs: Sequence[AugmentedRef], path) -> None:
    """CSV of augmented examples; floats via repr so parsing is lossless."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AUGMENTED_COLUMNS)
        for item in refs:
            seg = item.ref.segment
            writer.writerow(
                [
                    item.ref.case_id,
                    seg.label.value,
                    repr(seg.start_sec),
                    repr(seg.end_sec),
                    item.policy.to_string(),
                    item.copy_index,
                ]
            )


def read_augmented_manifest(path) -> list[AugmentedRef]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != AUGMENTED_COLUMNS:
            raise ValidationError(
                f"bad augmented manifest header {header!r}, "
                f"expected {AUGMENTED_COLUMNS!r}"
            )
        out = []
        for row in reader:
            if len(row) != len(AUGMENTED_COLUMNS):
                raise ValidationError(f"bad augmented manifest row {row!r}")
            case_id, label, start, end, policy, copy_index = row
            out.append(
                AugmentedRef(
                    ref=SegmentRef(
                        case_id=case_id,
                        segment=EventSegment(
                            label=EventClass(label),
                            start_sec=float(start),
                            end_sec=float(end),
                        ),
                    ),
                    policy=parse_policy(policy),
                    copy_index=int(copy_index),
                )
            )
        return out
