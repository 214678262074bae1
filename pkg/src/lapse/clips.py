"""Clip tiling and frame-index sampling.

Segments become fixed-geometry clips (90-frame windows at a 60-frame stride,
with an end-anchored tail so every frame is covered); each clip then yields a
10-frame index set, either randomly resampled per epoch for training or
evenly spaced for reproducible inference.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .annotations import CaseAnnotation, EventClass, EventSegment
from .errors import FrameReadError, SamplingError, TilingError

SEQUENCE_LENGTH = 10
CLIP_MAX_FRAMES = 90   # 3 s at 30 fps
CLIP_STRIDE = 60       # leaves a 1 s overlap between consecutive full windows
CLIP_MIN_FRAMES = 30   # 1 s floor for tiling


@dataclass(frozen=True)
class ClipSpec:
    """A frame-index window inside a segment; the training/inference unit.

    start_frame is absolute within the video so clips can be loaded without
    the parent annotation at hand.
    """

    case_id: str
    segment_ref: int
    start_frame: int
    length_frames: int
    label: EventClass

    def __post_init__(self):
        if self.start_frame < 0:
            raise TilingError(f"start_frame must be >= 0, got {self.start_frame}")
        if self.length_frames < 1:
            raise TilingError(
                f"length_frames must be >= 1, got {self.length_frames}"
            )


@dataclass(frozen=True)
class FrameIndexSet:
    """Ten strictly increasing frame offsets relative to the clip start."""

    indices: tuple[int, ...]

    def __post_init__(self):
        if len(self.indices) != SEQUENCE_LENGTH:
            raise SamplingError(
                f"expected {SEQUENCE_LENGTH} indices, got {len(self.indices)}"
            )
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise SamplingError(f"indices must be strictly increasing: {self.indices}")
        if self.indices[0] < 0:
            raise SamplingError(f"indices must be non-negative: {self.indices}")


def segment_frame_range(segment: EventSegment, fps: float) -> tuple[int, int]:
    """Absolute [start, end) frame indices of a segment at the given fps."""
    start = int(round(segment.start_sec * fps))
    end = int(round(segment.end_sec * fps))
    return start, end


def tile_segment(
    segment: EventSegment,
    fps: float,
    case_id: str = "",
    segment_ref: int = 0,
) -> list[ClipSpec]:
    """Cut a segment into clips of 60..90 frames.

    Segments shorter than 60 frames become a single whole-segment clip.
    Otherwise windows of up to 90 frames start every 60 frames while at least
    60 frames remain, and an end-anchored window is appended if the tail
    would otherwise be uncovered.  Consecutive full windows overlap by
    exactly 30 frames, and every segment frame lands in at least one clip.
    """
    seg_start, seg_end = segment_frame_range(segment, fps)
    n = seg_end - seg_start
    if n < CLIP_MIN_FRAMES:
        raise TilingError(
            f"segment has {n} frames at {fps} fps; minimum is {CLIP_MIN_FRAMES}"
        )

    def clip(offset: int, length: int) -> ClipSpec:
        return ClipSpec(
            case_id=case_id,
            segment_ref=segment_ref,
            start_frame=seg_start + offset,
            length_frames=length,
            label=segment.label,
        )

    if n < CLIP_STRIDE:
        return [clip(0, n)]

    windows: list[tuple[int, int]] = []
    start = 0
    while start + CLIP_STRIDE <= n:
        windows.append((start, min(CLIP_MAX_FRAMES, n - start)))
        start += CLIP_STRIDE
    last_end = windows[-1][0] + windows[-1][1]
    if last_end < n:
        windows.append((max(0, n - CLIP_MAX_FRAMES), min(CLIP_MAX_FRAMES, n)))
    seen = set()
    out = []
    for offset, length in windows:
        if (offset, length) not in seen:
            seen.add((offset, length))
            out.append(clip(offset, length))
    return out


def tile_case(case: CaseAnnotation) -> list[ClipSpec]:
    """Tile every segment of a case, skipping those below the 1 s floor."""
    clips = []
    for i, seg in enumerate(case.segments):
        seg_start, seg_end = segment_frame_range(seg, case.fps)
        if seg_end - seg_start < CLIP_MIN_FRAMES:
            continue
        clips.extend(tile_segment(seg, case.fps, case_id=case.case_id, segment_ref=i))
    return clips


def derive_clip_seed(
    global_seed: int, clip: ClipSpec, epoch: int, copy_index: int = 0
) -> int:
    """Stable per-(clip, epoch) seed so every epoch sees a fresh index set.

    Hash-based (not Python's salted hash) so runs are reproducible across
    processes.  copy_index separates augmented duplicates of one segment.
    """
    key = (
        f"{global_seed}|{clip.case_id}|{clip.segment_ref}|{clip.start_frame}"
        f"|{epoch}|{copy_index}"
    )
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:8], "little")


def input_dropout_sample(clip: ClipSpec, rng_seed: int) -> FrameIndexSet:
    """Draw 10 unique frame offsets uniformly without replacement, sorted."""
    if clip.length_frames < SEQUENCE_LENGTH:
        raise SamplingError(
            f"clip has {clip.length_frames} frames; need at least {SEQUENCE_LENGTH}"
        )
    rng = np.random.default_rng(rng_seed)
    picks = rng.choice(clip.length_frames, size=SEQUENCE_LENGTH, replace=False)
    return FrameIndexSet(indices=tuple(int(i) for i in sorted(picks)))


def deterministic_sample(clip: ClipSpec) -> FrameIndexSet:
    """Ten evenly spaced offsets: round(k*(L-1)/9) for k in 0..9."""
    length = clip.length_frames
    if length < SEQUENCE_LENGTH:
        raise SamplingError(
            f"clip has {length} frames; need at least {SEQUENCE_LENGTH}"
        )
    indices: list[int] = []
    for k in range(SEQUENCE_LENGTH):
        idx = int(np.floor(k * (length - 1) / (SEQUENCE_LENGTH - 1) + 0.5))
        while indices and idx <= indices[-1]:
            idx += 1
        indices.append(idx)
    return FrameIndexSet(indices=tuple(indices))


def load_clip_frames(source, clip: ClipSpec, frames: FrameIndexSet) -> np.ndarray:
    """Read the sampled frames of a clip in chronological order.

    Returns a (10, 224, 224, 3) float array in [0, 1].  Raises FrameReadError
    (carrying the frame index) on decode failure and SamplingError on
    out-of-range indices.
    """
    out = np.empty((SEQUENCE_LENGTH, 224, 224, 3), dtype=np.float32)
    for row, rel in enumerate(frames.indices):
        if rel >= clip.length_frames:
            raise SamplingError(
                f"frame offset {rel} outside clip of {clip.length_frames} frames"
            )
        absolute = clip.start_frame + rel
        try:
            image = source.read_frame(absolute)
        except FrameReadError:
            raise
        except Exception as exc:
            raise FrameReadError(f"failed to decode frame {absolute}: {exc}") from exc
        if image.shape != (224, 224, 3):
            raise FrameReadError(
                f"frame {absolute}: expected shape (224, 224, 3), got {image.shape}"
            )
        out[row] = image
    return out
