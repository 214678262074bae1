"""Shared fixtures: synthetic annotation sets and feature providers."""
from __future__ import annotations

import hashlib

import numpy as np
import pytest

from lapse.annotations import CaseAnnotation, EventClass, EventSegment, write_annotations

# (cases, segments, min_dur, max_dur, total_dur) per event for the big fixture.
REFERENCE_ROWS = {
    EventClass.ABDOMINAL_ACCESS: (111, 178, 1.0, 11.0, 329.84),
    EventClass.BLEEDING: (41, 81, 2.0, 108.0, 1577.20),
    EventClass.COAG_TRANSECTION: (12, 584, 2.0, 43.0, 2929.54),
    EventClass.NEEDLE_PASSING: (48, 510, 2.0, 110.0, 7036.43),
}


def reference_durations(num_segments: int, min_dur: float, max_dur: float, total: float):
    """Segment durations hitting the exact extremes and 2-decimal total."""
    rest = num_segments - 2
    share = round((total - min_dur - max_dur) / rest, 2)
    durations = [min_dur, max_dur] + [share] * rest
    durations[-1] = round(durations[-1] + total - round(sum(durations), 2), 2)
    assert round(sum(durations), 2) == total
    assert all(d >= 1.0 for d in durations)
    return durations


def build_reference_cases() -> list[CaseAnnotation]:
    """A dataset whose per-event statistics match REFERENCE_ROWS exactly.

    Each event lives in its own pool of cases so per-event case counts are
    independent; segments are laid out sequentially with 1 s gaps.
    """
    cases = []
    for prefix, (event, row) in zip("abcd", REFERENCE_ROWS.items()):
        num_cases, num_segments, min_dur, max_dur, total = row
        durations = reference_durations(num_segments, min_dur, max_dur, total)
        per_case: dict[int, list[float]] = {i: [] for i in range(num_cases)}
        for i, dur in enumerate(durations):
            per_case[i % num_cases].append(dur)
        for i, durs in per_case.items():
            segments = []
            cursor = 1.0
            for dur in durs:
                segments.append(
                    EventSegment(label=event, start_sec=cursor, end_sec=cursor + dur)
                )
                cursor += dur + 1.0
            case_id = f"{prefix}{i:03d}"
            cases.append(
                CaseAnnotation(
                    case_id=case_id,
                    duration_sec=cursor + 1.0,
                    video_path=f"synthetic://{case_id}?frames={int((cursor + 1.0) * 30)}",
                    fps=30.0,
                    segments=tuple(segments),
                )
            )
    return cases


def make_case(
    case_id: str,
    layout: list[tuple[EventClass, float, float]],
    duration_sec: float = 120.0,
    fps: float = 30.0,
) -> CaseAnnotation:
    return CaseAnnotation(
        case_id=case_id,
        duration_sec=duration_sec,
        video_path=f"synthetic://{case_id}?frames={int(duration_sec * fps)}",
        fps=fps,
        segments=tuple(
            EventSegment(label=label, start_sec=s, end_sec=e) for label, s, e in layout
        ),
    )


def small_dataset(num_cases: int = 6) -> list[CaseAnnotation]:
    """A few cases with all four events, segments long enough to tile."""
    cases = []
    for i in range(num_cases):
        shift = 0.5 * i
        layout = [
            (EventClass.ABDOMINAL_ACCESS, 2.0 + shift, 8.0 + shift),
            (EventClass.BLEEDING, 15.0 + shift, 22.0 + shift),
            (EventClass.COAG_TRANSECTION, 30.0 + shift, 41.0 + shift),
            (EventClass.NEEDLE_PASSING, 50.0 + shift, 57.0 + shift),
            (EventClass.BLEEDING, 70.0 + shift, 74.0 + shift),
            (EventClass.NEEDLE_PASSING, 100.0 + shift, 105.0 + shift),
        ]
        cases.append(make_case(f"case{i:02d}", layout))
    return cases


@pytest.fixture
def annotations_path(tmp_path):
    path = tmp_path / "annotations.json"
    write_annotations(small_dataset(), path)
    return path


@pytest.fixture
def reference_annotations_path(tmp_path):
    path = tmp_path / "reference.json"
    write_annotations(build_reference_cases(), path)
    return path


class DirectionalProvider:
    """Feature provider emitting label-dependent directions plus noise.

    Features are mu * direction(label) + N(0, sigma); the draw is keyed by
    (example identity, epoch) so training epochs see fresh noise while
    validation (epoch None) stays fixed.
    """

    def __init__(self, feature_dim: int = 16, sigma: float = 0.5, mu: float = 1.0, seq_len: int = 10):
        self.feature_dim = feature_dim
        self.sigma = sigma
        self.mu = mu
        self.seq_len = seq_len
        direction = np.ones(feature_dim) / np.sqrt(feature_dim)
        self._directions = {0: -mu * direction, 1: mu * direction}

    def features_for(self, example, epoch):
        key = (
            f"{example.clip.case_id}|{example.clip.start_frame}"
            f"|{example.copy_index}|{-1 if epoch is None else epoch}"
        )
        digest = hashlib.sha256(key.encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        base = self._directions[example.label]
        noise = rng.normal(0.0, self.sigma, size=(self.seq_len, self.feature_dim))
        return base + noise
