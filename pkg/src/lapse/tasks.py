"""One-vs-rest binary task construction and train/test splitting.

Each of the four relevant events gets its own binary task: segments carrying
that label are positives, every other labeled segment is a negative, and
unlabeled gaps between annotations are materialized as irrelevant negative
segments so background surgery time is represented.
"""
from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from pathlib import Path

from .annotations import CaseAnnotation, EventClass, EventSegment
from .errors import SplitError, TaskError

GAP_MIN_SEC = 1.0


@dataclass(frozen=True)
class SegmentRef:
    """A (case, segment) pair as it travels through manifests."""

    case_id: str
    segment: EventSegment


@dataclass(frozen=True)
class BinaryTask:
    positive_class: EventClass
    positives: tuple[SegmentRef, ...]
    negatives: tuple[SegmentRef, ...]


def materialize_gaps(case: CaseAnnotation, min_sec: float = GAP_MIN_SEC) -> list[EventSegment]:
    """Irrelevant segments for unlabeled time between consecutive annotations.

    Only gaps strictly between labeled segments are produced (video lead-in
    and tail stay implicit); gaps shorter than min_sec are skipped.
    """
    gaps = []
    covered_until: float | None = None
    for seg in case.segments:
        if covered_until is not None and seg.start_sec - covered_until >= min_sec:
            gaps.append(
                EventSegment(
                    label=EventClass.IRRELEVANT,
                    start_sec=covered_until,
                    end_sec=seg.start_sec,
                )
            )
        covered_until = seg.end_sec if covered_until is None else max(covered_until, seg.end_sec)
    return gaps


def build_binary_task(
    cases: list[CaseAnnotation], positive: EventClass
) -> BinaryTask:
    """Split all labeled material into positives vs everything else."""
    if positive is EventClass.IRRELEVANT:
        raise TaskError("positive class must be one of the four relevant events")
    positives: list[SegmentRef] = []
    negatives: list[SegmentRef] = []
    for case in cases:
        for seg in case.segments:
            ref = SegmentRef(case.case_id, seg)
            if seg.label is positive:
                positives.append(ref)
            else:
                negatives.append(ref)
        for gap in materialize_gaps(case):
            negatives.append(SegmentRef(case.case_id, gap))
    if not positives:
        raise TaskError(f"no segments labeled {positive.value!r} in the dataset")
    return BinaryTask(
        positive_class=positive,
        positives=tuple(positives),
        negatives=tuple(negatives),
    )


@dataclass(frozen=True)
class SplitManifest:
    train: tuple[SegmentRef, ...]
    test: tuple[SegmentRef, ...]
    seed: int


def _split_class(refs: list[SegmentRef], ratio: float, rng: random.Random):
    n_train = round(ratio * len(refs))
    # Keep at least one reference on each side so both splits stay usable.
    n_train = min(max(n_train, 1), len(refs) - 1)
    shuffled = list(refs)
    rng.shuffle(shuffled)
    return shuffled[:n_train], shuffled[n_train:]


def split_train_test(
    task: BinaryTask, ratio: float = 0.8, seed: int = 0
) -> SplitManifest:
    """Stratified segment-level split, deterministic in (task, ratio, seed)."""
    if not 0 < ratio < 1:
        raise SplitError(f"ratio must be in (0, 1), got {ratio}")
    if len(task.positives) < 2 or len(task.negatives) < 2:
        raise SplitError(
            f"need at least 2 positives and 2 negatives to split, got "
            f"{len(task.positives)} / {len(task.negatives)}"
        )
    rng = random.Random(seed)
    train_pos, test_pos = _split_class(list(task.positives), ratio, rng)
    train_neg, test_neg = _split_class(list(task.negatives), ratio, rng)
    return SplitManifest(
        train=tuple(train_pos + train_neg),
        test=tuple(test_pos + test_neg),
        seed=seed,
    )


def split_by_case(
    task: BinaryTask, ratio: float = 0.8, seed: int = 0
) -> SplitManifest:
    """Case-level split: no surgery contributes to both train and test.

    Offered as leakage hygiene; the segment-level split is the default.
    """
    if not 0 < ratio < 1:
        raise SplitError(f"ratio must be in (0, 1), got {ratio}")
    case_ids = sorted({r.case_id for r in task.positives + task.negatives})
    if len(case_ids) < 2:
        raise SplitError("need at least 2 cases for a case-level split")
    rng = random.Random(seed)
    rng.shuffle(case_ids)
    n_train = min(max(round(ratio * len(case_ids)), 1), len(case_ids) - 1)
    train_cases = set(case_ids[:n_train])
    all_refs = task.positives + task.negatives
    train = tuple(r for r in all_refs if r.case_id in train_cases)
    test = tuple(r for r in all_refs if r.case_id not in train_cases)
    if not train or not test:
        raise SplitError("case-level split left one side empty")
    return SplitManifest(train=train, test=test, seed=seed)


MANIFEST_COLUMNS = ("case_id", "label", "start_sec", "end_sec", "split")


def write_split_manifest(manifest: SplitManifest, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for split_name, refs in (("train", manifest.train), ("test", manifest.test)):
            for ref in refs:
                writer.writerow(
                    [
                        ref.case_id,
                        ref.segment.label.value,
                        repr(ref.segment.start_sec),
                        repr(ref.segment.end_sec),
                        split_name,
                    ]
                )


def read_split_manifest(path: str | Path, seed: int = 0) -> SplitManifest:
    train, test = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_COLUMNS:
            raise SplitError(f"{path}: expected columns {MANIFEST_COLUMNS}")
        for row in reader:
            ref = SegmentRef(
                case_id=row["case_id"],
                segment=EventSegment(
                    label=EventClass(row["label"]),
                    start_sec=float(row["start_sec"]),
                    end_sec=float(row["end_sec"]),
                ),
            )
            if row["split"] == "train":
                train.append(ref)
            elif row["split"] == "test":
                test.append(ref)
            else:
                raise SplitError(f"{path}: unknown split {row['split']!r}")
    return SplitManifest(train=tuple(train), test=tuple(test), seed=seed)
