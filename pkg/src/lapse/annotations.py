"""Annotated-case data model: ingestion, validation, and dataset statistics.

An annotation file is a JSON document holding a list of cases.  Each case
describes one surgery video (id, fps, duration, relative video path) and its
labeled event segments in seconds.  Time not covered by any segment is
implicitly irrelevant; nothing is materialized for it at this layer.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import AnnotationParseError, ValidationError

DATA_ROOT_ENV = "LAPSE_DATA_ROOT"

DEFAULT_FPS = 30.0


class EventClass(Enum):
    """The four relevant surgical events plus the implicit background class."""

    ABDOMINAL_ACCESS = "abdominal_access"
    BLEEDING = "bleeding"
    COAG_TRANSECTION = "coag_transection"
    NEEDLE_PASSING = "needle_passing"
    IRRELEVANT = "irrelevant"

    @classmethod
    def relevant(cls) -> tuple["EventClass", ...]:
        return (
            cls.ABDOMINAL_ACCESS,
            cls.BLEEDING,
            cls.COAG_TRANSECTION,
            cls.NEEDLE_PASSING,
        )


# Display names used by reports and the CLI.
EVENT_DISPLAY = {
    EventClass.ABDOMINAL_ACCESS: "Abd. Access",
    EventClass.BLEEDING: "Bleeding",
    EventClass.COAG_TRANSECTION: "Coag./Tran.",
    EventClass.NEEDLE_PASSING: "Needle Passing",
    EventClass.IRRELEVANT: "Irrelevant",
}


@dataclass(frozen=True)
class EventSegment:
    """A contiguous annotated interval with a single label, in seconds."""

    label: EventClass
    start_sec: float
    end_sec: float

    @property
    def duration(self) -> float:
        return self.end_sec - self.start_sec

    def validate(self, case_id: str = "?", index: int = -1) -> None:
        if self.start_sec < 0:
            raise ValidationError(
                f"case {case_id!r} segment {index}: start_sec must be >= 0, "
                f"got {self.start_sec}"
            )
        if self.end_sec <= self.start_sec:
            raise ValidationError(
                f"case {case_id!r} segment {index}: end_sec ({self.end_sec}) must be "
                f"greater than start_sec ({self.start_sec})"
            )

    def overlaps(self, other: "EventSegment") -> bool:
        return self.start_sec < other.end_sec and other.start_sec < self.end_sec


@dataclass(frozen=True)
class CaseAnnotation:
    """One surgery video's identity, frame rate, and labeled segments.

    Segments are sorted by start time after construction; all instances are
    immutable and safe for concurrent reads.
    """

    case_id: str
    duration_sec: float
    video_path: str
    fps: float = DEFAULT_FPS
    segments: tuple[EventSegment, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(
            self, "segments", tuple(sorted(self.segments, key=lambda s: s.start_sec))
        )

    def validate(self) -> None:
        if self.fps <= 0:
            raise ValidationError(f"case {self.case_id!r}: fps must be > 0, got {self.fps}")
        if self.duration_sec <= 0:
            raise ValidationError(
                f"case {self.case_id!r}: duration_sec must be > 0, got {self.duration_sec}"
            )
        for i, seg in enumerate(self.segments):
            seg.validate(self.case_id, i)
            if seg.end_sec > self.duration_sec:
                raise ValidationError(
                    f"case {self.case_id!r} segment {i}: end_sec ({seg.end_sec}) exceeds "
                    f"case duration ({self.duration_sec})"
                )
        # Overlap between different non-irrelevant labels is an annotation bug;
        # same-label and irrelevant overlaps are tolerated.
        for i, a in enumerate(self.segments):
            if a.label is EventClass.IRRELEVANT:
                continue
            for j in range(i + 1, len(self.segments)):
                b = self.segments[j]
                if b.start_sec >= a.end_sec:
                    break
                if b.label is EventClass.IRRELEVANT or b.label is a.label:
                    continue
                if a.overlaps(b):
                    raise ValidationError(
                        f"case {self.case_id!r}: segment {i} ({a.label.value}) overlaps "
                        f"segment {j} ({b.label.value})"
                    )

    def resolve_video_path(self, data_root: str | None = None) -> str:
        """Resolve the relative video path against data_root or LAPSE_DATA_ROOT.

        URIs and absolute paths pass through unchanged (Path would mangle
        the scheme's double slash).
        """
        if "://" in self.video_path or Path(self.video_path).is_absolute():
            return self.video_path
        root = data_root if data_root is not None else os.environ.get(DATA_ROOT_ENV, "")
        return str(Path(root) / self.video_path) if root else self.video_path


def _segment_from_dict(raw: dict, case_id: str, index: int) -> EventSegment:
    for key in ("label", "start_sec", "end_sec"):
        if key not in raw:
            raise AnnotationParseError(
                f"case {case_id!r} segment {index}: missing field {key!r}"
            )
    try:
        label = EventClass(raw["label"])
    except ValueError:
        raise AnnotationParseError(
            f"case {case_id!r} segment {index}: unknown label {raw['label']!r}"
        ) from None
    try:
        start = float(raw["start_sec"])
        end = float(raw["end_sec"])
    except (TypeError, ValueError):
        raise AnnotationParseError(
            f"case {case_id!r} segment {index}: start_sec/end_sec must be numbers"
        ) from None
    return EventSegment(label=label, start_sec=start, end_sec=end)


def _case_from_dict(raw: dict, index: int) -> CaseAnnotation:
    if not isinstance(raw, dict):
        raise AnnotationParseError(f"case entry {index} is not an object")
    case_id = raw.get("case_id")
    if not isinstance(case_id, str) or not case_id:
        raise AnnotationParseError(f"case entry {index}: missing or empty 'case_id'")
    for key in ("duration_sec", "video_path"):
        if key not in raw:
            raise AnnotationParseError(f"case {case_id!r}: missing field {key!r}")
    try:
        duration = float(raw["duration_sec"])
        fps = float(raw.get("fps", DEFAULT_FPS))
    except (TypeError, ValueError):
        raise AnnotationParseError(
            f"case {case_id!r}: duration_sec/fps must be numbers"
        ) from None
    segments = [
        _segment_from_dict(s, case_id, i) for i, s in enumerate(raw.get("segments", []))
    ]
    return CaseAnnotation(
        case_id=case_id,
        duration_sec=duration,
        video_path=str(raw["video_path"]),
        fps=fps,
        segments=tuple(segments),
    )


def parse_annotations(path: str | Path) -> list[CaseAnnotation]:
    """Load and validate an annotation file.

    Raises AnnotationParseError for malformed content (with line/field
    context) and ValidationError for invariant violations.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise AnnotationParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AnnotationParseError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, list):
        raise AnnotationParseError(f"{path}: top level must be a list of cases")
    cases = [_case_from_dict(raw, i) for i, raw in enumerate(doc)]
    seen: set[str] = set()
    for case in cases:
        if case.case_id in seen:
            raise ValidationError(f"duplicate case_id {case.case_id!r}")
        seen.add(case.case_id)
        case.validate()
    return cases


def serialize_annotations(cases: list[CaseAnnotation]) -> str:
    """Inverse of parse_annotations; parse(serialize(x)) is structurally equal."""
    doc = [
        {
            "case_id": c.case_id,
            "fps": c.fps,
            "duration_sec": c.duration_sec,
            "video_path": c.video_path,
            "segments": [
                {"label": s.label.value, "start_sec": s.start_sec, "end_sec": s.end_sec}
                for s in c.segments
            ],
        }
        for c in cases
    ]
    return json.dumps(doc, indent=2)


def write_annotations(cases: list[CaseAnnotation], path: str | Path) -> None:
    Path(path).write_text(serialize_annotations(cases))


def filter_min_duration(
    cases: list[CaseAnnotation], min_sec: float = 1.0
) -> list[CaseAnnotation]:
    """Drop segments shorter than min_sec (inclusive boundary: exactly min_sec kept).

    Cases are retained even if no segment survives; they still contribute
    negative material downstream.
    """
    if min_sec <= 0:
        raise ValueError(f"min_sec must be > 0, got {min_sec}")
    out = []
    for case in cases:
        kept = tuple(s for s in case.segments if s.duration >= min_sec)
        out.append(
            CaseAnnotation(
                case_id=case.case_id,
                duration_sec=case.duration_sec,
                video_path=case.video_path,
                fps=case.fps,
                segments=kept,
            )
        )
    return out


@dataclass(frozen=True)
class EventStatistics:
    num_cases: int
    num_segments: int
    min_duration: float
    max_duration: float
    total_duration: float


def dataset_statistics(
    cases: list[CaseAnnotation],
) -> dict[EventClass, EventStatistics]:
    """Per-event counts and duration totals for the four relevant events.

    Totals are exact sums of segment durations, reported to 2 decimals.
    """
    stats: dict[EventClass, EventStatistics] = {}
    for event in EventClass.relevant():
        case_ids = set()
        durations = []
        for case in cases:
            matched = [s.duration for s in case.segments if s.label is event]
            if matched:
                case_ids.add(case.case_id)
                durations.extend(matched)
        stats[event] = EventStatistics(
            num_cases=len(case_ids),
            num_segments=len(durations),
            min_duration=round(min(durations), 2) if durations else 0.0,
            max_duration=round(max(durations), 2) if durations else 0.0,
            total_duration=round(sum(durations), 2),
        )
    return stats


def format_statistics(stats: dict[EventClass, EventStatistics]) -> str:
    """Render statistics as a fixed-width table."""
    header = (
        f"{'Event':<16}{'Cases':>8}{'Segments':>10}"
        f"{'Min dur (s)':>13}{'Max dur (s)':>13}{'Total (s)':>12}"
    )
    lines = [header, "-" * len(header)]
    for event in EventClass.relevant():
        s = stats[event]
        lines.append(
            f"{EVENT_DISPLAY[event]:<16}{s.num_cases:>8}{s.num_segments:>10}"
            f"{s.min_duration:>13.2f}{s.max_duration:>13.2f}{s.total_duration:>12.2f}"
        )
    return "\n".join(lines)
