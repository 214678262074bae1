"""Whole-video event timelines from sliding-window classification.

Windows of 3 s advance in 1 s steps.  Each window is sampled to 10 frames,
scored by all four binary event models, and assigned the highest-scoring
event if that score clears 0.5, otherwise it stays irrelevant.  One
TimelineEntry per window; an optional majority-vote smoothing pass cleans up
isolated labels.  Timelines export to CSV, JSON, and SVG.
"""
from __future__ import annotations

import html
import json
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

import numpy as np

from .annotations import EVENT_DISPLAY, CaseAnnotation, EventClass
from .clips import ClipSpec, deterministic_sample, load_clip_frames
from .errors import FrameReadError, InferenceError, ValidationError

WINDOW_SEC = 3.0
STRIDE_SEC = 1.0
MIN_WINDOW_SEC = 1.0
SCORE_THRESHOLD = 0.5
FAILED_WINDOW_TOLERANCE = 0.5

EVENT_COLORS = {
    EventClass.ABDOMINAL_ACCESS: "#ffd700",
    EventClass.BLEEDING: "#8b0000",
    EventClass.COAG_TRANSECTION: "#228b22",
    EventClass.NEEDLE_PASSING: "#4169e1",
    EventClass.IRRELEVANT: "#b0b0b0",
}

PROB_COLUMNS = {
    EventClass.ABDOMINAL_ACCESS: "p_abd",
    EventClass.BLEEDING: "p_bleed",
    EventClass.COAG_TRANSECTION: "p_coag",
    EventClass.NEEDLE_PASSING: "p_needle",
}
TIMELINE_COLUMNS = ("start_sec", "end_sec") + tuple(
    PROB_COLUMNS[e] for e in EventClass.relevant()
) + ("assigned",)


@dataclass(frozen=True)
class TimelineEntry:
    """One scored window: per-event probabilities plus the assigned label."""

    start_sec: float
    end_sec: float
    probs: Mapping[EventClass, float]
    assigned: EventClass


@dataclass(frozen=True)
class Timeline:
    case_id: str
    window_sec: float
    stride_sec: float
    entries: tuple[TimelineEntry, ...]
    failed: tuple[tuple[float, float], ...] = ()


class FramePredictor(Protocol):
    """A binary model over a sampled 10-frame stack."""

    def predict_proba_frames(self, frames: np.ndarray) -> np.ndarray: ...


@dataclass
class FrameClassifier:
    """Backbone plus trained head, packaged for window scoring."""

    backbone: object
    classifier: object

    def predict_proba_frames(self, frames: np.ndarray) -> np.ndarray:
        features = self.backbone.extract(np.asarray(frames, dtype=np.float64))
        return self.classifier.predict_proba(features[np.newaxis, ...])[0]


def enumerate_windows(
    duration_sec: float,
    window_sec: float = WINDOW_SEC,
    stride_sec: float = STRIDE_SEC,
) -> list[tuple[float, float]]:
    """Window spans covering [0, duration): stride steps plus an end-anchored
    tail, or a single whole-video window when the video is shorter than one
    window."""
    if window_sec <= 0 or stride_sec <= 0:
        raise ValidationError("window_sec and stride_sec must be positive")
    if duration_sec < MIN_WINDOW_SEC:
        raise InferenceError(
            f"video of {duration_sec} s is below the {MIN_WINDOW_SEC} s minimum"
        )
    if duration_sec < window_sec:
        return [(0.0, duration_sec)]
    windows: list[tuple[float, float]] = []
    start = 0.0
    while start + window_sec <= duration_sec + 1e-9:
        windows.append((start, start + window_sec))
        start += stride_sec
    if windows[-1][1] < duration_sec - 1e-9:
        tail = (duration_sec - window_sec, duration_sec)
        if tail != windows[-1]:
            windows.append(tail)
    return windows


def assign_label(
    probs: Mapping[EventClass, float], threshold: float = SCORE_THRESHOLD
) -> EventClass:
    """The argmax event when its probability clears the threshold, else
    irrelevant.  Ties resolve to the first event in declaration order."""
    best_event = EventClass.IRRELEVANT
    best_score = -np.inf
    for event in EventClass.relevant():
        score = float(probs[event])
        if score > best_score:
            best_event = event
            best_score = score
    return best_event if best_score > threshold else EventClass.IRRELEVANT


def infer_timeline(
    source,
    models: Mapping[EventClass, FramePredictor],
    case: CaseAnnotation,
    window_sec: float = WINDOW_SEC,
    stride_sec: float = STRIDE_SEC,
    threshold: float = SCORE_THRESHOLD,
) -> Timeline:
    """Score every window of a video with the four binary event models.

    Each window gets the deterministic 10-frame sample, so repeated runs are
    bit-identical.  Windows whose frames cannot be read are recorded in
    Timeline.failed and skipped; more than half the windows failing aborts
    the run.
    """
    missing = [e.value for e in EventClass.relevant() if e not in models]
    if missing:
        raise ValidationError(f"missing models for events: {', '.join(missing)}")
    windows = enumerate_windows(case.duration_sec, window_sec, stride_sec)
    entries: list[TimelineEntry] = []
    failed: list[tuple[float, float]] = []
    for start, end in windows:
        start_frame = int(round(start * case.fps))
        length = int(round(end * case.fps)) - start_frame
        clip = ClipSpec(
            case_id=case.case_id,
            segment_ref=-1,
            start_frame=start_frame,
            length_frames=length,
            label=EventClass.IRRELEVANT,
        )
        try:
            frames = load_clip_frames(source, clip, deterministic_sample(clip))
        except FrameReadError:
            failed.append((start, end))
            continue
        probs = {
            event: float(models[event].predict_proba_frames(frames)[1])
            for event in EventClass.relevant()
        }
        entries.append(
            TimelineEntry(
                start_sec=start,
                end_sec=end,
                probs=probs,
                assigned=assign_label(probs, threshold),
            )
        )
    if len(failed) > FAILED_WINDOW_TOLERANCE * len(windows):
        raise InferenceError(
            f"{len(failed)} of {len(windows)} windows failed to decode"
        )
    return Timeline(
        case_id=case.case_id,
        window_sec=window_sec,
        stride_sec=stride_sec,
        entries=tuple(entries),
        failed=tuple(failed),
    )


def smooth_timeline(timeline: Timeline, median_width: int = 3) -> Timeline:
    """Majority-vote the assigned labels in place, left to right.

    Each window's vote covers median_width entries centered on it (truncated
    at the edges) and sees labels already updated to its left; a tie keeps
    the entry's original label.  Probabilities are untouched.  Width 1 is
    the identity.
    """
    if median_width < 1 or median_width % 2 == 0:
        raise ValidationError(f"median_width must be odd and >= 1, got {median_width}")
    labels = [entry.assigned for entry in timeline.entries]
    if median_width > 1:
        original = list(labels)
        half = median_width // 2
        for i in range(len(labels)):
            window = labels[max(0, i - half) : i + half + 1]
            counts: dict[EventClass, int] = {}
            for value in window:
                counts[value] = counts.get(value, 0) + 1
            top = max(counts.values())
            winners = [label for label, n in counts.items() if n == top]
            labels[i] = winners[0] if len(winners) == 1 else original[i]
    entries = tuple(
        TimelineEntry(
            start_sec=e.start_sec,
            end_sec=e.end_sec,
            probs=e.probs,
            assigned=label,
        )
        for e, label in zip(timeline.entries, labels)
    )
    return Timeline(
        case_id=timeline.case_id,
        window_sec=timeline.window_sec,
        stride_sec=timeline.stride_sec,
        entries=entries,
        failed=timeline.failed,
    )


def event_intervals(timeline: Timeline, event: EventClass) -> list[tuple[float, float]]:
    """Merged spans of the windows assigned to one event."""
    return _merge_intervals(
        [(e.start_sec, e.end_sec) for e in timeline.entries if e.assigned == event]
    )


def _merge_intervals(intervals: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[list[float]] = []
    for start, end in sorted(intervals):
        if end <= start:
            continue
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [(a, b) for a, b in merged]


def interval_iou(
    predicted: Sequence[tuple[float, float]],
    truth: Sequence[tuple[float, float]],
) -> float:
    """Length of intersection over length of union of two interval sets."""
    pred = _merge_intervals(predicted)
    true = _merge_intervals(truth)
    union = sum(b - a for a, b in _merge_intervals(list(pred) + list(true)))
    if union == 0.0:
        return 0.0
    inter = 0.0
    for ps, pe in pred:
        for ts, te in true:
            inter += max(0.0, min(pe, te) - max(ps, ts))
    return inter / union


def timeline_to_csv(timeline: Timeline) -> str:
    """CSV with '#' metadata comments so parsing recovers the full object.

    Probabilities are written with repr, which keeps well over the six
    decimals the format promises.
    """
    lines = [
        f"# case_id={timeline.case_id}",
        f"# window_sec={timeline.window_sec!r}",
        f"# stride_sec={timeline.stride_sec!r}",
    ]
    for start, end in timeline.failed:
        lines.append(f"# failed={start!r},{end!r}")
    lines.append(",".join(TIMELINE_COLUMNS))
    for entry in timeline.entries:
        cells = [repr(entry.start_sec), repr(entry.end_sec)]
        cells += [repr(entry.probs[e]) for e in EventClass.relevant()]
        cells.append(entry.assigned.value)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def timeline_from_csv(text: str) -> Timeline:
    meta: dict[str, str] = {}
    failed: list[tuple[float, float]] = []
    rows: list[str] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" not in body:
                raise ValidationError(f"bad timeline comment {line!r}")
            key, value = body.split("=", 1)
            if key == "failed":
                start, end = value.split(",")
                failed.append((float(start), float(end)))
            else:
                meta[key] = value
        else:
            rows.append(line)
    for key in ("case_id", "window_sec", "stride_sec"):
        if key not in meta:
            raise ValidationError(f"timeline CSV missing {key!r} comment")
    if not rows or rows[0] != ",".join(TIMELINE_COLUMNS):
        raise ValidationError("timeline CSV missing header row")
    entries = []
    for row in rows[1:]:
        parts = row.split(",")
        if len(parts) != len(TIMELINE_COLUMNS):
            raise ValidationError(f"bad timeline row {row!r}")
        probs = {
            event: float(parts[2 + i])
            for i, event in enumerate(EventClass.relevant())
        }
        entries.append(
            TimelineEntry(
                start_sec=float(parts[0]),
                end_sec=float(parts[1]),
                probs=probs,
                assigned=EventClass(parts[-1]),
            )
        )
    return Timeline(
        case_id=meta["case_id"],
        window_sec=float(meta["window_sec"]),
        stride_sec=float(meta["stride_sec"]),
        entries=tuple(entries),
        failed=tuple(failed),
    )


def write_timeline_csv(timeline: Timeline, path) -> None:
    with open(path, "w") as fh:
        fh.write(timeline_to_csv(timeline))


def read_timeline_csv(path) -> Timeline:
    with open(path) as fh:
        return timeline_from_csv(fh.read())


def timeline_to_json(timeline: Timeline) -> str:
    payload = {
        "case_id": timeline.case_id,
        "window_sec": timeline.window_sec,
        "stride_sec": timeline.stride_sec,
        "entries": [
            {
                "start_sec": e.start_sec,
                "end_sec": e.end_sec,
                "probs": {ev.value: e.probs[ev] for ev in EventClass.relevant()},
                "assigned": e.assigned.value,
            }
            for e in timeline.entries
        ],
        "failed": [list(w) for w in timeline.failed],
    }
    return json.dumps(payload, indent=2) + "\n"


def timeline_from_json(text: str) -> Timeline:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"bad timeline JSON: {exc}") from exc
    try:
        return Timeline(
            case_id=payload["case_id"],
            window_sec=float(payload["window_sec"]),
            stride_sec=float(payload["stride_sec"]),
            entries=tuple(
                TimelineEntry(
                    start_sec=float(e["start_sec"]),
                    end_sec=float(e["end_sec"]),
                    probs={
                        EventClass(name): float(p) for name, p in e["probs"].items()
                    },
                    assigned=EventClass(e["assigned"]),
                )
                for e in payload["entries"]
            ),
            failed=tuple((float(a), float(b)) for a, b in payload.get("failed", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad timeline JSON structure: {exc}") from exc


SVG_WIDTH = 1000
SVG_TRACK_HEIGHT = 60
SVG_MARGIN = 40


def timeline_to_svg(timeline: Timeline) -> str:
    """One colored bar per window on a single track (exactly one rect per
    entry; the legend uses circles).  Overlapping windows blend through
    partial opacity."""
    duration = max((e.end_sec for e in timeline.entries), default=1.0)
    height = SVG_MARGIN + SVG_TRACK_HEIGHT + 70
    scale = (SVG_WIDTH - 2 * SVG_MARGIN) / max(duration, 1e-9)

    def x(t: float) -> float:
        return SVG_MARGIN + t * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" '
        f'height="{height}" viewBox="0 0 {SVG_WIDTH} {height}">',
        f'<text x="{SVG_MARGIN}" y="20" font-size="14" font-family="sans-serif">'
        f"{html.escape(timeline.case_id)}</text>",
        f'<line x1="{SVG_MARGIN}" y1="{SVG_MARGIN + SVG_TRACK_HEIGHT + 6}" '
        f'x2="{SVG_WIDTH - SVG_MARGIN}" y2="{SVG_MARGIN + SVG_TRACK_HEIGHT + 6}" '
        f'stroke="#888888" stroke-width="1"/>',
    ]
    for entry in timeline.entries:
        width = max((entry.end_sec - entry.start_sec) * scale, 0.5)
        top = (
            f"{html.escape(entry.assigned.value)} "
            f"[{entry.start_sec:.1f}, {entry.end_sec:.1f})"
        )
        parts.append(
            f'<rect x="{x(entry.start_sec):.2f}" y="{SVG_MARGIN}" '
            f'width="{width:.2f}" height="{SVG_TRACK_HEIGHT}" '
            f'fill="{EVENT_COLORS[entry.assigned]}" fill-opacity="0.45">'
            f"<title>{top}</title></rect>"
        )
    legend_y = SVG_MARGIN + SVG_TRACK_HEIGHT + 34
    legend_x = SVG_MARGIN
    for event in list(EventClass.relevant()) + [EventClass.IRRELEVANT]:
        parts.append(
            f'<circle cx="{legend_x}" cy="{legend_y - 4}" r="5" '
            f'fill="{EVENT_COLORS[event]}"/>'
        )
        parts.append(
            f'<text x="{legend_x + 10}" y="{legend_y}" font-size="10" '
            f'font-family="sans-serif">{html.escape(EVENT_DISPLAY[event])}</text>'
        )
        legend_x += 140
    parts.append(
        f'<text x="{SVG_MARGIN}" y="{height - 8}" font-size="10" '
        f'font-family="sans-serif">0 s</text>'
    )
    parts.append(
        f'<text x="{SVG_WIDTH - SVG_MARGIN - 30}" y="{height - 8}" font-size="10" '
        f'font-family="sans-serif">{duration:.0f} s</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_timeline_svg(timeline: Timeline, path) -> None:
    with open(path, "w") as fh:
        fh.write(timeline_to_svg(timeline))
