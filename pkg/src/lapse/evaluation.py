"""Binary classification metrics and the per-event results table."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .annotations import EVENT_DISPLAY, EventClass
from .errors import ValidationError

# column order of the rendered table
REPORT_EVENT_ORDER = (
    EventClass.ABDOMINAL_ACCESS,
    EventClass.NEEDLE_PASSING,
    EventClass.BLEEDING,
    EventClass.COAG_TRANSECTION,
)
MISSING_CELL = "—"  # em dash marks events a model was not run on


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts with class 1 as positive."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(y_true: np.ndarray, y_pred: np.ndarray) -> ConfusionMatrix:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValidationError(
            f"shape mismatch: y_true {y_true.shape}, y_pred {y_pred.shape}"
        )
    if y_true.size == 0:
        raise ValidationError("cannot build a confusion matrix from no samples")
    bad = set(np.unique(y_true)) | set(np.unique(y_pred))
    if not bad <= {0, 1}:
        raise ValidationError(f"labels must be 0 or 1, got {sorted(bad)}")
    return ConfusionMatrix(
        tp=int(np.sum((y_true == 1) & (y_pred == 1))),
        fp=int(np.sum((y_true == 0) & (y_pred == 1))),
        tn=int(np.sum((y_true == 0) & (y_pred == 0))),
        fn=int(np.sum((y_true == 1) & (y_pred == 0))),
    )


@dataclass(frozen=True)
class ClassMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    support: int = 0


def metrics_from_confusion(cm: ConfusionMatrix) -> ClassMetrics:
    """Accuracy, precision, recall, F1; degenerate denominators give 0.0."""
    total = cm.total
    accuracy = (cm.tp + cm.tn) / total if total else 0.0
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall
        else 0.0
    )
    return ClassMetrics(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        support=cm.tp + cm.fn,
    )


def binary_metrics(y_true: np.ndarray, y_pred: np.ndarray) -> ClassMetrics:
    return metrics_from_confusion(confusion(y_true, y_pred))


@dataclass(frozen=True)
class ReportRow:
    """One (backbone, head) pair's per-event results; events may be missing."""

    backbone: str
    head: str
    cells: Mapping[EventClass, ClassMetrics]

    @property
    def model(self) -> str:
        return f"{self.backbone}-{self.head}"


def _average(cells: Mapping[EventClass, ClassMetrics]) -> ClassMetrics | None:
    present = [cells[e] for e in REPORT_EVENT_ORDER if e in cells]
    if not present:
        return None
    return ClassMetrics(
        accuracy=float(np.mean([m.accuracy for m in present])),
        precision=float(np.mean([m.precision for m in present])),
        recall=float(np.mean([m.recall for m in present])),
        f1=float(np.mean([m.f1 for m in present])),
        support=sum(m.support for m in present),
    )


def _cell_text(m: ClassMetrics | None) -> str:
    if m is None:
        return MISSING_CELL
    return f"{m.accuracy * 100:.2f} | {m.f1 * 100:.2f}"


def format_report(rows: Sequence[ReportRow]) -> str:
    """Fixed-width table: one model per row, 'Acc | F1' percent cells.

    The final column averages each metric over the events the model was
    actually evaluated on.
    """
    headers = ["Model"] + [EVENT_DISPLAY[e] for e in REPORT_EVENT_ORDER] + ["Average"]
    table: list[list[str]] = [headers]
    for row in rows:
        cells = [row.model]
        for event in REPORT_EVENT_ORDER:
            cells.append(_cell_text(row.cells.get(event)))
        cells.append(_cell_text(_average(row.cells)))
        table.append(cells)
    widths = [max(len(line[i]) for line in table) for i in range(len(headers))]
    lines = []
    for i, line in enumerate(table):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(line)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


REPORT_CSV_COLUMNS = (
    "backbone",
    "head",
    "event",
    "accuracy",
    "precision",
    "recall",
    "f1",
)


def write_report_csv(rows: Sequence[ReportRow], path) -> None:
    """Long-form CSV, one (backbone, head, event) triple per line."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_CSV_COLUMNS)
        for row in rows:
            for event in REPORT_EVENT_ORDER:
                m = row.cells.get(event)
                if m is None:
                    continue
                writer.writerow(
                    [
                        row.backbone,
                        row.head,
                        event.value,
                        repr(m.accuracy),
                        repr(m.precision),
                        repr(m.recall),
                        repr(m.f1),
                    ]
                )


def read_report_csv(path) -> list[ReportRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != REPORT_CSV_COLUMNS:
            raise ValidationError(
                f"bad report header {header!r}, expected {REPORT_CSV_COLUMNS!r}"
            )
        by_model: dict[tuple[str, str], dict[EventClass, ClassMetrics]] = {}
        order: list[tuple[str, str]] = []
        for row in reader:
            if len(row) != len(REPORT_CSV_COLUMNS):
                raise ValidationError(f"bad report row {row!r}")
            backbone, head, event, acc, prec, rec, f1 = row
            key = (backbone, head)
            if key not in by_model:
                by_model[key] = {}
                order.append(key)
            by_model[key][EventClass(event)] = ClassMetrics(
                accuracy=float(acc),
                precision=float(prec),
                recall=float(rec),
                f1=float(f1),
            )
        return [
            ReportRow(backbone=b, head=h, cells=by_model[(b, h)]) for b, h in order
        ]


def plot_metric_bars(rows: Sequence[ReportRow], path, metric: str = "f1") -> None:
    """Grouped bar chart of one metric per event; needs the 'charts' extra."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:  # pragma: no cover - depends on extras
        raise ValidationError(
            "plotting requires matplotlib (install the 'charts' extra)"
        ) from exc
    if metric not in ("accuracy", "precision", "recall", "f1"):
        raise ValidationError(f"unknown metric {metric!r}")
    events = REPORT_EVENT_ORDER
    x = np.arange(len(events))
    width = 0.8 / max(len(rows), 1)
    fig, ax = plt.subplots(figsize=(9, 4.5))
    for i, row in enumerate(rows):
        values = [
            getattr(row.cells[e], metric) * 100 if e in row.cells else 0.0
            for e in events
        ]
        ax.bar(x + i * width, values, width, label=row.model)
    ax.set_xticks(x + width * (len(rows) - 1) / 2)
    ax.set_xticklabels([EVENT_DISPLAY[e] for e in events])
    ax.set_ylabel(f"{metric} (%)")
    ax.set_ylim(0, 100)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
