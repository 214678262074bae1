"""Training loop: Adam, early stopping, per-epoch frame resampling.

Feature extraction sits behind a small provider seam so tests can feed
synthetic features and the real pipeline can cache backbone outputs per
(frame, policy).  Each epoch re-samples every clip's 10 frames with a fresh
derived seed; validation always uses the deterministic evenly spaced sample.
"""
from __future__ import annotations

import copy
import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from .annotations import CaseAnnotation, EventClass
from .augment import IDENTITY_POLICY, AugmentationPolicy, AugmentedRef, apply_policy
from .clips import (
    CLIP_MIN_FRAMES,
    ClipSpec,
    derive_clip_seed,
    deterministic_sample,
    input_dropout_sample,
    segment_frame_range,
    tile_segment,
)
from .errors import ConfigError, NumericError, ValidationError
from .network.checkpoint import save_checkpoint
from .network.classifier import HybridClassifier
from .network.config import HeadConfig, config_to_dict
from .network.layers import PROB_EPS
from .sources import FrameSource


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings.

    A zero learning rate is allowed as a diagnostic no-op; negative rates
    are rejected.
    """

    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    patience: int = 10
    min_delta: float = 0.0
    stop_accuracy: float | None = None
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs <= 0:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size <= 0:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError(
                f"learning_rate must be non-negative, got {self.learning_rate}"
            )
        if not 0.0 <= self.beta1 < 1.0 or not 0.0 <= self.beta2 < 1.0:
            raise ConfigError("beta1 and beta2 must be in [0, 1)")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")


@dataclass
class AdamState:
    """First and second moment accumulators, one slot per parameter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: Mapping[str, np.ndarray]) -> AdamState:
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> None:
    """One in-place Adam update with bias correction."""
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    correction1 = 1.0 - config.beta1**state.t
    correction2 = 1.0 - config.beta2**state.t
    for name, grad in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * grad
        v *= config.beta2
        v += (1.0 - config.beta2) * grad * grad
        params[name] -= (
            config.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + config.epsilon)
        )


@dataclass(frozen=True)
class TrainingExample:
    """One clip with its binary label and augmentation identity."""

    clip: ClipSpec
    label: int
    policy: AugmentationPolicy = IDENTITY_POLICY
    copy_index: int = 0


def build_examples(
    refs: Sequence[AugmentedRef],
    positive: EventClass,
    cases: Mapping[str, CaseAnnotation],
) -> list[TrainingExample]:
    """Tile each referenced segment into labeled clip examples.

    Segments below the tiling floor (under 1 s of frames) are skipped, the
    same as in whole-case tiling.  Gap segments are not part of the source
    annotation, so their clips carry segment_ref -1.
    """
    examples = []
    for item in refs:
        case = cases.get(item.ref.case_id)
        if case is None:
            raise ValidationError(f"no annotation for case {item.ref.case_id!r}")
        segment = item.ref.segment
        start, end = segment_frame_range(segment, case.fps)
        if end - start < CLIP_MIN_FRAMES:
            continue
        try:
            seg_index = case.segments.index(segment)
        except ValueError:
            seg_index = -1
        label = 1 if segment.label == positive else 0
        for clip in tile_segment(
            segment, case.fps, case_id=case.case_id, segment_ref=seg_index
        ):
            examples.append(
                TrainingExample(
                    clip=clip,
                    label=label,
                    policy=item.policy,
                    copy_index=item.copy_index,
                )
            )
    return examples


class FeatureProvider(Protocol):
    """Yields (seq_len, feature_dim) features for an example.

    epoch selects the per-epoch random frame sample; None means the
    deterministic evaluation sample.
    """

    feature_dim: int

    def features_for(self, example: TrainingExample, epoch: int | None) -> np.ndarray: ...


class BackboneFeatureProvider:
    """Loads frames, applies the example's policy, runs the backbone.

    Features are cached per (case, absolute frame, policy) because offline
    augmentation is deterministic, so repeated epochs only pay for frames
    not yet seen.
    """

    def __init__(
        self,
        backbone,
        sources: Mapping[str, FrameSource] | Callable[[str], FrameSource],
        global_seed: int = 0,
        cache_limit: int = 200_000,
    ):
        self.backbone = backbone
        self.feature_dim = backbone.feature_dim
        self.global_seed = global_seed
        self._sources = sources
        self._cache: dict[tuple, np.ndarray] = {}
        self._cache_limit = cache_limit

    def _source(self, case_id: str) -> FrameSource:
        if callable(self._sources):
            return self._sources(case_id)
        try:
            return self._sources[case_id]
        except KeyError as exc:
            raise ValidationError(f"no frame source for case {case_id!r}") from exc

    def features_for(self, example: TrainingExample, epoch: int | None) -> np.ndarray:
        clip = example.clip
        if epoch is None:
            frame_set = deterministic_sample(clip)
        else:
            seed = derive_clip_seed(self.global_seed, clip, epoch, example.copy_index)
            frame_set = input_dropout_sample(clip, seed)
        policy_key = example.policy.to_string()
        rows: list[np.ndarray | None] = []
        missing: list[int] = []
        for rel in frame_set.indices:
            key = (clip.case_id, clip.start_frame + rel, policy_key)
            cached = self._cache.get(key)
            rows.append(cached)
            if cached is None:
                missing.append(rel)
        if missing:
            source = self._source(clip.case_id)
            stack = np.stack(
                [load_clip_frames_single(source, clip, rel) for rel in missing]
            )
            stack = apply_policy(stack, example.policy)
            features = self.backbone.extract(stack)
            for rel, row in zip(missing, features):
                key = (clip.case_id, clip.start_frame + rel, policy_key)
                if len(self._cache) >= self._cache_limit:
                    self._cache.pop(next(iter(self._cache)))
                self._cache[key] = row
            lookup = dict(zip(missing, features))
            rows = [
                lookup[rel] if row is None else row
                for rel, row in zip(frame_set.indices, rows)
            ]
        return np.stack(rows)


def load_clip_frames_single(source: FrameSource, clip: ClipSpec, rel: int) -> np.ndarray:
    """One frame of a clip by relative offset; same checks as the batch path."""
    if rel >= clip.length_frames:
        raise ValidationError(
            f"frame offset {rel} outside clip of {clip.length_frames} frames"
        )
    image = source.read_frame(clip.start_frame + rel)
    return np.asarray(image, dtype=np.float32)


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass(frozen=True)
class TrainReport:
    """Outcome of one training run; wall_time is excluded from equality."""

    epochs_run: int
    best_epoch: int
    best_val_loss: float
    best_val_accuracy: float
    stopped_early: bool
    history: tuple[EpochStats, ...]
    wall_time_sec: float = field(compare=False, default=0.0)


def _batched(indices: np.ndarray, size: int):
    for start in range(0, len(indices), size):
        yield indices[start : start + size]


def compute_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy from probabilities, clamped away from 0 and 1.

    labels may be integer class ids (batch,) or one-hot rows (batch, 2).
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.ndim == 2:
        if labels.shape != probs.shape:
            raise ValidationError(
                f"one-hot labels {labels.shape} do not match probs {probs.shape}"
            )
        labels = labels.argmax(axis=-1)
    if labels.shape != (probs.shape[0],):
        raise ValidationError(
            f"labels shape {labels.shape} does not match batch {probs.shape[0]}"
        )
    clamped = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.log(clamped[np.arange(len(labels)), labels]).mean())


def evaluate_examples(
    classifier: HybridClassifier,
    examples: Sequence[TrainingExample],
    provider: FeatureProvider,
    batch_size: int = 64,
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Deterministic pass over examples: (loss, accuracy, probs, labels)."""
    if not examples:
        raise ValidationError("cannot evaluate an empty example list")
    labels = np.array([ex.label for ex in examples])
    probs = np.empty((len(examples), classifier.config.num_classes))
    order = np.arange(len(examples))
    for batch in _batched(order, batch_size):
        x = np.stack([provider.features_for(examples[i], None) for i in batch])
        probs[batch] = classifier.predict_proba(x)
    loss = compute_loss(probs, labels)
    accuracy = float((probs.argmax(axis=-1) == labels).mean())
    return loss, accuracy, probs, labels


def _epoch_seed(base_seed: int, epoch: int) -> int:
    import hashlib

    digest = hashlib.sha256(f"epoch|{base_seed}|{epoch}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def train_binary_model(
    head_config: HeadConfig,
    train_examples: Sequence[TrainingExample],
    val_examples: Sequence[TrainingExample],
    provider: FeatureProvider,
    config: TrainConfig = TrainConfig(),
    run_dir: str | Path | None = None,
    log: Callable[[str], None] | None = None,
) -> tuple[HybridClassifier, TrainReport]:
    """Train a classifier, tracking the best validation loss.

    Frame samples are re-drawn per (clip, epoch); dropout noise comes from a
    dedicated generator so runs are reproducible end to end.  Returns the
    classifier restored to its best-validation parameters.
    """
    if not train_examples:
        raise ValidationError("cannot train on an empty example list")
    started = time.monotonic()
    classifier = HybridClassifier(head_config, seed=config.seed)
    adam = AdamState.for_params(classifier.params)
    dropout_rng = np.random.default_rng(_epoch_seed(config.seed, -1))
    best_loss = np.inf
    best_acc = 0.0
    best_epoch = -1
    best_params: dict | None = None
    stale = 0
    stopped_early = False
    history: list[EpochStats] = []

    log_lines: list[str] = []

    def emit(line: str) -> None:
        log_lines.append(line)
        if log is not None:
            log(line)

    for epoch in range(config.epochs):
        order = np.arange(len(train_examples))
        if config.shuffle:
            np.random.default_rng(_epoch_seed(config.seed, epoch)).shuffle(order)
        losses = []
        correct = 0
        for batch in _batched(order, config.batch_size):
            x = np.stack(
                [provider.features_for(train_examples[i], epoch) for i in batch]
            )
            y = np.array([train_examples[i].label for i in batch])
            loss, grads, probs = classifier.loss_and_gradients(x, y, rng=dropout_rng)
            adam_step(classifier.params, grads, adam, config)
            losses.append(loss * len(batch))
            correct += int((probs.argmax(axis=-1) == y).sum())
        train_loss = float(np.sum(losses) / len(train_examples))
        train_acc = correct / len(train_examples)
        val_loss, val_acc, _, _ = evaluate_examples(classifier, val_examples, provider)
        history.append(EpochStats(epoch, train_loss, train_acc, val_loss, val_acc))
        emit(
            f"epoch {epoch}: train_loss={train_loss:.4f} train_acc={train_acc:.4f} "
            f"val_loss={val_loss:.4f} val_acc={val_acc:.4f}"
        )
        if val_loss < best_loss - config.min_delta:
            best_loss = val_loss
            best_acc = val_acc
            best_epoch = epoch
            best_params = copy.deepcopy(classifier.params)
            stale = 0
        else:
            stale += 1
        if config.stop_accuracy is not None and val_acc >= config.stop_accuracy:
            if val_acc >= best_acc:
                best_loss, best_acc, best_epoch = val_loss, val_acc, epoch
                best_params = copy.deepcopy(classifier.params)
            stopped_early = True
            emit(f"stopping: val_acc {val_acc:.4f} reached target")
            break
        if config.patience and stale > config.patience:
            stopped_early = True
            emit(f"stopping: no val_loss improvement for {stale} epochs")
            break

    last_params = copy.deepcopy(classifier.params)
    if best_params is not None:
        classifier.params = best_params
    report = TrainReport(
        epochs_run=len(history),
        best_epoch=best_epoch,
        best_val_loss=float(best_loss),
        best_val_accuracy=float(best_acc),
        stopped_early=stopped_early,
        history=tuple(history),
        wall_time_sec=time.monotonic() - started,
    )
    if run_dir is not None:
        _write_run_dir(
            Path(run_dir), head_config, config, classifier, last_params, report,
            log_lines,
        )
    return classifier, report


def _write_run_dir(
    run_dir: Path,
    head_config: HeadConfig,
    config: TrainConfig,
    classifier: HybridClassifier,
    last_params: dict,
    report: TrainReport,
    log_lines: Sequence[str] = (),
) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    settings = {
        "head": config_to_dict(head_config),
        "train": {
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "learning_rate": config.learning_rate,
            "beta1": config.beta1,
            "beta2": config.beta2,
            "epsilon": config.epsilon,
            "patience": config.patience,
            "min_delta": config.min_delta,
            "stop_accuracy": config.stop_accuracy,
            "seed": config.seed,
            "shuffle": config.shuffle,
        },
    }
    (run_dir / "config.json").write_text(json.dumps(settings, indent=2) + "\n")
    with open(run_dir / "report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["epoch", "train_loss", "train_accuracy", "val_loss", "val_accuracy"]
        )
        for row in report.history:
            writer.writerow(
                [row.epoch, row.train_loss, row.train_accuracy, row.val_loss, row.val_accuracy]
            )
    extra = {
        "best_epoch": report.best_epoch,
        "best_val_loss": report.best_val_loss,
        "best_val_accuracy": report.best_val_accuracy,
    }
    save_checkpoint(run_dir / "best.ckpt", classifier.config, classifier.params, extra)
    save_checkpoint(
        run_dir / "last.ckpt",
        classifier.config,
        last_params,
        {"epochs_run": report.epochs_run},
    )
    summary = (
        f"epochs_run={report.epochs_run} best_epoch={report.best_epoch} "
        f"best_val_loss={report.best_val_loss:.6f} "
        f"best_val_accuracy={report.best_val_accuracy:.6f} "
        f"stopped_early={report.stopped_early}"
    )
    (run_dir / "log.txt").write_text("\n".join([*log_lines, summary]) + "\n")
