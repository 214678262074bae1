"""Command-line entry points: stats, prepare, train, evaluate, timeline.

One binary with subcommands.  prepare writes a manifest directory (split,
training examples, task description); train and evaluate consume it, so a
whole experiment is reproducible from the echoed configs and seeds.  Exit
codes: 0 on success, 2 for bad input or configuration, 3 for runtime
failures such as unreadable frames or numeric blowups.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .annotations import (
    DATA_ROOT_ENV,
    CaseAnnotation,
    EventClass,
    dataset_statistics,
    filter_min_duration,
    format_statistics,
    parse_annotations,
)
from .augment import (
    IDENTITY_POLICY,
    AugmentedRef,
    balance_classes,
    read_augmented_manifest,
    write_augmented_manifest,
)
from .errors import (
    ConfigError,
    FrameReadError,
    InferenceError,
    LapseError,
    NumericError,
    ValidationError,
)
from .evaluation import ReportRow, binary_metrics, format_report, write_report_csv
from .network.backbones import create_backbone
from .network.checkpoint import load_checkpoint
from .network.classifier import HybridClassifier
from .network.config import HeadConfig, RecurrentHeadConfig, TransformerHeadConfig
from .sources import open_source
from .tasks import (
    build_binary_task,
    read_split_manifest,
    split_by_case,
    split_train_test,
    write_split_manifest,
)
from .timeline import (
    FrameClassifier,
    infer_timeline,
    smooth_timeline,
    timeline_to_json,
    write_timeline_csv,
    write_timeline_svg,
)
from .training import (
    BackboneFeatureProvider,
    TrainConfig,
    build_examples,
    evaluate_examples,
    train_binary_model,
)

HEAD_CHOICES = ("transformer", "lstm", "gru", "bilstm", "bigru")
BACKBONE_CHOICES = ("stub", "resnet50", "efficientnetb0")

TASK_FILE = "task.json"
SPLIT_FILE = "split.csv"
EXAMPLES_FILE = "train_examples.csv"

# train settings that may come from --config (file) or flags; flags win.
TRAIN_DEFAULTS = {
    "backbone": "stub",
    "head": "transformer",
    "feature_dim": 64,
    "pretrained": False,
    "epochs": 100,
    "batch_size": 16,
    "learning_rate": 0.001,
    "patience": 10,
}


def head_config_for(head: str, feature_dim: int) -> HeadConfig:
    """Build the head configuration named on the command line."""
    if head == "transformer":
        return TransformerHeadConfig(embed_dim=feature_dim)
    cell = "lstm" if "lstm" in head else "gru"
    return RecurrentHeadConfig(
        input_dim=feature_dim, cell=cell, bidirectional=head.startswith("bi")
    )


def head_name(config: HeadConfig) -> str:
    """Inverse of head_config_for, for labeling report rows."""
    if isinstance(config, TransformerHeadConfig):
        return "transformer"
    return ("bi" if config.bidirectional else "") + config.cell


def _event(value: str) -> EventClass:
    try:
        event = EventClass(value)
    except ValueError:
        event = None
    if event is None or event is EventClass.IRRELEVANT:
        choices = ", ".join(e.value for e in EventClass.relevant())
        raise argparse.ArgumentTypeError(
            f"unknown event {value!r}; choose from {choices}"
        )
    return event


def _data_root(args) -> str | None:
    return args.data_root or os.environ.get(DATA_ROOT_ENV) or None


def _check_workers(args) -> None:
    if args.workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {args.workers}")
    if args.workers > 1:
        print(
            "note: worker parallelism is not implemented; running single-process",
            file=sys.stderr,
        )


def _load_cases(path: str, min_duration: float) -> list[CaseAnnotation]:
    cases = parse_annotations(path)
    return filter_min_duration(cases, min_duration)


def _case_index(cases) -> dict[str, CaseAnnotation]:
    return {case.case_id: case for case in cases}


def _sources_factory(cases: dict[str, CaseAnnotation], data_root: str | None):
    cache: dict[str, object] = {}

    def lookup(case_id: str):
        if case_id not in cache:
            case = cases.get(case_id)
            if case is None:
                raise ValidationError(f"no annotation for case {case_id!r}")
            cache[case_id] = open_source(str(case.resolve_video_path(data_root)))
        return cache[case_id]

    return lookup


def _parse_checkpoint_args(items: list[str]) -> dict[EventClass, str]:
    """EVENT=PATH pairs -> mapping, rejecting repeats and unknown events."""
    out: dict[EventClass, str] = {}
    for item in items:
        if "=" not in item:
            raise ValidationError(f"bad checkpoint argument {item!r}; expected EVENT=PATH")
        name, path = item.split("=", 1)
        event = _event(name)
        if event in out:
            raise ValidationError(f"event {name!r} given twice")
        out[event] = path
    if not out:
        raise ValidationError("at least one EVENT=PATH checkpoint is required")
    return out


def cmd_stats(args) -> int:
    _check_workers(args)
    cases = _load_cases(args.annotations, args.min_duration)
    stats = dataset_statistics(cases)
    print(format_statistics(stats))
    return 0


def cmd_prepare(args) -> int:
    _check_workers(args)
    annotations = str(Path(args.annotations).resolve())
    cases = _load_cases(annotations, args.min_duration)
    task = build_binary_task(cases, args.event)
    if args.by_case:
        manifest = split_by_case(task, ratio=args.ratio, seed=args.seed)
    else:
        manifest = split_train_test(task, ratio=args.ratio, seed=args.seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_split_manifest(manifest, out_dir / SPLIT_FILE)
    train_pos = [r for r in manifest.train if r.segment.label == args.event]
    train_neg = [r for r in manifest.train if r.segment.label != args.event]
    if args.balance:
        pos, neg = balance_classes(train_pos, train_neg, seed=args.seed)
    else:
        pos = [AugmentedRef(ref=r, policy=IDENTITY_POLICY) for r in train_pos]
        neg = [AugmentedRef(ref=r, policy=IDENTITY_POLICY) for r in train_neg]
    write_augmented_manifest(pos + neg, out_dir / EXAMPLES_FILE)
    task_info = {
        "annotations": annotations,
        "event": args.event.value,
        "seed": args.seed,
        "ratio": args.ratio,
        "by_case": args.by_case,
        "balance": args.balance,
        "min_duration": args.min_duration,
    }
    (out_dir / TASK_FILE).write_text(json.dumps(task_info, indent=2) + "\n")
    print(
        f"{out_dir}: {len(manifest.train)} train / {len(manifest.test)} test "
        f"segments; training examples: {len(pos)} positive, {len(neg)} negative"
    )
    return 0


def _read_manifest_dir(manifest_dir: str):
    """Load the three files prepare wrote: task info, split, train examples."""
    root = Path(manifest_dir)
    task_path = root / TASK_FILE
    if not task_path.exists():
        raise ValidationError(
            f"{root} is not a manifest directory (missing {TASK_FILE}); "
            "run 'lapse prepare' first"
        )
    try:
        info = json.loads(task_path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{task_path}: invalid JSON: {exc}") from exc
    event = _event(str(info.get("event", "")))
    manifest = read_split_manifest(root / SPLIT_FILE, seed=int(info.get("seed", 0)))
    examples = read_augmented_manifest(root / EXAMPLES_FILE)
    return info, event, manifest, examples


def _resolve_train_settings(args) -> dict:
    """Merge defaults, --config file values, and flags (flags win)."""
    settings = dict(TRAIN_DEFAULTS)
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{args.config}: top level must be an object")
        unknown = sorted(set(loaded) - set(TRAIN_DEFAULTS))
        if unknown:
            raise ConfigError(
                f"{args.config}: unknown keys {unknown}; "
                f"expected a subset of {sorted(TRAIN_DEFAULTS)}"
            )
        settings.update(loaded)
    for key in TRAIN_DEFAULTS:
        flag_value = getattr(args, key)
        if flag_value is not None:
            settings[key] = flag_value
    if settings["backbone"] not in BACKBONE_CHOICES:
        raise ConfigError(
            f"unknown backbone {settings['backbone']!r}; choose from {BACKBONE_CHOICES}"
        )
    if settings["head"] not in HEAD_CHOICES:
        raise ConfigError(
            f"unknown head {settings['head']!r}; choose from {HEAD_CHOICES}"
        )
    return settings


def _build_provider(settings: dict, args, cases: dict[str, CaseAnnotation]):
    backbone = create_backbone(
        settings["backbone"],
        feature_dim=int(settings["feature_dim"]),
        seed=args.seed,
        pretrained=bool(settings["pretrained"]),
    )
    return BackboneFeatureProvider(
        backbone, _sources_factory(cases, _data_root(args)), global_seed=args.seed
    )


def cmd_train(args) -> int:
    _check_workers(args)
    settings = _resolve_train_settings(args)
    info, event, manifest, refs = _read_manifest_dir(args.manifest)
    cases = _load_cases(info["annotations"], float(info.get("min_duration", 1.0)))
    index = _case_index(cases)
    train_examples = build_examples(refs, event, index)
    val_refs = [AugmentedRef(ref=r, policy=IDENTITY_POLICY) for r in manifest.test]
    val_examples = build_examples(val_refs, event, index)
    provider = _build_provider(settings, args, index)
    head = head_config_for(settings["head"], provider.feature_dim)
    config = TrainConfig(
        epochs=int(settings["epochs"]),
        batch_size=int(settings["batch_size"]),
        learning_rate=float(settings["learning_rate"]),
        patience=int(settings["patience"]),
        seed=args.seed,
    )
    _, report = train_binary_model(
        head,
        train_examples,
        val_examples,
        provider,
        config=config,
        run_dir=args.out,
        log=print,
    )
    run_config = {
        **settings,
        "manifest": str(Path(args.manifest).resolve()),
        "event": event.value,
        "seed": args.seed,
        "out": str(Path(args.out).resolve()),
    }
    config_path = Path(args.out) / "config.json"
    echoed = json.loads(config_path.read_text())
    echoed["run"] = run_config
    config_path.write_text(json.dumps(echoed, indent=2) + "\n")
    print(
        f"best epoch {report.best_epoch}: val_loss={report.best_val_loss:.4f} "
        f"val_acc={report.best_val_accuracy:.4f} ({report.epochs_run} epochs, "
        f"{report.wall_time_sec:.1f} s)"
    )
    return 0


def cmd_evaluate(args) -> int:
    _check_workers(args)
    checkpoints = _parse_checkpoint_args(args.checkpoint)
    info, _, manifest, _ = _read_manifest_dir(args.manifest)
    cases = _load_cases(info["annotations"], float(info.get("min_duration", 1.0)))
    index = _case_index(cases)
    refs = manifest.train if args.split == "train" else manifest.test
    provider = None
    rows: dict[str, ReportRow] = {}
    for event, path in checkpoints.items():
        config, params, _ = load_checkpoint(path)
        classifier = HybridClassifier(config, params=params)
        if provider is None:
            settings = {
                "backbone": args.backbone or "stub",
                "feature_dim": classifier.input_dim,
                "pretrained": bool(args.pretrained),
            }
            provider = _build_provider(settings, args, index)
        if provider.feature_dim != classifier.input_dim:
            raise ValidationError(
                f"backbone yields {provider.feature_dim}-dim features but "
                f"{path} expects {classifier.input_dim}"
            )
        examples = build_examples(
            [AugmentedRef(ref=r, policy=IDENTITY_POLICY) for r in refs],
            event,
            index,
        )
        loss, _, probs, labels = evaluate_examples(classifier, examples, provider)
        metrics = binary_metrics(labels, probs.argmax(axis=-1))
        name = head_name(config)
        row = rows.get(name)
        cells = dict(row.cells) if row else {}
        cells[event] = metrics
        rows[name] = ReportRow(
            backbone=settings["backbone"], head=name, cells=cells
        )
        print(
            f"{event.value} ({args.split}, {len(examples)} clips): "
            f"loss={loss:.4f} acc={metrics.accuracy:.4f} "
            f"precision={metrics.precision:.4f} recall={metrics.recall:.4f} "
            f"f1={metrics.f1:.4f}"
        )
    report_rows = list(rows.values())
    print(format_report(report_rows), end="")
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        write_report_csv(report_rows, args.report)
        print(f"wrote {args.report}")
    return 0


def cmd_timeline(args) -> int:
    _check_workers(args)
    checkpoints = _parse_checkpoint_args(args.models)
    missing = [e.value for e in EventClass.relevant() if e not in checkpoints]
    if missing:
        raise ValidationError(
            f"timeline needs one model per event; missing: {', '.join(missing)}"
        )
    video = args.video
    root = _data_root(args)
    if root and "://" not in video and not Path(video).is_absolute():
        video = str(Path(root) / video)
    loaded: dict[EventClass, HybridClassifier] = {}
    feature_dim = None
    for event, path in checkpoints.items():
        config, params, _ = load_checkpoint(path)
        model = HybridClassifier(config, params=params)
        if feature_dim is None:
            feature_dim = model.input_dim
        elif feature_dim != model.input_dim:
            raise ValidationError("checkpoints disagree on feature width")
        loaded[event] = model
    backbone = create_backbone(
        args.backbone or "stub",
        feature_dim=feature_dim,
        seed=args.seed,
        pretrained=args.pretrained,
    )
    if backbone.feature_dim != feature_dim:
        raise ValidationError(
            f"backbone yields {backbone.feature_dim}-dim features but the "
            f"checkpoints expect {feature_dim}"
        )
    models = {
        event: FrameClassifier(backbone, classifier)
        for event, classifier in loaded.items()
    }
    source = open_source(video)
    num_frames = source.frame_count()
    if num_frames <= 0:
        raise InferenceError(f"cannot determine frame count of {video!r}")
    case = CaseAnnotation(
        case_id=args.case_id or Path(video.split("?")[0]).stem,
        duration_sec=num_frames / args.fps,
        video_path=video,
        fps=args.fps,
    )
    timeline = infer_timeline(
        source,
        models,
        case,
        window_sec=args.window,
        stride_sec=args.stride,
    )
    if args.smooth:
        timeline = smooth_timeline(timeline, median_width=args.median_width)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    formats = ("csv", "json", "svg") if args.format == "all" else (args.format,)
    written = []
    for fmt in formats:
        path = out.with_suffix(f".{fmt}")
        if fmt == "csv":
            write_timeline_csv(timeline, path)
        elif fmt == "json":
            path.write_text(timeline_to_json(timeline))
        else:
            write_timeline_svg(timeline, path)
        written.append(str(path))
    labeled = sum(1 for e in timeline.entries if e.assigned != EventClass.IRRELEVANT)
    print(
        f"{case.case_id}: {len(timeline.entries)} windows ({labeled} labeled, "
        f"{len(timeline.failed)} failed); wrote {', '.join(written)}"
    )
    return 0


def _global_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--seed", type=int, default=0)
    parent.add_argument(
        "--workers",
        type=int,
        default=1,
        help="worker count (only 1 is implemented; kept for config parity)",
    )
    parent.add_argument(
        "--data-root",
        default=None,
        help=f"base directory for video paths (default ${DATA_ROOT_ENV})",
    )
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lapse",
        description="Train and run surgical event recognizers on long videos.",
    )
    common = _global_flags()
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "stats", parents=[common], help="per-event dataset statistics"
    )
    p.add_argument("--annotations", required=True, help="annotation JSON file")
    p.add_argument(
        "--min-duration",
        type=float,
        default=1.0,
        help="drop segments shorter than this many seconds (default 1.0)",
    )
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser(
        "prepare",
        parents=[common],
        help="build a split and a training-example manifest for one event",
    )
    p.add_argument("--annotations", required=True, help="annotation JSON file")
    p.add_argument("--event", type=_event, required=True)
    p.add_argument("--out", required=True, help="manifest directory to create")
    p.add_argument(
        "--balance",
        action="store_true",
        help="top up the minority class with augmented copies",
    )
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument(
        "--by-case", action="store_true", help="split by case instead of by segment"
    )
    p.add_argument("--min-duration", type=float, default=1.0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser(
        "train", parents=[common], help="train one binary event model"
    )
    p.add_argument("--manifest", required=True, help="directory from 'prepare'")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument(
        "--config", default=None, help="JSON file of defaults; flags override it"
    )
    p.add_argument("--backbone", choices=BACKBONE_CHOICES, default=None)
    p.add_argument("--head", choices=HEAD_CHOICES, default=None)
    p.add_argument("--feature-dim", type=int, default=None)
    p.add_argument("--pretrained", action="store_const", const=True, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "evaluate", parents=[common], help="score checkpoints on a split"
    )
    p.add_argument("--manifest", required=True, help="directory from 'prepare'")
    p.add_argument(
        "--checkpoint",
        action="append",
        default=[],
        metavar="EVENT=PATH",
        help="checkpoint to score as EVENT=PATH; repeatable",
    )
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.add_argument("--report", default=None, help="write a CSV report here")
    p.add_argument("--backbone", choices=BACKBONE_CHOICES, default=None)
    p.add_argument("--pretrained", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "timeline", parents=[common], help="sliding-window timeline for one video"
    )
    p.add_argument("--video", required=True, help="video path or synthetic:// URI")
    p.add_argument(
        "--models",
        action="append",
        default=[],
        metavar="EVENT=PATH",
        help="per-event checkpoint; required once per event",
    )
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument(
        "--format", choices=("csv", "json", "svg", "all"), default="all"
    )
    p.add_argument("--window", type=float, default=3.0)
    p.add_argument("--stride", type=float, default=1.0)
    p.add_argument("--smooth", action="store_true", help="majority-vote smoothing")
    p.add_argument("--median-width", type=int, default=3)
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--case-id", default=None)
    p.add_argument("--backbone", choices=BACKBONE_CHOICES, default=None)
    p.add_argument("--pretrained", action="store_true")
    p.set_defaults(func=cmd_timeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FrameReadError, InferenceError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except LapseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
