"""Recognition of surgical events in long laparoscopy videos.

The pipeline: annotated event segments become fixed-geometry clips, each
clip is reduced to 10 frames per epoch, per-frame backbone features feed a
transformer or recurrent head trained one-vs-rest per event, and trained
models scan whole videos with a sliding window to produce event timelines.
"""
from .annotations import (
    DATA_ROOT_ENV,
    DEFAULT_FPS,
    EVENT_DISPLAY,
    CaseAnnotation,
    EventClass,
    EventSegment,
    EventStatistics,
    dataset_statistics,
    filter_min_duration,
    format_statistics,
    parse_annotations,
    serialize_annotations,
    write_annotations,
)
from .augment import (
    IDENTITY_POLICY,
    AugmentationPolicy,
    AugmentedRef,
    apply_policy,
    balance_classes,
    parse_policy,
    read_augmented_manifest,
    sample_policy,
    write_augmented_manifest,
)
from .clips import (
    CLIP_MAX_FRAMES,
    CLIP_MIN_FRAMES,
    CLIP_STRIDE,
    SEQUENCE_LENGTH,
    ClipSpec,
    FrameIndexSet,
    derive_clip_seed,
    deterministic_sample,
    input_dropout_sample,
    load_clip_frames,
    tile_case,
    tile_segment,
)
from .errors import (
    AnnotationParseError,
    CheckpointError,
    ConfigError,
    FrameReadError,
    InferenceError,
    LapseError,
    NumericError,
    SamplingError,
    SplitError,
    TaskError,
    TilingError,
    ValidationError,
)
from .evaluation import (
    ClassMetrics,
    ConfusionMatrix,
    ReportRow,
    binary_metrics,
    confusion,
    format_report,
    metrics_from_confusion,
    read_report_csv,
    write_report_csv,
)
from .network import (
    FeatureBackbone,
    HybridClassifier,
    RecurrentHeadConfig,
    StubBackbone,
    TransformerHeadConfig,
    create_backbone,
    init_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .sources import FrameSource, SyntheticFrameSource, VideoFileSource, open_source
from .tasks import (
    BinaryTask,
    SegmentRef,
    SplitManifest,
    build_binary_task,
    materialize_gaps,
    read_split_manifest,
    split_by_case,
    split_train_test,
    write_split_manifest,
)
from .timeline import (
    FrameClassifier,
    Timeline,
    TimelineEntry,
    assign_label,
    enumerate_windows,
    event_intervals,
    infer_timeline,
    interval_iou,
    read_timeline_csv,
    smooth_timeline,
    timeline_from_csv,
    timeline_from_json,
    timeline_to_csv,
    timeline_to_json,
    timeline_to_svg,
    write_timeline_csv,
    write_timeline_svg,
)
from .training import (
    AdamState,
    BackboneFeatureProvider,
    EpochStats,
    TrainConfig,
    TrainReport,
    TrainingExample,
    adam_step,
    build_examples,
    compute_loss,
    evaluate_examples,
    train_binary_model,
)

__version__ = "0.1.0"
