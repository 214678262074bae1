"""Exception types shared across the toolkit."""


class LapseError(Exception):
    """Base class for all toolkit errors."""


class AnnotationParseError(LapseError, ValueError):
    """Annotation file is malformed (bad syntax, missing or mistyped field)."""


class ValidationError(LapseError, ValueError):
    """Parsed data violates a structural invariant."""


class TaskError(LapseError, ValueError):
    """A binary task cannot be built (e.g. no positive segments)."""


class SplitError(LapseError, ValueError):
    """Train/test split cannot be produced from the given task."""


class TilingError(LapseError, ValueError):
    """Segment is too short to tile into clips."""


class SamplingError(LapseError, ValueError):
    """Clip has too few frames to sample the required sequence length."""


class FrameReadError(LapseError, IOError):
    """A frame could not be decoded from a video source."""


class ConfigError(LapseError, ValueError):
    """Network or training configuration is invalid."""


class NumericError(LapseError, RuntimeError):
    """Non-finite values encountered in parameters, gradients, or losses."""


class CheckpointError(LapseError, ValueError):
    """Checkpoint file is unreadable or does not match the target model."""


class InferenceError(LapseError, RuntimeError):
    """Timeline inference failed on too many windows to produce a result."""
