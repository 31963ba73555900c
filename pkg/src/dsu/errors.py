"""Exception types shared across the package."""


class DsuError(Exception):
    """Base class for errors raised by this package."""


class FormatError(DsuError):
    """Byte stream does not look like the expected file format."""


class UnsupportedVersionError(FormatError):
    """Recognized format with an unknown version number."""


class CorruptionError(FormatError):
    """Recognized format with truncated or inconsistent contents."""


class ValidationError(DsuError):
    """Data violates a container invariant."""


class InfeasibleTargetError(DsuError):
    """Target cannot be aligned: fewer frames than the shortest valid path."""


class TrainingError(DsuError):
    """Training cannot proceed, e.g. a batch with no usable utterance."""


class PipelineStageError(DsuError):
    """A pipeline stage failed; the message names the stage and cause."""
