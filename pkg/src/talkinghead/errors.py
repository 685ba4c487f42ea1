"""Exception taxonomy shared across the pipeline."""


class TalkingHeadError(Exception):
    """Base class for all package errors."""


class ShapeError(TalkingHeadError, ValueError):
    """Array dimensions do not match the operation contract."""


class NumericInputError(TalkingHeadError, ValueError):
    """Non-finite values where finite input is required."""


class ParameterError(TalkingHeadError, ValueError):
    """Invalid hyperparameter (e.g. non-positive kernel length scale)."""


class DegenerateVectorError(TalkingHeadError, ValueError):
    """Zero-norm vector passed to a normalized similarity."""


class DegenerateGeometryError(TalkingHeadError, ValueError):
    """Landmark geometry collapsed (e.g. zero eye width)."""


class InsufficientContextError(TalkingHeadError, ValueError):
    """Audio shorter than the encoder receptive field."""


class InsufficientDataError(TalkingHeadError, ValueError):
    """Dataset too small for the requested sampling scheme."""


class UnsupportedSupervisionError(TalkingHeadError, ValueError):
    """Swap targets requested for frames without generating codes."""


class SequenceTooLongError(TalkingHeadError, ValueError):
    """Sequence exceeds the positional-encoding table."""


class EmptyHorizonError(TalkingHeadError, ValueError):
    """Conditioning prefix covers the whole sequence; nothing to predict."""


class HorizonError(TalkingHeadError, ValueError):
    """Audio shorter than the requested generation horizon."""


class NonPSDError(TalkingHeadError, ValueError):
    """Cholesky factorization failed; covariance needs jitter."""


class RayBoundsError(TalkingHeadError, ValueError):
    """Ray near/far bounds invalid (near >= far or non-positive)."""


class InfinitePsnr(TalkingHeadError):
    """Signal raised when PSNR is infinite (identical images)."""


class ContainerError(TalkingHeadError, ValueError):
    """Base for array-container load failures."""


class MissingFileError(ContainerError):
    pass


class LengthMismatchError(ContainerError):
    pass


class UnsupportedDtypeError(ContainerError):
    pass


class UnknownSchemaError(ContainerError):
    pass


class ValidationError(TalkingHeadError, ValueError):
    """Bad configuration or CLI input (exit code 2)."""


class DependencyError(TalkingHeadError):
    """Missing upstream checkpoint for a pipeline stage (exit code 3)."""
