"""Exception hierarchy shared by every fastfca module."""


class FastFCAError(Exception):
    """Base class for all errors raised by fastfca."""


class ShapeError(FastFCAError, ValueError):
    """Array shapes are inconsistent with the operation."""


class NonFiniteError(FastFCAError, FloatingPointError):
    """An operation produced NaN or Inf.

    Parameters
    ----------
    where : str
        Name of the operation (or block/parameter) that produced the value.
    """

    def __init__(self, where, detail=""):
        self.where = where
        msg = f"non-finite value produced by {where}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class GradientError(FastFCAError):
    """Backward pass cannot be carried out (non-scalar loss, non-differentiable op)."""


class SingularMatrixError(FastFCAError, ValueError):
    """A matrix is singular or indefinite beyond the allowed regularisation."""


class ISSFailure(FastFCAError):
    """ISS sweep hit a degenerate Hermitian form q^H U q <= eps."""

    def __init__(self, freq, row, value):
        self.freq = freq
        self.row = row
        self.value = value
        super().__init__(
            f"degenerate auxiliary form at frequency {freq}, row {row}: q^H U q = {value:.3e}"
        )


class WavFormatError(FastFCAError, ValueError):
    """RIFF/WAVE file is malformed or uses an unsupported codec."""

    def __init__(self, message, chunk=None):
        self.chunk = chunk
        super().__init__(message)


class InfeasibleSceneError(FastFCAError, ValueError):
    """Scene constraints cannot be satisfied by rejection sampling."""


class DivergenceError(FastFCAError):
    """Training objective diverged."""


class ConfigError(FastFCAError, ValueError):
    """Invalid configuration value or file."""


class PipelineError(FastFCAError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class EmptyInputError(FastFCAError, ValueError):
    """An operation received no items to work on (e.g. an empty scene list)."""
