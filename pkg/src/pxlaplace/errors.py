"""Exception types shared across the toolkit."""

__all__ = [
    "ToolkitError",
    "DimensionError",
    "GridMismatchError",
    "InvalidExponentError",
    "DegenerateGradientError",
    "BoundaryStencilError",
    "IterationLimitError",
    "DescentStallError",
    "FixedPointStallError",
    "InvalidTestFunctionError",
    "GrowthViolationError",
    "ParameterError",
    "BlowUpError",
    "ImageRangeError",
    "PgmFormatError",
    "ConfigError",
]


class ToolkitError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(ToolkitError):
    """Grid dimension outside the supported set {1, 2}."""


class GridMismatchError(ToolkitError):
    """Two fields that must share a grid do not."""


class InvalidExponentError(ToolkitError):
    """Exponent value <= 1 somewhere, or an exponent parameter out of range."""


class DegenerateGradientError(ToolkitError):
    """An operation that needs xi != 0 received a (near-)zero gradient."""


class BoundaryStencilError(ToolkitError):
    """Finite-difference stencil would reach across the domain boundary."""


class IterationLimitError(ToolkitError):
    """An iterative scalar solve (bisection) hit its iteration cap.

    Carries the last bracket so the caller can see how close it got.
    """

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class DescentStallError(ToolkitError):
    """Backtracking line search failed, or the descent hit its iteration cap."""

    def __init__(self, message, energy_history=None):
        super().__init__(message)
        self.energy_history = energy_history


class FixedPointStallError(ToolkitError):
    """Outer Picard iteration did not contract within its iteration budget."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = residual_history


class InvalidTestFunctionError(ToolkitError):
    """Test function has nonzero boundary trace or wrong grid."""


class GrowthViolationError(ToolkitError):
    """Sampled source term exceeded its declared growth bound."""


class ParameterError(ToolkitError):
    """Scalar parameter out of its documented range."""


class BlowUpError(ToolkitError):
    """Evolution produced a non-finite value."""


class ImageRangeError(ToolkitError):
    """Image intensities outside [0, 1]."""


class PgmFormatError(ToolkitError):
    """File is not a PGM (P2/P5, maxval 255) this toolkit can read."""


class ConfigError(ToolkitError):
    """Bad key, missing section, or out-of-range value in a run configuration."""
