"""Exception types shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific type that applies rather than bare ValueError.
"""

from __future__ import annotations


class NudgeLabError(Exception):
    """Base class for all package errors."""


class ConfigError(NudgeLabError):
    """Malformed or inconsistent experiment configuration."""


class ShapeError(NudgeLabError):
    """Array shape incompatible with the grid or field kind."""


class GridMismatchError(NudgeLabError):
    """Operands live on different grids."""


class KindMismatchError(NudgeLabError):
    """Observation or stream does not match the requested interpolant."""


class SymmetryError(NudgeLabError):
    """Coefficients violate the Hermitian symmetry of a real field."""


class DomainError(NudgeLabError):
    """Scalar argument outside its admissible range."""


class StabilityError(NudgeLabError):
    """Time step violates an explicit stability constraint.

    Carries a suggested step size when one can be computed.
    """

    def __init__(self, message: str, suggested_dt: float | None = None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class DivergenceError(NudgeLabError):
    """Solution lost finiteness (NaN/Inf) during time integration."""

    def __init__(self, message: str, last_valid_time: float | None = None):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class ConditionError(NudgeLabError):
    """Admissibility condition of the requested theorem does not hold."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class RegularityError(NudgeLabError):
    """A proven a priori bound was violated during a run."""


class SamplingError(NudgeLabError):
    """Random sampling produced no usable data (all draws degenerate)."""


class StreamFormatError(NudgeLabError):
    """Binary observation stream or checkpoint file is malformed."""


class SeriesFormatError(NudgeLabError):
    """Recorded time series file (CSV) is malformed."""


class WindowError(NudgeLabError):
    """Requested analysis window contains too few samples."""
