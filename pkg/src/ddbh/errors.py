"""Exception hierarchy shared by every solver tier."""

from __future__ import annotations


class DDBHError(Exception):
    """Base class for all errors raised by this package."""


class ScenarioError(DDBHError, ValueError):
    """A scenario, profile or sweep description is malformed."""


class SolverError(DDBHError):
    """A numerical solver could not produce an answer."""


class SingularMatrixError(SolverError):
    """The coupling matrix is numerically singular (undamped resonance)."""


class BlowUpError(SolverError):
    """A trajectory left the configured amplitude bound or became non-finite."""


class NoConvergenceError(SolverError):
    """An iteration or series did not converge within its budget."""

    def __init__(self, message: str, residual: float | None = None, iterations: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NoSteadyStateError(SolverError):
    """The requested stationary solution does not exist for these parameters."""


class CutoffSaturationError(SolverError):
    """The Fock cutoff of a Gutzwiller run is too small for the dynamics."""


class UnstableModeError(SolverError):
    """A fluctuation mode has a non-positive denominator (divergent occupation)."""

    def __init__(self, message: str, k: tuple[float, float] | None = None):
        super().__init__(message)
        self.k = k


class PoleError(SolverError, ValueError):
    """A hypergeometric parameter sits on a non-positive integer."""


class InsufficientDataError(DDBHError, ValueError):
    """A time series is too short for the requested analysis window."""


class NonPositiveDataError(DDBHError, ValueError):
    """Log-log fitting received zero or negative values."""


class MissingTrajectoryError(DDBHError):
    """A run was requested for export but no trajectory was stored."""
