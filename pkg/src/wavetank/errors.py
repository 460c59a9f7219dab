"""Exception types shared across the package."""


class WavetankError(Exception):
    """Base class for all package errors."""


class ConfigurationError(WavetankError):
    """Invalid configuration value, unknown key, or bad constructor argument."""


class MetricValidityError(WavetankError):
    """The flattening map degenerated: min(dz_phi) fell below the admissible floor.

    Carries the observed minimum so callers can report how steep the surface got.
    """

    def __init__(self, message, observed_min=None):
        super().__init__(message)
        self.observed_min = observed_min


class SolverFailureError(WavetankError):
    """Iterative solve did not reach tolerance within its iteration budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class HistoryDepthError(WavetankError):
    """Not enough stored time levels for the requested time-derivative order."""


class StepSizeError(WavetankError):
    """Requested time step exceeds the stability limit."""


class CheckpointError(WavetankError):
    """Snapshot file is corrupt, truncated, or has an incompatible header."""
