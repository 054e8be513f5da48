"""Exception types shared across the toolkit."""


class JJTuneError(Exception):
    """Base class for all toolkit errors."""


class DomainError(JJTuneError, ValueError):
    """An argument is outside the physical or mathematical domain."""


class StateError(JJTuneError, RuntimeError):
    """Operation not allowed in the twin's current phase."""


class ConvergenceError(JJTuneError, RuntimeError):
    """A numerical solve failed to converge inside its bracket."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class FitError(JJTuneError, ValueError):
    """Fit input is unusable (rank deficient, too few points, ...)."""


class InfeasibleError(JJTuneError, RuntimeError):
    """A tuning demand cannot be met within the configured limits.

    May carry a ``partial_plan`` covering the feasible part of the demand.
    """

    def __init__(self, message, partial_plan=None):
        super().__init__(message)
        self.partial_plan = partial_plan


class ConfigError(JJTuneError, ValueError):
    """Configuration file is malformed or violates invariants."""


class TraceFormatError(JJTuneError, ValueError):
    """A trace file cannot be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
