"""jjtune: digital twin, fitting and planning for electrical junction tuning."""

__version__ = "0.1.0"

from . import config, fitkit, physics, planner, protocol, report, svgplot, trace, twin
from .errors import (ConfigError, ConvergenceError, DomainError, FitError,
                     InfeasibleError, JJTuneError, StateError,
                     TraceFormatError)

__all__ = [
    "__version__",
    "config", "fitkit", "physics", "planner", "protocol", "report",
    "svgplot", "trace", "twin",
    "ConfigError", "ConvergenceError", "DomainError", "FitError",
    "InfeasibleError", "JJTuneError", "StateError", "TraceFormatError",
]
