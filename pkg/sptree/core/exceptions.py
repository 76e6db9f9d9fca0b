"""
Error hierarchy shared by the services and the exit-code mapping used by the CLI
"""
from pydantic import ValidationError


class SptreeError(Exception):
    """Base class for all lab errors"""


class ConfigError(SptreeError, ValueError):
    """Run configuration could not be read or validated"""


class RangeError(SptreeError, ValueError):
    """Index or length outside what the truncation provides"""


class ParamError(SptreeError, ValueError):
    """Inconsistent parameters (windows, orders, supports)"""


class DenseLimitError(SptreeError):
    """Problem size exceeds the configured dense limit"""

    def __init__(self, size: int, limit: int, what: str = "matrix"):
        self.size = size
        self.limit = limit
        super().__init__(f"{what} of size {size} exceeds the dense limit {limit}")


class NumericalRankError(SptreeError):
    """Gram-Schmidt met a (numerically) dependent vector"""


class SingularSolveError(SptreeError):
    """Tridiagonal factorization produced a vanishing pivot"""


class ZeroStateError(SptreeError, ValueError):
    """The state vector is identically zero"""


class ResolutionError(SptreeError):
    """Discretization too coarse for the requested quantity"""


class QuadratureError(SptreeError):
    """Quadrature failed its accuracy control"""


class InsufficientDataError(SptreeError, ValueError):
    """Not enough samples for an estimator"""


class HypothesisWindowError(SptreeError, ValueError):
    """Time grid outside the windows where a bound is stated"""


class TailWarning(UserWarning):
    """Truncation tail of a time-average profile is not negligible"""


EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2
EXIT_RESOURCE = 3


def exit_code_for(exc: BaseException) -> int:
    """
    Map an exception raised during a command to the CLI exit code

    Args:
        exc: The exception

    Returns:
        2 for configuration errors, 3 for resource limits, 1 otherwise
    """
    if isinstance(exc, (ConfigError, ValidationError, FileNotFoundError)):
        return EXIT_CONFIG
    if isinstance(exc, (DenseLimitError, OverflowError, MemoryError)):
        return EXIT_RESOURCE
    return EXIT_VIOLATION
