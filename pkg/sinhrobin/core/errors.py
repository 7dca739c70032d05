"""Exception hierarchy for sinhrobin."""

from typing import Optional


class SinhRobinError(Exception):
    """Base class for all sinhrobin errors."""


class ConfigError(SinhRobinError, ValueError):
    """Invalid run configuration or call parameters."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        location = ""
        if field is not None:
            location = f"{field}"
            if line is not None:
                location += f" (line {line})"
            location += ": "
        super().__init__(f"{location}{message}")


class ParameterError(ConfigError):
    """Parameter outside its admissible range."""


class DomainMembershipError(SinhRobinError, ValueError):
    """Point is not in the closed domain, or not on its boundary."""


class NumericalError(SinhRobinError, RuntimeError):
    """Base class for failures of a numerical procedure."""


class SolverError(NumericalError):
    """Linear solve failed or did not reach its residual target."""


class ConvergenceError(NumericalError):
    """Iterative method stopped without converging."""


class ResolutionError(NumericalError):
    """Grid too coarse for the requested evaluation."""


class SingularityError(NumericalError):
    """Evaluation at a singular point."""


class QuadratureError(NumericalError):
    """Quadrature tail estimate above tolerance."""


class IntegrityError(NumericalError):
    """Computed data contradicts a structural property."""


class ExtrapolationError(NumericalError):
    """Argument outside the tabulated range."""


class MassOverflowError(NumericalError):
    """Mass rule exponent too large to evaluate."""


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the CLI exit status."""
    if isinstance(error, (ConfigError, DomainMembershipError)):
        return 2
    if isinstance(error, NumericalError):
        return 3
    return 1
