"""singular.mcmc errors."""

from typing import Dict, Optional, Sequence, Type


class SingularMCMCError(Exception):
    """Base exception for the package."""


class ArgumentError(SingularMCMCError, ValueError):
    """Invalid argument value."""


class DimensionError(ArgumentError):
    """Vector length does not match the model dimension."""


class ModelContractError(SingularMCMCError):
    """Model violates its contract (f < 0, f(0) != 0, inadmissible spectrum...)."""


class NumericalError(SingularMCMCError):
    """Non-finite log-density difference or swap exponent."""

    def __init__(
        self,
        message: str,
        w: Optional[Sequence[float]] = None,
        w_prime: Optional[Sequence[float]] = None,
    ):
        """Keep the offending pair of points for diagnostics."""
        self.w = None if w is None else [float(x) for x in w]
        self.w_prime = None if w_prime is None else [float(x) for x in w_prime]
        if self.w is not None:
            message = f"{message} (w={self.w}, w'={self.w_prime})"
        super().__init__(message)


class TheoryDomainError(SingularMCMCError, ValueError):
    """Closed form evaluated outside its domain (e.g. n <= e)."""


class CaseMismatchError(ModelContractError):
    """Schedule case does not match the pole spectrum."""


class QuadratureConvergenceError(SingularMCMCError):
    """Quadrature error estimate exceeds 10% of the value."""

    def __init__(self, message: str, value: float = float("nan"), error: float = float("nan")):
        """Keep value and error estimate."""
        self.value = value
        self.error = error
        super().__init__(message)


class FitError(SingularMCMCError):
    """Exponent fit is not identifiable."""


class TuningError(SingularMCMCError):
    """Step-size recursion failed to bracket the target."""

    def __init__(self, message: str, bound: str = "", sigma: float = float("nan")):
        """Keep which bound was hit."""
        self.bound = bound
        self.sigma = sigma
        super().__init__(message)


class ConfigError(SingularMCMCError):
    """Invalid experiment configuration."""

    def __init__(self, message: str, line: Optional[int] = None, path: str = ""):
        """Prefix message with file and line."""
        self.line = line
        self.path = path
        where = path or "<config>"
        if line is not None:
            where = f"{where}:{line}"
        super().__init__(f"{where}: {message}")


DEFAULT_EXIT_CODES: Dict[Type[BaseException], int] = {
    ConfigError: 2,
    ArgumentError: 2,
    ModelContractError: 3,
    NumericalError: 4,
    QuadratureConvergenceError: 5,
    TheoryDomainError: 6,
    FitError: 7,
    TuningError: 8,
    SingularMCMCError: 1,
}


def exit_code_for(
    exc: BaseException, exit_codes: Optional[Dict[Type[BaseException], int]] = None
) -> int:
    """Resolve the process exit status for an exception via its MRO."""
    codes = exit_codes or DEFAULT_EXIT_CODES
    for klass in type(exc).__mro__:
        if klass in codes:
            return codes[klass]
    return 1
