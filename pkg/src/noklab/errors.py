"""Exception hierarchy shared by all noklab modules."""


class NoklabError(Exception):
    """Base class for every error raised by noklab."""


class ParameterError(NoklabError, ValueError):
    """An input lies outside the documented parameter domain."""


class ConsistencyError(NoklabError, RuntimeError):
    """An internal cross-check failed (bracket, oracle agreement, monotonicity)."""


class NumericalError(NoklabError, ArithmeticError):
    """Base for failures of a numerical procedure."""


class SingularModeError(NumericalError):
    """A zero eigenvalue was met where its inverse is required."""


class DivergenceError(NumericalError):
    """Time stepping produced non-finite values."""
