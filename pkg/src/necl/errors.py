"""Exception hierarchy shared by all modules."""


class NeclError(Exception):
    """Base class for every error raised by the package."""


class DomainError(NeclError, ValueError):
    """An argument lies outside the domain of an operation."""


class StateError(NeclError, RuntimeError):
    """An object is in the wrong stage for the requested operation."""


class ConfigurationError(NeclError, ValueError):
    """A run configuration violates a static guard (e.g. stability)."""


class DivergenceError(NeclError, FloatingPointError):
    """The integrated state became non-finite."""

    def __init__(self, time: float, message: str = "non-finite state"):
        super().__init__(f"{message} at t={time:.17g}")
        self.time = time


class PreconditionError(NeclError, ValueError):
    """A physical precondition of a check is not met."""


class UnsupportedError(NeclError, NotImplementedError):
    """The requested combination of parameters is deliberately unsupported."""


class ValidityError(NeclError, ValueError):
    """A perturbative or truncated approximation is outside its validity range."""


class PrecisionError(NeclError, ArithmeticError):
    """A numerical precision gate failed (truncation, normalization, ...)."""


class NumericalStateError(NeclError, ArithmeticError):
    """A density matrix has eigenvalues that are too negative."""
