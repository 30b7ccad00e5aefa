"""Exception types shared across the package."""


class ShflabError(Exception):
    """Base class for all package errors."""


class DomainError(ShflabError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class AccuracyError(ShflabError, ArithmeticError):
    """A quadrature or estimator failed to reach the requested tolerance.

    Carries the achieved error estimate so callers can decide whether the
    partial result is still usable.
    """

    def __init__(self, message, achieved=None, value=None):
        super().__init__(message)
        self.achieved = achieved
        self.value = value


class UnsupportedInputError(ShflabError, TypeError):
    """Input type or combination not supported by the requested path."""


class ConfigurationError(ShflabError, ValueError):
    """A run configuration violates a documented constraint."""


class NumericalOverflowError(ShflabError, FloatingPointError):
    """A field became non-finite during time stepping."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class EnumerationBoundError(ShflabError, ValueError):
    """Requested discrete system exceeds the exact-enumeration bound."""


class UndefinedCorrelationError(ShflabError, ZeroDivisionError):
    """Correlation undefined because one of the variances is zero."""
