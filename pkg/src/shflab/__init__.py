"""shflab: numerical laboratory for the critical 2d mollified stochastic heat equation."""

__version__ = "0.1.0"

from .errors import (
    AccuracyError,
    ConfigurationError,
    DomainError,
    EnumerationBoundError,
    NumericalOverflowError,
    ShflabError,
    UndefinedCorrelationError,
    UnsupportedInputError,
)
from .testfunctions import GaussianBump, GriddedFunction, TestFunctionPair, default_pair

__all__ = [
    "AccuracyError",
    "ConfigurationError",
    "DomainError",
    "EnumerationBoundError",
    "GaussianBump",
    "GriddedFunction",
    "NumericalOverflowError",
    "ShflabError",
    "TestFunctionPair",
    "UndefinedCorrelationError",
    "UnsupportedInputError",
    "default_pair",
    "__version__",
]
