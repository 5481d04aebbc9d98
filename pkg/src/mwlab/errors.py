"""Exception types shared across the package."""


class MWLabError(Exception):
    """Base class for all package errors."""


class ParameterError(MWLabError, ValueError):
    """An argument is outside the admissible range."""


class DegeneracyError(MWLabError, ArithmeticError):
    """A matrix that must be positive definite or invertible is not."""


class ConvergenceError(MWLabError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InvariantError(MWLabError, AssertionError):
    """A structural invariant of a constructed object failed."""
