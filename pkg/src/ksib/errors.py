"""Exception types shared across the package."""


class KsibError(Exception):
    """Base class for package errors."""


class DomainError(KsibError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class SingularityError(KsibError, ArithmeticError):
    """A symmetric solve failed because the matrix is not positive definite.

    Carries the most negative pivot / smallest eigenvalue seen, for
    diagnostics.
    """

    def __init__(self, message, smallest_pivot=None):
        if smallest_pivot is not None:
            message = f"{message} (smallest pivot {smallest_pivot:.6g})"
        super().__init__(message)
        self.smallest_pivot = smallest_pivot


class DegeneracyError(KsibError, RuntimeError):
    """An estimate is degenerate (zero direction, empty influence set, ...)."""


class StateError(KsibError, RuntimeError):
    """An operation was called on an object in the wrong state."""


class ConfigError(KsibError, ValueError):
    """A configuration file or flag set is invalid."""


class LoadError(KsibError, ValueError):
    """An input file could not be parsed into a valid environment."""
