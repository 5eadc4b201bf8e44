"""Exception types shared across the package."""


class StructInferError(Exception):
    """Base class for package errors."""


class DataError(StructInferError, ValueError):
    """Malformed, non-finite or dimensionally inconsistent input."""


class NotAllowedError(StructInferError, ValueError):
    """An index set is not allowed (weakly decomposable) for the norm."""


class SingularMatrixError(StructInferError, ArithmeticError):
    """A matrix that must be invertible is (numerically) singular."""

    def __init__(self, message, matrix_name=None):
        super().__init__(message)
        self.matrix_name = matrix_name
