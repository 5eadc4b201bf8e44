"""Structured-sparsity regression with de-sparsified confidence regions."""

from .errors import DataError, NotAllowedError, SingularMatrixError, StructInferError
from .norms import NormKind, NormSpec

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "NormKind",
    "NormSpec",
    "NotAllowedError",
    "SingularMatrixError",
    "StructInferError",
]
