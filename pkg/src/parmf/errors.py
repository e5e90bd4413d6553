"""Exception types raised by parmf."""

import numpy as np


class ParmfError(Exception):
    """Base class for all parmf errors."""


class DimensionError(ParmfError, IndexError):
    """An index lies outside the matrix, or two objects disagree on shape."""


class DuplicateEntryError(ParmfError, ValueError):
    """The same (user, item) pair was supplied more than once."""


class ParameterError(ParmfError, ValueError):
    """A hyperparameter or argument is outside its valid range."""


class NotPositiveDefiniteError(ParmfError, np.linalg.LinAlgError):
    """Cholesky factorization hit a non-positive pivot."""


class SingularMatrixError(ParmfError, np.linalg.LinAlgError):
    """A triangular factor has a zero on its diagonal."""


class EvaluationError(ParmfError, ValueError):
    """A metric cannot be computed (e.g. empty probe set)."""


class MeasurementError(ParmfError, ValueError):
    """A timing measurement is unusable."""


class DataFormatError(ParmfError, ValueError):
    """A ratings file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
