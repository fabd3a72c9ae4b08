"""
Dense real-matrix kernel shared by all other modules.

A matrix is a two-dimensional, C-ordered (row-major), read-only ``numpy.ndarray``
of float64 values. Every function returns a freshly allocated matrix and never
lets a NaN or Inf escape.
"""

import numpy as np

from jointgraph.utils import ShapeError, InputError, NumericalError

Matrix = np.ndarray


def _finalize(result, operation):
    """ Mark an output matrix read-only after checking that it is finite. """

    if not np.all(np.isfinite(result)):
        raise NumericalError(f"Non-finite value produced by '{operation}'.")
    result.flags.writeable = False
    return result


def _finalize_scalar(value, operation):
    value = float(value)
    if not np.isfinite(value):
        raise NumericalError(f"Non-finite value produced by '{operation}'.")
    return value


def _check_same_shape(a, b, operation):
    if a.shape != b.shape:
        raise ShapeError(f"Shape mismatch in '{operation}': {a.shape} and {b.shape}.")


def as_matrix(values, name="matrix"):
    """
    Convert values to a read-only float64 matrix.

    Parameters
    ----------
    values : array-like
        Nested sequence or array with two dimensions.
    name : str, default "matrix"
        Name used in error messages.

    Returns
    -------
    numpy.ndarray
        A row-major copy of the values.
    """

    try:
        array = np.array(values, dtype=np.float64, order="C", copy=True)
    except (TypeError, ValueError) as e:
        raise InputError(f"Could not convert '{name}' to a real matrix. Error was: {e}")

    if array.ndim != 2:
        raise ShapeError(f"'{name}' must be two-dimensional, but has shape {array.shape}.")
    if array.shape[0] == 0 or array.shape[1] == 0:
        raise ShapeError(f"'{name}' must have at least one row and one column, but has shape {array.shape}.")
    if not np.all(np.isfinite(array)):
        raise InputError(f"'{name}' contains non-finite values (NaN or Inf).")

    array.flags.writeable = False
    return array


def matmul(a, b):
    """ Matrix product a @ b. Raises ShapeError naming both shapes if a.cols != b.rows. """

    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"Cannot multiply matrices of shapes {a.shape} and {b.shape}.")
    return _finalize(np.matmul(a, b), "matmul")


def transpose(a):
    return _finalize(np.ascontiguousarray(a.T), "transpose")


def hadamard(a, b):
    """ Elementwise product. """

    _check_same_shape(a, b, "hadamard")
    return _finalize(np.multiply(a, b), "hadamard")


def safe_divide(numerator, denominator, guard):
    """ Elementwise numerator / (denominator + guard). The guard must be positive and the denominator nonnegative. """

    _check_same_shape(numerator, denominator, "safe_divide")
    return _finalize(numerator / (denominator + guard), "safe_divide")


def positive_part(a):
    """ (|a| + a) / 2 """
    return _finalize((np.abs(a) + a) / 2.0, "positive_part")


def negative_part(a):
    """ (|a| - a) / 2 """
    return _finalize((np.abs(a) - a) / 2.0, "negative_part")


def zero_diagonal(a):
    """ Copy of a square matrix with its diagonal set to exactly 0. """

    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"zero_diagonal requires a square matrix, got shape {a.shape}.")
    result = np.array(a, dtype=np.float64, copy=True)
    np.fill_diagonal(result, 0.0)
    return _finalize(result, "zero_diagonal")


def trace(a):
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"trace requires a square matrix, got shape {a.shape}.")
    return _finalize_scalar(np.trace(a), "trace")


def frobenius_norm_sq(a):
    """ Sum of squared entries. """
    return _finalize_scalar(np.sum(np.square(a)), "frobenius_norm_sq")


def max_abs(a):
    """ Largest absolute entry (the entrywise infinity norm). """
    return _finalize_scalar(np.max(np.abs(a)), "max_abs")


def is_symmetric(a, tol=1e-12):
    """ True if a is square and max |a - a^T| <= tol. """

    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    return bool(np.max(np.abs(a - a.T)) <= tol)
