"""Dense linear-algebra primitives shared by every other module.

Matrices are plain float64 C-contiguous (row-major) ndarrays of shape
(rows, cols); vectors are 1-D float64 ndarrays. The constructors below
validate shape and finiteness; all public operations keep outputs finite.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np
import scipy.linalg

# Relative pivot size below which an LU factorization is declared singular.
PIVOT_RTOL = 1e-12


class SingularMatrixError(ValueError):
    """Raised when a matrix cannot be inverted reliably.

    Carries the estimated condition number (`inf` when a pivot is exactly
    zero) so callers can report it.
    """

    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class Inverse(NamedTuple):
    matrix: np.ndarray
    condition: float


def dense_matrix(entries, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Build a validated row-major float64 matrix.

    `entries` may be a nested sequence, a 2-D array, or a flat sequence
    combined with explicit `rows`/`cols`.
    """
    a = np.asarray(entries, dtype=np.float64)
    if a.ndim == 1:
        if rows is None or cols is None:
            raise ValueError("flat entries require explicit rows and cols")
        if a.size != rows * cols:
            raise ValueError(f"expected {rows * cols} entries, got {a.size}")
        a = a.reshape(rows, cols)
    elif a.ndim == 2:
        if rows is not None and a.shape != (rows, cols):
            raise ValueError(f"expected shape {(rows, cols)}, got {a.shape}")
    else:
        raise ValueError(f"matrix must be 2-D, got ndim={a.ndim}")
    if not np.isfinite(a).all():
        raise ValueError("matrix entries must be finite")
    return np.ascontiguousarray(a)


def dense_vector(entries) -> np.ndarray:
    a = np.asarray(entries, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"vector must be 1-D, got ndim={a.ndim}")
    if not np.isfinite(a).all():
        raise ValueError("vector entries must be finite")
    return np.ascontiguousarray(a)


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Standard matrix-vector product with a dimension check."""
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: {m.shape} @ {v.shape}")
    return m @ v


def one_norm(m: np.ndarray) -> float:
    """Matrix 1-norm (maximum absolute column sum)."""
    return float(np.abs(m).sum(axis=0).max()) if m.size else 0.0


def solve_or_invert(m: np.ndarray) -> Inverse:
    """Invert a square matrix via LU with partial pivoting.

    Returns the inverse together with the condition estimate
    ||M||_1 * ||M^-1||_1. Raises SingularMatrixError when the smallest
    pivot falls below PIVOT_RTOL relative to the largest.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got {m.shape}")
    with np.errstate(all="ignore"), warnings.catch_warnings():
        # Singularity is detected from the pivots below; silence the
        # factorization's own warning.
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=True)
    pivots = np.abs(np.diag(lu))
    largest = pivots.max() if pivots.size else 0.0
    if largest == 0.0 or pivots.min() < PIVOT_RTOL * largest:
        condition = np.inf
        if pivots.min() > 0.0:
            with np.errstate(all="ignore"):
                inv = scipy.linalg.lu_solve((lu, piv), np.eye(m.shape[0]))
            if np.isfinite(inv).all():
                condition = one_norm(m) * one_norm(inv)
        raise SingularMatrixError(
            f"matrix numerically singular (condition estimate {condition:.3e})",
            condition,
        )
    inv = scipy.linalg.lu_solve((lu, piv), np.eye(m.shape[0]))
    return Inverse(inv, one_norm(m) * one_norm(inv))


def softmax(z: np.ndarray) -> np.ndarray:
    """Numerically stable softmax: exp(z - max z) normalized to sum 1."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_sum_exp(z: np.ndarray) -> float:
    """log(sum(exp(z))) computed with the max-shift trick."""
    z = np.asarray(z, dtype=np.float64)
    m = z.max()
    return float(m + np.log(np.exp(z - m).sum()))
