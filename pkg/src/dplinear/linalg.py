"""Dense float64 matrix/vector helpers shared by every solver.

All functions operate on plain numpy arrays and are pure: inputs are never
mutated. Sums over examples are accumulated in 64-bit floats in index order
(BLAS reductions are deterministic for a fixed thread configuration), so
repeated runs produce bit-identical results.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

# Diagonal ratio of the LU factor below which a system is declared singular
# to working precision.  ~100x double eps: anything past this point returns
# noise-dominated solutions anyway.
_SINGULAR_RATIO = 100.0 * np.finfo(np.float64).eps


class ShapeError(ValueError):
    """Operands have incompatible or invalid dimensions."""


class SingularMatrixError(ArithmeticError):
    """Linear system is singular to working precision.

    Attributes:
        diag_min: Smallest absolute diagonal entry of the U factor.
        diag_max: Largest absolute diagonal entry of the U factor.
    """

    def __init__(self, message: str, diag_min: float, diag_max: float):
        super().__init__(message)
        self.diag_min = diag_min
        self.diag_max = diag_max


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Validate and return a float64 2-d array.

    Args:
        data: Array-like matrix data.
        rows: Expected row count, checked when given.
        cols: Expected column count, checked when given.

    Raises:
        ShapeError: Wrong dimensionality or size.
        ValueError: Non-finite entries.
    """
    a = np.asarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a matrix, got ndim={a.ndim}")
    if rows is not None and a.shape[0] != rows:
        raise ShapeError(f"expected {rows} rows, got {a.shape[0]}")
    if cols is not None and a.shape[1] != cols:
        raise ShapeError(f"expected {cols} columns, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def as_vector(data, length: int | None = None) -> np.ndarray:
    """Validate and return a float64 1-d array."""
    v = np.asarray(data, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a vector, got ndim={v.ndim}")
    if length is not None and v.shape[0] != length:
        raise ShapeError(f"expected length {length}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def gram_update(acc: np.ndarray, x: np.ndarray, weight: float = 1.0) -> np.ndarray:
    """Return ``acc + weight * x x^T`` without mutating ``acc``.

    The result is symmetric whenever ``acc`` is.
    """
    acc = np.asarray(acc, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if acc.ndim != 2 or acc.shape[0] != acc.shape[1]:
        raise ShapeError(f"accumulator must be square, got shape {acc.shape}")
    if x.ndim != 1 or x.shape[0] != acc.shape[0]:
        raise ShapeError(
            f"vector length {x.shape} incompatible with accumulator {acc.shape}"
        )
    return acc + weight * np.outer(x, x)


def gram_matrix(x: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Sum of (weighted) row outer products ``sum_i w_i x_i x_i^T``.

    Args:
        x: (n, d) matrix with one example per row.
        weights: Optional per-row weights; defaults to all ones.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-d row matrix, got ndim={x.ndim}")
    if weights is None:
        return x.T @ x
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (x.shape[0],):
        raise ShapeError(f"weights shape {w.shape} does not match {x.shape[0]} rows")
    return x.T @ (x * w[:, None])


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return ``(A + A^T) / 2``. Idempotent; the identity on symmetric input."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {a.shape}")
    return (a + a.T) / 2.0


class LuSolver:
    """Pivoted LU factorization computed once, reusable for many solves.

    Uses a general (non-symmetric) factorization on purpose: matrices passed
    in here are typically noised and therefore not exactly symmetric or
    positive definite.
    """

    def __init__(self, a: np.ndarray):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        self._lu, self._piv = scipy.linalg.lu_factor(a, check_finite=False)
        diag = np.abs(np.diag(self._lu))
        self.diag_min = float(diag.min()) if diag.size else 0.0
        self.diag_max = float(diag.max()) if diag.size else 0.0
        if self.diag_min <= self.diag_max * _SINGULAR_RATIO:
            raise SingularMatrixError(
                "matrix is singular to working precision "
                f"(|U| diagonal range [{self.diag_min:.3e}, {self.diag_max:.3e}])",
                self.diag_min,
                self.diag_max,
            )

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``A x = b`` for vector or multi-column ``b``."""
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self._lu.shape[0]:
            raise ShapeError(
                f"right-hand side has {b.shape[0]} rows, matrix is "
                f"{self._lu.shape[0]}x{self._lu.shape[0]}"
            )
        return scipy.linalg.lu_solve((self._lu, self._piv), b, check_finite=False)


def solve_linear(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A X = B`` with a pivoted dense LU factorization.

    Valid for non-symmetric ``A``. Raises SingularMatrixError (carrying the
    pivot diagnostic) when ``A`` is singular to working precision; the caller
    decides the fallback.
    """
    return LuSolver(a).solve(b)
