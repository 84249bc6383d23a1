"""Dense SPD linear algebra: Cholesky factorization, incremental row extension, solves.

The optimization loop adds one observation at a time, so the correlation
matrix grows by a single row per iteration.  Extending an existing factor
costs O(n^2) (one triangular solve) instead of the O(n^3) of refactorizing,
which is what keeps per-iteration cost quadratic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular L with L @ L.T equal to the factored SPD matrix.

    Immutable after construction: add_row copy-extends into a new factor, so
    concurrent readers of an existing factor are never invalidated.
    """

    L: np.ndarray

    @property
    def n(self) -> int:
        return self.L.shape[0]

    def logdet(self) -> float:
        """Log-determinant of the factored matrix, 2 * sum(log diag L)."""
        return 2.0 * float(np.sum(np.log(np.diagonal(self.L))))


def factorize(A) -> CholeskyFactor:
    """Cholesky-factorize a symmetric positive definite matrix.

    The caller is responsible for conditioning (add the nugget to the
    diagonal before calling).  Raises NotPositiveDefinite when a pivot
    is non-positive, signalling the caller to increase the nugget.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return CholeskyFactor(np.zeros((0, 0)))
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return CholeskyFactor(np.ascontiguousarray(L))


def add_row(factor: CholeskyFactor, new_row) -> CholeskyFactor:
    """Extend an n x n factor with the last row of the (n+1) x (n+1) SPD matrix.

    new_row holds the correlations of the new point with every existing point
    plus its self-correlation as the final entry.  Cost is O(n^2), dominated
    by one forward triangular solve.
    """
    r = np.asarray(new_row, dtype=float).reshape(-1)
    n = factor.n
    if r.shape[0] != n + 1:
        raise DimensionMismatch(f"new row has length {r.shape[0]}, expected {n + 1}")
    if n > 0:
        z = solve_triangular(factor.L, r[:n], lower=True, check_finite=False)
        pivot2 = r[n] - float(z @ z)
    else:
        z = r[:0]
        pivot2 = r[0]
    if not (pivot2 > 0.0) or not math.isfinite(pivot2):
        raise NotPositiveDefinite(
            f"squared pivot {pivot2:.3e} after Schur complement at dimension {n + 1}"
        )
    L = np.zeros((n + 1, n + 1))
    L[:n, :n] = factor.L
    L[n, :n] = z
    L[n, n] = math.sqrt(pivot2)
    return CholeskyFactor(L)


def forward_solve(factor: CholeskyFactor, b):
    """Solve L y = b (forward substitution only)."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != factor.n:
        raise DimensionMismatch(f"rhs has leading dimension {b.shape[0]}, expected {factor.n}")
    if factor.n == 0:
        return b.copy()
    return solve_triangular(factor.L, b, lower=True, check_finite=False)


def solve(factor: CholeskyFactor, b):
    """Solve A x = b for the factored A, via forward then backward substitution."""
    b = np.asarray(b, dtype=float)
    if b.ndim == 0 or b.shape[0] != factor.n:
        shape = getattr(b, "shape", None)
        raise DimensionMismatch(f"rhs of shape {shape} incompatible with n={factor.n}")
    if factor.n == 0:
        return b.copy()
    y = solve_triangular(factor.L, b, lower=True, check_finite=False)
    return solve_triangular(factor.L, y, lower=True, trans="T", check_finite=False)
