"""Dense symmetric positive definite kernels.

Everything that needs an inverse goes through a Cholesky factor and triangular
solves; no explicit matrix inverse is ever formed.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import IndefiniteError


def symmetrize(a):
    """Return ``(a + a.T) / 2`` as a float array."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


class SpdMatrix:
    """Symmetric matrix with a lazily computed, cached Cholesky factor.

    The matrix is symmetrized on construction. Instances are treated as
    immutable; the underlying array is flagged read-only.

    Parameters
    ----------
    a : array_like of shape (m, m)
    """

    __slots__ = ("values", "_factor", "_definite")

    def __init__(self, a):
        values = symmetrize(a)
        values.flags.writeable = False
        self.values = values
        self._factor = None
        self._definite = None

    @property
    def dim(self):
        return self.values.shape[0]

    @property
    def factor(self):
        """Lower Cholesky factor; raises `IndefiniteError` if not definite."""
        if self._definite is None:
            try:
                self._factor = _cholesky(self.values)
                self._definite = True
            except IndefiniteError:
                self._definite = False
                raise
        if not self._definite:
            raise IndefiniteError("matrix is not positive definite")
        return self._factor

    @property
    def is_definite(self):
        try:
            self.factor
        except IndefiniteError:
            return False
        return True

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __repr__(self):
        return f"SpdMatrix(dim={self.dim})"


def _cholesky(a):
    if not np.all(np.isfinite(a)):
        raise IndefiniteError("matrix has non-finite entries")
    try:
        factor = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise IndefiniteError(str(exc)) from None
    # LAPACK accepts tiny positive pivots that still make the factor useless
    if not np.all(np.diag(factor) > 0):
        raise IndefiniteError("non-positive pivot")
    return factor


def _factor_of(a):
    if isinstance(a, SpdMatrix):
        return a.factor
    return _cholesky(symmetrize(a))


def cholesky(a):
    """Lower-triangular ``L`` with ``L @ L.T == a``.

    Raises
    ------
    IndefiniteError
        If a pivot is not strictly positive.
    """
    return _factor_of(a).copy()


def log_det(a):
    """Log-determinant of a definite matrix, ``2 * sum(log(diag(L)))``."""
    return 2.0 * float(np.sum(np.log(np.diag(_factor_of(a)))))


def solve_spd(a, b):
    """Solve ``a @ x = b`` for a definite ``a``; ``b`` may be a vector or a matrix."""
    factor = _factor_of(a)
    y = solve_triangular(factor, b, lower=True, check_finite=False)
    return solve_triangular(factor, y, lower=True, trans="T", check_finite=False)


def whiten(a, v):
    """Return ``L^{-1} v`` for the Cholesky factor of ``a``.

    ``v`` may be a vector or an (m, n) matrix of column vectors.
    """
    return solve_triangular(_factor_of(a), v, lower=True, check_finite=False)


def quadratic_form(a, v):
    """``v.T @ inv(a) @ v`` via one triangular solve."""
    z = whiten(a, np.asarray(v, dtype=float))
    return float(z @ z)


def trace_solve(a, b):
    """``trace(inv(a) @ b)`` without forming the inverse."""
    return float(np.trace(solve_spd(a, b)))


def eig_extremes(a):
    """Smallest and largest eigenvalue of a symmetric matrix (definite or not)."""
    values = np.asarray(a.values if isinstance(a, SpdMatrix) else symmetrize(a))
    m = values.shape[0]
    lo = np.linalg.eigvalsh(values)
    return float(lo[0]), float(lo[m - 1])
