"""Per-cluster L-fold cross-validation of the shrinkage penalty.

For each fold the training scatter is shrunk toward ``scale * I`` with weight
``eta / (eta + n_train)`` and scored on the validation scatter with the
Gaussian loss ``tr(S_eta^-1 S_val) + log|S_eta|``. Losses are summed over
folds and the smallest total wins, ties going to the larger penalty.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve

from .exceptions import AllCandidatesIndefiniteError, IndefiniteError, InsufficientDataError
from .kmeans import scatter
from .linalg import cholesky


def default_grid(cluster_size):
    """``{0} U {cluster_size * 10**g : g = -3, -2.5, ..., 3}``, ascending."""
    if cluster_size < 1:
        raise ValueError("cluster_size must be >= 1")
    powers = np.arange(-3.0, 3.0 + 0.25, 0.5)
    return np.unique(np.concatenate([[0.0], cluster_size * 10.0**powers]))


@dataclass(frozen=True)
class CvConfig:
    n_folds: int = 5
    grid: tuple | None = None  # None: default_grid(len(indices))
    seed: int | None = None

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError("n_folds must be >= 2")
        if self.grid is not None:
            grid = tuple(sorted(set(float(g) for g in self.grid)))
            if not grid or any(g < 0 for g in grid):
                raise ValueError("grid must be nonempty and nonnegative")
            object.__setattr__(self, "grid", grid)

    def grid_for(self, cluster_size):
        if self.grid is None:
            return default_grid(cluster_size)
        return np.asarray(self.grid, dtype=float)


@dataclass(frozen=True)
class CvReport:
    eta: float
    grid: np.ndarray
    errors: np.ndarray  # (J,) summed over folds
    fold_errors: np.ndarray  # (L, J)
    n_rejected: int = 0
    folds: tuple = field(default=(), repr=False)


def make_folds(indices, n_folds, rng):
    """Shuffle ``indices`` and split them into ``n_folds`` near-equal parts."""
    indices = np.asarray(indices)
    if len(indices) < n_folds:
        raise InsufficientDataError(f"{len(indices)} points for {n_folds} folds")
    return tuple(np.array_split(rng.permutation(indices), n_folds))


def _fold_loss(cov, s_val):
    try:
        factor = cholesky(cov)
    except IndefiniteError:
        return np.inf
    tr = np.trace(cho_solve((factor, True), s_val, check_finite=False))
    return float(tr + 2.0 * np.sum(np.log(np.diag(factor))))


def select_eta(X, indices, scale, config=CvConfig(), rng=None):
    """Choose the shrinkage penalty for one cluster.

    Parameters
    ----------
    X : ndarray of shape (n, m)
    indices : array_like of int
        Rows belonging to the cluster.
    scale : float
        Target is ``scale * I``.
    config : CvConfig
    rng : numpy.random.Generator, optional
        Fold shuffling; defaults to one seeded from ``config.seed``.

    Returns
    -------
    CvReport
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    X = np.asarray(X, dtype=float)
    m = X.shape[1]
    if rng is None:
        rng = np.random.default_rng(config.seed)
    indices = np.asarray(indices)
    grid = config.grid_for(len(indices))
    folds = make_folds(indices, config.n_folds, rng)
    if min(len(f) for f in folds) < 2:
        raise InsufficientDataError("every fold needs at least 2 points")

    target = scale * np.eye(m)
    fold_errors = np.zeros((len(folds), len(grid)))
    for l, val in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != l])
        s_val = scatter(X[val])
        s_tr = scatter(X[train])
        n_tr = len(train)
        for j, eta in enumerate(grid):
            cov = (n_tr / (eta + n_tr)) * s_tr + (eta / (eta + n_tr)) * target
            fold_errors[l, j] = _fold_loss(cov, s_val)

    errors = fold_errors.sum(axis=0)
    finite = np.isfinite(errors)
    if not finite.any():
        raise AllCandidatesIndefiniteError("no candidate penalty gave a definite estimate")
    best = errors[finite].min()
    # ties go to the larger penalty
    chosen = int(np.flatnonzero(finite & (errors == best))[-1])
    return CvReport(
        eta=float(grid[chosen]),
        grid=grid,
        errors=errors,
        fold_errors=fold_errors,
        n_rejected=int((~finite).sum()),
        folds=folds,
    )
