"""Lloyd's K-means with k-means++ seeding, and EM initialization from its output."""

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateDataError, IndefiniteError
from .linalg import cholesky
from .model import MixtureParams, RegularizationState

RIDGE = 1e-4


@dataclass(frozen=True)
class KMeansConfig:
    n_clusters: int
    n_init: int = 10
    max_iter: int = 200
    tol: float = 1e-4
    seed: int | None = None

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")
        if self.n_init < 1 or self.max_iter < 1:
            raise ValueError("n_init and max_iter must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")


@dataclass(frozen=True)
class HardClustering:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int = 0

    def predict(self, X):
        """Index of the nearest centroid for each row of ``X``."""
        return _assign(np.asarray(X, dtype=float), self.centroids)[0]


@dataclass(frozen=True)
class Initialization:
    """Starting point shared by both EM variants.

    ``index_sets[k]`` holds the row indices assigned to cluster ``k``.
    """

    params: MixtureParams
    reg: RegularizationState
    index_sets: tuple


def _sq_dists(X, centroids):
    d = (
        np.einsum("ij,ij->i", X, X)[:, None]
        - 2.0 * X @ centroids.T
        + np.einsum("ij,ij->i", centroids, centroids)[None, :]
    )
    return np.maximum(d, 0.0)


def _assign(X, centroids):
    d = _sq_dists(X, centroids)
    labels = np.argmin(d, axis=1)
    return labels, d[np.arange(len(X)), labels]


def _inertia(X, centroids, labels):
    diff = X - centroids[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def kmeans_plusplus(X, n_clusters, rng, n_local_trials=None):
    """Greedy k-means++ seeding (several candidates per step, keep the best)."""
    n = X.shape[0]
    if n_local_trials is None:
        n_local_trials = 2 + int(np.log(n_clusters))
    centers = np.empty((n_clusters, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dists(X, centers[:1])[:, 0]
    for c in range(1, n_clusters):
        pot = closest.sum()
        if pot <= 0:
            # every remaining point coincides with a chosen center
            centers[c] = X[rng.integers(n)]
            continue
        cand = np.searchsorted(np.cumsum(closest), rng.random(n_local_trials) * pot)
        cand = np.minimum(cand, n - 1)
        cand_d = np.minimum(closest[None, :], _sq_dists(X, X[cand]).T)
        best = int(np.argmin(cand_d.sum(axis=1)))
        centers[c] = X[cand[best]]
        closest = cand_d[best]
    return centers


def lloyd(X, centroids, max_iter, tol, check_monotone=False):
    """Alternate assignment and centroid updates from given starting centroids.

    Returns ``(labels, centroids, inertia, n_iter)``. An emptied cluster is
    reseeded at the point farthest from its assigned centroid.
    """
    centroids = centroids.copy()
    K = centroids.shape[0]
    previous = np.inf
    labels, d = _assign(X, centroids)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        counts = np.bincount(labels, minlength=K)
        for k in np.flatnonzero(counts == 0):
            far = int(np.argmax(d))
            labels[far] = k
            d[far] = 0.0
            counts = np.bincount(labels, minlength=K)
        new = np.zeros_like(centroids)
        np.add.at(new, labels, X)
        new /= counts[:, None]
        shift = float(np.sum((new - centroids) ** 2))
        centroids = new
        labels, d = _assign(X, centroids)
        current = float(d.sum())
        if check_monotone and current > previous * (1 + 1e-12) + 1e-12:
            raise AssertionError(f"inertia increased: {previous} -> {current}")
        previous = current
        if shift <= tol**2:
            break
    return labels, centroids, _inertia(X, centroids, labels), n_iter


def kmeans_fit(X, config):
    """Best-of-``n_init`` K-means by inertia.

    Raises
    ------
    DegenerateDataError
        If ``X`` has fewer distinct rows than clusters.
    """
    X = np.asarray(X, dtype=float)
    K = config.n_clusters
    if X.shape[0] < K or len(np.unique(X, axis=0)) < K:
        raise DegenerateDataError(f"fewer than {K} distinct rows")
    streams = np.random.SeedSequence(config.seed).spawn(config.n_init)
    best = None
    for ss in streams:
        rng = np.random.default_rng(ss)
        start = kmeans_plusplus(X, K, rng)
        labels, centroids, inertia, n_iter = lloyd(X, start, config.max_iter, config.tol)
        if best is None or inertia < best.inertia:
            best = HardClustering(labels, centroids, inertia, n_iter)
    return best


def scatter(X, center=None):
    """Centered scatter normalized by the row count (the Gaussian MLE)."""
    if center is None:
        center = X.mean(axis=0)
    diff = X - center
    return diff.T @ diff / X.shape[0]


def init_from_kmeans(X, clustering, ridge=RIDGE):
    """Mixture parameters and identity-target regularization from hard labels.

    Weights are cluster proportions, covariances are within-cluster MLE
    covariances (``ridge * I`` added when not definite), scales are
    ``trace / m`` and penalties start at zero.
    """
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    labels = np.asarray(clustering.labels)
    K = clustering.centroids.shape[0]
    weights, means, covs, sets = [], [], [], []
    for k in range(K):
        idx = np.flatnonzero(labels == k)
        if len(idx) < 2:
            raise DegenerateDataError(f"cluster {k} has {len(idx)} point(s)")
        pts = X[idx]
        mu = pts.mean(axis=0)
        cov = scatter(pts, mu)
        try:
            cholesky(cov)
        except IndefiniteError:
            cov = cov + ridge * np.eye(m)
            try:
                cholesky(cov)
            except IndefiniteError:
                raise DegenerateDataError(f"cluster {k} covariance is singular") from None
        weights.append(len(idx) / n)
        means.append(mu)
        covs.append(cov)
        sets.append(idx)
    weights = np.array(weights)
    weights /= weights.sum()
    covs = np.array(covs)
    scales = np.trace(covs, axis1=1, axis2=2) / m
    params = MixtureParams(weights, np.array(means), covs)
    reg = RegularizationState.identity_targets(scales, m)
    return Initialization(params, reg, tuple(sets))
