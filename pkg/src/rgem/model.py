"""Gaussian mixture parameters, densities and (penalized) log-likelihood."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .linalg import cholesky, log_det, solve_spd, whiten

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class MixtureParams:
    """Weights ``(K,)``, means ``(K, m)`` and covariances ``(K, m, m)``."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        covs = np.asarray(self.covariances, dtype=float)
        K, m = means.shape
        if weights.shape != (K,) or covs.shape != (K, m, m):
            raise ValueError(
                f"inconsistent shapes: weights {weights.shape}, means {means.shape}, "
                f"covariances {covs.shape}"
            )
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be a probability vector, got {weights}")
        covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
        for name, arr in (("weights", weights), ("means", means), ("covariances", covs)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_components(self):
        return self.means.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    def permuted(self, order):
        """Parameters with components reordered so that new k is old ``order[k]``."""
        order = np.asarray(order)
        return MixtureParams(self.weights[order], self.means[order], self.covariances[order])


@dataclass(frozen=True)
class RegularizationState:
    """Per-cluster shrinkage targets ``(K, m, m)``, scales ``(K,)`` and penalties ``(K,)``."""

    targets: np.ndarray
    scales: np.ndarray
    etas: np.ndarray

    def __post_init__(self):
        targets = np.asarray(self.targets, dtype=float)
        scales = np.asarray(self.scales, dtype=float)
        etas = np.asarray(self.etas, dtype=float)
        K = targets.shape[0]
        if scales.shape != (K,) or etas.shape != (K,):
            raise ValueError("targets, scales and etas disagree on K")
        if np.any(etas < 0):
            raise ValueError("penalties must be nonnegative")
        for name, arr in (("targets", targets), ("scales", scales), ("etas", etas)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def identity_targets(cls, scales, dim, etas=None):
        """Targets ``scale_k * I``; penalties default to zero."""
        scales = np.asarray(scales, dtype=float)
        if np.any(scales <= 0):
            raise ValueError("scales must be positive")
        targets = scales[:, None, None] * np.eye(dim)
        if etas is None:
            etas = np.zeros_like(scales)
        return cls(targets, scales, etas)

    def with_etas(self, etas):
        return RegularizationState(self.targets, self.scales, etas)

    def permuted(self, order):
        order = np.asarray(order)
        return RegularizationState(self.targets[order], self.scales[order], self.etas[order])


def log_component_density(x, mean, cov):
    """Log of the multivariate normal density at a single point."""
    x = np.asarray(x, dtype=float)
    z = whiten(cov, x - np.asarray(mean, dtype=float))
    m = x.shape[0]
    return -0.5 * (m * LOG_2PI + log_det(cov) + float(z @ z))


def component_log_densities(X, params):
    """``(n, K)`` matrix of ``log N(x_i | mu_k, Sigma_k)``."""
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    out = np.empty((n, params.n_components))
    for k in range(params.n_components):
        factor = cholesky(params.covariances[k])
        z = solve_triangular(factor, (X - params.means[k]).T, lower=True, check_finite=False)
        half_logdet = np.sum(np.log(np.diag(factor)))
        out[:, k] = -0.5 * (m * LOG_2PI + np.einsum("ij,ij->j", z, z)) - half_logdet
    return out


def weighted_log_densities(X, params):
    """``(n, K)`` matrix of ``log pi_k + log N(x_i | mu_k, Sigma_k)``.

    A zero weight maps to ``-inf`` for that column.
    """
    with np.errstate(divide="ignore"):
        log_w = np.log(params.weights)
    return component_log_densities(X, params) + log_w


def log_likelihood(X, params):
    """Mixture log-likelihood, inner sum in the log domain."""
    return float(np.sum(logsumexp(weighted_log_densities(X, params), axis=1)))


def kl_penalty(cov, target):
    """``0.5 * (tr(cov^-1 target) - log det(cov^-1 target) - m)``."""
    target = np.asarray(target, dtype=float)
    m = target.shape[0]
    tr = float(np.trace(solve_spd(cov, target)))
    value = 0.5 * (tr - (log_det(target) - log_det(cov)) - m)
    # rounding can push an exact zero slightly negative
    return max(value, 0.0)


def total_penalty(params, reg):
    """``sum_k eta_k * KL(Sigma_k, T_k)``; zero-penalty clusters are skipped."""
    total = 0.0
    for k in range(params.n_components):
        if reg.etas[k] != 0.0:
            total += reg.etas[k] * kl_penalty(params.covariances[k], reg.targets[k])
    return total


def penalized_log_likelihood(X, params, reg):
    """Log-likelihood minus the KL shrinkage penalty."""
    return log_likelihood(X, params) - total_penalty(params, reg)
