"""EM for Gaussian mixtures: classical (ridge) and KL-regularized variants.

The regularized M-step shrinks each weighted scatter toward its target,

    Sigma_k = beta_k * S_k + (1 - beta_k) * T_k,   beta_k = n pi_k / (eta_k + n pi_k),

which is the exact maximizer of the expected complete-data log-likelihood
minus ``eta_k * KL(Sigma_k, T_k)``. The penalized log-likelihood therefore
never decreases while the penalties and targets are held fixed.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .cv import CvConfig, select_eta
from .exceptions import (
    AllCandidatesIndefiniteError,
    EmptyClusterError,
    IndefiniteError,
    InsufficientDataError,
)
from .linalg import cholesky
from .metrics import conditioning_report
from .model import (
    MixtureParams,
    RegularizationState,
    log_likelihood,
    penalized_log_likelihood,
    weighted_log_densities,
)

CLASSICAL = "classical"
REGULARIZED = "regularized"


@dataclass(frozen=True)
class EmConfig:
    variant: str = REGULARIZED
    max_iter: int = 40
    epsilon: float = 1e-4  # classical only
    refresh_period: int = 10  # regularized only
    rel_tol: float = 1e-6
    min_weight_floor: float | None = None  # None: 1 / (2 n)
    repair_empty: bool = True

    def __post_init__(self):
        if self.variant not in (CLASSICAL, REGULARIZED):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.refresh_period < 1:
            raise ValueError("refresh_period must be >= 1")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be nonnegative")


@dataclass(frozen=True)
class IterationInfo:
    """Snapshot handed to the ``fit`` callback after every M-step."""

    iteration: int
    params: MixtureParams
    reg: RegularizationState | None
    betas: np.ndarray | None
    penalized_ll: float
    refreshed: bool
    repaired: tuple


@dataclass(frozen=True)
class EmFitResult:
    params: MixtureParams
    resp: np.ndarray
    hard_labels: np.ndarray
    iterations_run: int
    penalized_ll_trace: np.ndarray
    initial_penalized_ll: float
    converged: bool
    min_eigs: np.ndarray
    condition_numbers: np.ndarray
    reg: RegularizationState | None = None
    refresh_iterations: tuple = ()
    repaired_iterations: tuple = ()  # empty-cluster repair or penalty raise
    eta_history: list = field(default_factory=list)


def e_step(X, params):
    """Posterior membership probabilities, normalized in the log domain."""
    log_p = weighted_log_densities(X, params)
    log_p -= logsumexp(log_p, axis=1, keepdims=True)
    return np.exp(log_p)


def hard_assign(resp):
    """Row-wise argmax; ties go to the lowest cluster index."""
    return np.argmax(resp, axis=1)


def predict(X, params):
    """Cluster index of each row under fitted parameters."""
    return hard_assign(e_step(X, params))


def _moments(X, resp, min_weight_floor, fallback):
    """Weights, means, weighted scatters and effective counts ``n pi_k``.

    Clusters whose responsibility mass falls below ``n * floor`` keep the
    fallback mean and covariance and receive the floor weight; without a
    fallback they raise `EmptyClusterError`.
    """
    X = np.asarray(X, dtype=float)
    n, m = X.shape
    K = resp.shape[1]
    if min_weight_floor is None:
        min_weight_floor = 1.0 / (2.0 * n)
    mass = resp.sum(axis=0)
    floor = n * min_weight_floor
    means = np.empty((K, m))
    scatters = np.empty((K, m, m))
    repaired = []
    for k in range(K):
        if mass[k] < floor or mass[k] <= 0:
            if fallback is None:
                raise EmptyClusterError(k, float(mass[k]), floor)
            repaired.append(k)
            mass[k] = floor
            means[k] = fallback.means[k]
            scatters[k] = fallback.covariances[k]
            continue
        w = resp[:, k] / resp[:, k].sum()
        means[k] = w @ X
        diff = X - means[k]
        scatters[k] = (w[:, None] * diff).T @ diff
    weights = mass / n
    if repaired:
        weights = weights / weights.sum()
    return weights, means, scatters, mass, tuple(repaired)


def _m_step(X, resp, epsilon, reg, min_weight_floor, fallback):
    weights, means, scatters, counts, repaired = _moments(X, resp, min_weight_floor, fallback)
    covs = scatters.copy()
    betas = None
    if reg is None:
        shrink = epsilon * np.eye(means.shape[1])
        for k in range(len(weights)):
            if k not in repaired:
                covs[k] = scatters[k] + shrink
    else:
        betas = shrinkage_weights(counts, reg.etas)
        for k in range(len(weights)):
            if k not in repaired:
                covs[k] = betas[k] * scatters[k] + (1.0 - betas[k]) * reg.targets[k]
    return MixtureParams(weights, means, covs), betas, repaired


def m_step_classical(X, resp, epsilon, min_weight_floor=None, fallback=None):
    """Weighted moments plus ``epsilon * I`` on every covariance."""
    return _m_step(X, resp, epsilon, None, min_weight_floor, fallback)[0]


def shrinkage_weights(counts, etas):
    """``beta_k = n pi_k / (eta_k + n pi_k)``."""
    counts = np.asarray(counts, dtype=float)
    return counts / (np.asarray(etas, dtype=float) + counts)


def m_step_regularized(X, resp, reg, min_weight_floor=None, fallback=None, return_betas=False):
    """Weighted moments with each scatter shrunk toward its target.

    Returns the new `MixtureParams`, or ``(params, betas)`` when
    ``return_betas`` is set.
    """
    params, betas, _ = _m_step(X, resp, None, reg, min_weight_floor, fallback)
    return (params, betas) if return_betas else params


def refresh_regularization(X, params, resp, reg, cv_config, rng):
    """Recompute scales, identity targets and penalties from the current fit.

    Small index sets are handled as in `select_etas`.
    """
    m = params.dim
    labels = hard_assign(resp)
    scales = np.trace(params.covariances, axis1=1, axis2=2) / m
    etas = np.array(reg.etas, dtype=float)
    index_sets = [np.flatnonzero(labels == k) for k in range(params.n_components)]
    etas = select_etas(X, index_sets, scales, cv_config, rng, previous=etas)
    return RegularizationState.identity_targets(scales, m, etas)


def select_etas(X, index_sets, scales, cv_config, rng, previous=None):
    """Cross-validated penalty for every cluster.

    A cluster too small for ``cv_config.n_folds`` folds of two points is
    validated with as many such folds as it allows; below four points it gets
    the strongest penalty on its grid. If every candidate fails, the previous
    penalty is kept.
    """
    K = len(index_sets)
    etas = np.zeros(K) if previous is None else np.array(previous, dtype=float)
    for k in range(K):
        size = len(index_sets[k])
        config = cv_config
        if size < 2 * cv_config.n_folds:
            if size < 4:
                etas[k] = cv_config.grid_for(max(size, 1))[-1]
                continue
            config = replace(cv_config, n_folds=size // 2)
        try:
            etas[k] = select_eta(X, index_sets[k], scales[k], config, rng).eta
        except (InsufficientDataError, AllCandidatesIndefiniteError):
            pass
    return etas


def _escalate_penalties(X, resp, reg, epsilon, floor, fallback, cv_config):
    """Raise the penalty of any cluster whose shrunk covariance will not factor.

    Each offending cluster moves to the next larger candidate of its grid
    until the estimate is definite. Returns ``(params, betas, reg, raised)``.
    """
    raised = []
    while True:
        params, betas, repaired = _m_step(X, resp, epsilon, reg, floor, fallback)
        bad = []
        for k, cov in enumerate(params.covariances):
            try:
                cholesky(cov)
            except IndefiniteError:
                bad.append(k)
        if not bad:
            return params, betas, repaired, reg, tuple(raised)
        etas = np.array(reg.etas, dtype=float)
        for k in bad:
            size = max(int(round(resp[:, k].sum())), 1)
            grid = cv_config.grid_for(size)
            larger = grid[grid > etas[k]]
            if larger.size == 0:
                raise IndefiniteError(f"cluster {k} is singular at the largest penalty")
            etas[k] = larger[0]
            raised.append(k)
        reg = reg.with_etas(etas)


def fit(X, init, config=EmConfig(), cv=None, rng=None, callback=None):
    """Run EM from a K-means initialization.

    Parameters
    ----------
    X : ndarray of shape (n, m)
    init : kmeans.Initialization
    config : EmConfig
    cv : CvConfig, optional
        Regularized variant only. When given, penalties are chosen by
        cross-validation before the first iteration and, together with the
        scales and identity targets, refreshed every ``config.refresh_period``
        iterations. When omitted the penalties and targets of ``init.reg`` are
        used unchanged. In either case a cluster whose shrunk covariance
        will not factor has its penalty raised to the next grid candidate;
        such iterations are listed in ``repaired_iterations``.
    rng : numpy.random.Generator, optional
        Fold shuffling for cross-validation.
    callback : callable, optional
        Called with an `IterationInfo` after every M-step.

    Returns
    -------
    EmFitResult
    """
    X = np.asarray(X, dtype=float)
    regularized = config.variant == REGULARIZED
    params = init.params
    reg = init.reg if regularized else None
    if rng is None:
        rng = np.random.default_rng(cv.seed if cv is not None else None)
    if regularized and cv is not None:
        etas = select_etas(X, init.index_sets, reg.scales, cv, rng, previous=reg.etas)
        reg = reg.with_etas(etas)
    eta_history = [np.array(reg.etas)] if regularized else []

    def objective(p):
        return penalized_log_likelihood(X, p, reg) if regularized else log_likelihood(X, p)

    initial = objective(params)
    trace, refreshes, repairs = [], [], []
    converged = False
    for it in range(1, config.max_iter + 1):
        resp = e_step(X, params)
        refreshed = False
        if regularized and cv is not None and it > 1 and (it - 1) % config.refresh_period == 0:
            reg = refresh_regularization(X, params, resp, reg, cv, rng)
            eta_history.append(np.array(reg.etas))
            refreshed = True
            refreshes.append(it)
        fallback = params if config.repair_empty else None
        if regularized:
            new, betas, repaired, reg, raised = _escalate_penalties(
                X, resp, reg, config.epsilon, config.min_weight_floor, fallback,
                cv or CvConfig(),
            )
        else:
            new, betas, repaired = _m_step(
                X, resp, config.epsilon, reg, config.min_weight_floor, fallback
            )
            raised = ()
        if repaired or raised:
            repairs.append(it)
        params = new
        value = objective(params)
        trace.append(value)
        if callback is not None:
            callback(IterationInfo(it, params, reg, betas, value, refreshed, repaired))
        if len(trace) > 1 and not refreshed and config.rel_tol > 0:
            prev = trace[-2]
            if abs(value - prev) < config.rel_tol * abs(value):
                converged = True
                break

    resp = e_step(X, params)
    report = conditioning_report(params)
    return EmFitResult(
        params=params,
        resp=resp,
        hard_labels=hard_assign(resp),
        iterations_run=len(trace),
        penalized_ll_trace=np.array(trace),
        initial_penalized_ll=initial,
        converged=converged,
        min_eigs=report.min_eig,
        condition_numbers=report.condition_number,
        reg=reg,
        refresh_iterations=tuple(refreshes),
        repaired_iterations=tuple(repairs),
        eta_history=eta_history,
    )

