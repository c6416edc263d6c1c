"""Clustering accuracy under the best label matching, and conditioning diagnostics."""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import DimensionError
from .linalg import eig_extremes

BRUTE_FORCE_MAX_K = 8


def confusion_matrix(true_labels, predicted_labels, n_clusters):
    """Counts with rows = true classes and columns = predicted clusters."""
    true_labels = np.asarray(true_labels)
    predicted_labels = np.asarray(predicted_labels)
    if true_labels.shape != predicted_labels.shape or true_labels.ndim != 1:
        raise DimensionError(
            f"label vectors differ: {true_labels.shape} vs {predicted_labels.shape}"
        )
    for name, lab in (("true", true_labels), ("predicted", predicted_labels)):
        if lab.size and (lab.min() < 0 or lab.max() >= n_clusters):
            raise ValueError(f"{name} labels must lie in [0, {n_clusters})")
    cm = np.zeros((n_clusters, n_clusters), dtype=np.int64)
    np.add.at(cm, (true_labels, predicted_labels), 1)
    return cm


def best_permutation_brute_force(cm):
    """Exhaustive search; returns the lexicographically smallest optimal permutation."""
    K = cm.shape[0]
    rows = np.arange(K)
    best_score, best_perm = -1, None
    for perm in itertools.permutations(range(K)):
        score = int(cm[rows, perm].sum())
        if score > best_score:
            best_score, best_perm = score, perm
    return best_score, np.array(best_perm)


def best_permutation_assignment(cm):
    """Optimal matching via the linear assignment solver."""
    rows, cols = linear_sum_assignment(cm, maximize=True)
    perm = np.empty(cm.shape[0], dtype=int)
    perm[rows] = cols
    return int(cm[rows, cols].sum()), perm


def clustering_accuracy(true_labels, predicted_labels, n_clusters, method="auto"):
    """Fraction of points correctly labeled after optimal cluster relabeling.

    Returns ``(accuracy, perm)`` where true class ``k`` is matched with
    predicted cluster ``perm[k]``. ``method`` is ``"auto"``, ``"brute"`` or
    ``"assignment"``; auto uses brute force up to eight clusters.
    """
    cm = confusion_matrix(true_labels, predicted_labels, n_clusters)
    n = cm.sum()
    if n == 0:
        raise DimensionError("no labels given")
    if method == "auto":
        method = "brute" if n_clusters <= BRUTE_FORCE_MAX_K else "assignment"
    if method == "brute":
        score, perm = best_permutation_brute_force(cm)
    elif method == "assignment":
        score, perm = best_permutation_assignment(cm)
    else:
        raise ValueError(f"unknown method {method!r}")
    return score / n, perm


@dataclass(frozen=True)
class ConditioningReport:
    min_eig: np.ndarray
    max_eig: np.ndarray
    condition_number: np.ndarray


def conditioning_report(params):
    """Extreme eigenvalues and condition number of every covariance.

    The condition number is ``inf`` when the smallest eigenvalue is not positive.
    """
    ext = np.array([eig_extremes(c) for c in params.covariances])
    lo, hi = ext[:, 0], ext[:, 1]
    cond = np.full(len(lo), np.inf)
    pos = lo > 0
    cond[pos] = hi[pos] / lo[pos]
    return ConditioningReport(lo, hi, cond)
