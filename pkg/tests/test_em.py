import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rgem.cv import CvConfig
from rgem.data import SyntheticSpec, generate_gmm
from rgem.em import (
    select_etas,
    EmConfig,
    e_step,
    fit,
    hard_assign,
    m_step_classical,
    m_step_regularized,
    shrinkage_weights,
)
from rgem.exceptions import EmptyClusterError
from rgem.kmeans import Initialization, KMeansConfig, init_from_kmeans, kmeans_fit
from rgem.model import MixtureParams, RegularizationState

from conftest import random_spd


def two_component(w=(0.5, 0.5), mu=(-1.0, 1.0), var=1.0):
    return MixtureParams(np.array(w), np.array(mu)[:, None], np.full((2, 1, 1), var))


def test_identical_components_split_evenly(rng):
    cov = random_spd(rng, 3)
    p = MixtureParams([0.5, 0.5], np.ones((2, 3)), np.array([cov, cov]))
    resp = e_step(rng.standard_normal((10, 3)), p)
    np.testing.assert_allclose(resp, 0.5)


def test_degenerate_prior():
    p = two_component(w=(1 - 1e-300, 1e-300))
    resp = e_step(np.array([[0.5], [1.0], [3.0]]), p)
    np.testing.assert_allclose(resp[:, 0], 1.0)


def test_one_dimensional_logistic_posterior():
    # equal priors and unit variances, means -1 and +1: the log odds equal 2 x
    resp = e_step(np.array([[1.0], [0.5]]), two_component())
    np.testing.assert_allclose(resp[:, 1], 1.0 / (1.0 + np.exp([-2.0, -1.0])), rtol=1e-14)
    assert resp[0, 1] == pytest.approx(0.8807970779778823, rel=1e-14)


def test_responsibility_rows_sum_to_one(rng):
    for _ in range(20):
        K, m = int(rng.integers(2, 6)), int(rng.integers(1, 20))
        w = rng.random(K) + 0.01
        p = MixtureParams(w / w.sum(), 3 * rng.standard_normal((K, m)),
                          np.array([random_spd(rng, m) for _ in range(K)]))
        resp = e_step(10 * rng.standard_normal((50, m)), p)
        np.testing.assert_allclose(resp.sum(axis=1), 1.0, atol=1e-12)
        assert np.all((resp >= 0) & (resp <= 1))


def test_hard_assign_ties_go_low():
    assert list(hard_assign(np.array([[0.5, 0.5], [0.2, 0.8]]))) == [0, 1]


def test_classical_single_cluster(rng):
    X = rng.standard_normal((40, 3))
    p = m_step_classical(X, np.ones((40, 1)), 1e-4)
    assert p.weights[0] == 1.0
    np.testing.assert_allclose(p.means[0], X.mean(0))
    np.testing.assert_allclose(p.covariances[0], np.cov(X.T, bias=True) + 1e-4 * np.eye(3))


def test_classical_hard_assignment(rng):
    X = rng.standard_normal((30, 2))
    labels = np.arange(30) % 3
    p = m_step_classical(X, np.eye(3)[labels], 0.5)
    for k in range(3):
        pts = X[labels == k]
        np.testing.assert_allclose(p.means[k], pts.mean(0))
        np.testing.assert_allclose(p.covariances[k], np.cov(pts.T, bias=True) + 0.5 * np.eye(2))
    np.testing.assert_allclose(p.weights, 1 / 3)


def test_classical_hand_moments():
    p = m_step_classical(np.array([[0.0], [1.0], [2.0]]), np.ones((3, 1)), 1e-4)
    assert p.means[0, 0] == pytest.approx(1.0)
    assert p.covariances[0, 0, 0] == pytest.approx(2 / 3 + 1e-4)


def _reg(K, m, etas, scale=1.0):
    return RegularizationState.identity_targets(np.full(K, scale), m, np.asarray(etas, float))


def test_regularized_zero_penalty_is_classical(rng):
    X = rng.standard_normal((50, 4))
    resp = e_step(X, MixtureParams([0.3, 0.7], rng.standard_normal((2, 4)),
                                   np.array([np.eye(4), 2 * np.eye(4)])))
    a = m_step_regularized(X, resp, _reg(2, 4, [0.0, 0.0]))
    b = m_step_classical(X, resp, 0.0)
    assert np.array_equal(a.covariances, b.covariances)
    assert np.array_equal(a.means, b.means)


def test_regularized_infinite_penalty_returns_target(rng):
    X = rng.standard_normal((50, 4))
    resp = np.full((50, 2), 0.5)
    reg = RegularizationState(np.array([random_spd(rng, 4), random_spd(rng, 4)]),
                              np.ones(2), np.full(2, 1e300))
    p = m_step_regularized(X, resp, reg)
    for k in range(2):
        np.testing.assert_allclose(p.covariances[k], reg.targets[k], rtol=0, atol=1e-12)


def test_regularized_half_shrinkage(rng):
    X = rng.standard_normal((100, 3))
    resp = np.ones((100, 1))
    reg = _reg(1, 3, [100.0], scale=2.0)
    p, betas = m_step_regularized(X, resp, reg, return_betas=True)
    assert betas[0] == 0.5
    S = np.cov(X.T, bias=True)
    np.testing.assert_allclose(p.covariances[0], 0.5 * S + 0.5 * 2.0 * np.eye(3))


def test_shrinkage_weights():
    np.testing.assert_allclose(shrinkage_weights([100.0, 50.0], [100.0, 0.0]), [0.5, 1.0])


def test_empty_cluster_raises_without_fallback(rng):
    X = rng.standard_normal((20, 2))
    resp = np.zeros((20, 2))
    resp[:, 0] = 1.0
    with pytest.raises(EmptyClusterError) as info:
        m_step_classical(X, resp, 1e-4)
    assert info.value.k == 1


def test_empty_cluster_repaired_with_fallback(rng):
    X = rng.standard_normal((20, 2))
    resp = np.zeros((20, 2))
    resp[:, 0] = 1.0
    prev = MixtureParams([0.5, 0.5], np.array([[0.0, 0.0], [9.0, 9.0]]),
                         np.array([np.eye(2), 3 * np.eye(2)]))
    p = m_step_classical(X, resp, 1e-4, fallback=prev)
    np.testing.assert_array_equal(p.means[1], [9.0, 9.0])
    np.testing.assert_array_equal(p.covariances[1], 3 * np.eye(2))
    assert p.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert p.weights[1] == pytest.approx(0.5 / 20.5)


def test_weighted_means_are_convex_combinations(rng):
    X = rng.standard_normal((40, 3))
    resp = rng.dirichlet(np.ones(3), size=40)
    w = resp / resp.sum(axis=0)
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-12)
    p = m_step_classical(X, resp, 0.0)
    np.testing.assert_allclose(p.means, w.T @ X)


def _synthetic_init(n, m, seed, K=3):
    d = generate_gmm(SyntheticSpec(n=n, m=m, seed=seed))
    km = kmeans_fit(d.values, KMeansConfig(K, n_init=3, seed=seed))
    return d, init_from_kmeans(d.values, km)


def test_single_cluster_closed_form(rng):
    X = rng.standard_normal((200, 3))
    km = kmeans_fit(X, KMeansConfig(1, seed=0))
    res = fit(X, init_from_kmeans(X, km), EmConfig(variant="classical", max_iter=1))
    np.testing.assert_allclose(res.params.means[0], X.mean(0))


def test_variant_equivalence_at_zero_penalty():
    d, init = _synthetic_init(150, 6, 3)
    reg = init.reg.with_etas(np.zeros(3))
    init0 = Initialization(init.params, reg, init.index_sets)
    a = fit(d.values, init0, EmConfig(variant="regularized", rel_tol=0))
    b = fit(d.values, init0, EmConfig(variant="classical", epsilon=0.0, rel_tol=0))
    assert np.array_equal(a.penalized_ll_trace, b.penalized_ll_trace)
    assert np.array_equal(a.params.covariances, b.params.covariances)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.sampled_from([60, 120, 240]),
       m=st.sampled_from([3, 8, 15]))
def test_ascent_between_refreshes(seed, n, m):
    d, init = _synthetic_init(n, m, seed)
    seen = []
    res = fit(d.values, init, EmConfig(max_iter=25, refresh_period=5, rel_tol=0),
              cv=CvConfig(seed=seed), callback=seen.append)
    values = [res.initial_penalized_ll] + list(res.penalized_ll_trace)
    exempt = set(res.refresh_iterations) | set(res.repaired_iterations)
    for t in range(1, len(values)):
        if t in exempt:
            continue
        assert values[t] >= values[t - 1] - 1e-8 * abs(values[t - 1])
    for info in seen:
        lo = np.linalg.eigvalsh(info.params.covariances)[:, 0]
        floor = (1 - info.betas) * info.reg.scales
        assert np.all(lo >= floor - 1e-10)


def test_classical_eigen_floor():
    d, init = _synthetic_init(60, 20, 7)  # clusters smaller than the dimension
    seen = []
    fit(d.values, init, EmConfig(variant="classical", epsilon=1e-3, rel_tol=0, max_iter=10),
        callback=seen.append)
    for info in seen:
        assert np.all(np.linalg.eigvalsh(info.params.covariances)[:, 0] >= 1e-3 - 1e-12)


@pytest.mark.parametrize("variant", ["classical", "regularized"])
def test_permutation_equivariance(variant):
    d, init = _synthetic_init(200, 5, 11)
    reg = init.reg.with_etas(np.array([5.0, 50.0, 0.5]))
    order = [2, 0, 1]
    a = fit(d.values, Initialization(init.params, reg, init.index_sets),
            EmConfig(variant=variant, rel_tol=0))
    b = fit(d.values, Initialization(init.params.permuted(order), reg.permuted(order),
                                     tuple(init.index_sets[i] for i in order)),
            EmConfig(variant=variant, rel_tol=0))
    # new cluster k is old cluster order[k]
    np.testing.assert_array_equal(np.asarray(order)[b.hard_labels], a.hard_labels)


def test_fit_result_bookkeeping():
    d, init = _synthetic_init(300, 4, 5)
    res = fit(d.values, init, EmConfig(rel_tol=0), cv=CvConfig(seed=0))
    assert res.iterations_run == 40 == len(res.penalized_ll_trace)
    assert res.refresh_iterations == (11, 21, 31)
    assert len(res.eta_history) == 4
    np.testing.assert_array_equal(res.hard_labels, np.argmax(res.resp, axis=1))
    assert np.all(np.isfinite(res.condition_numbers))


def test_rel_tol_stops_early():
    d, init = _synthetic_init(300, 4, 5)
    res = fit(d.values, init, EmConfig(variant="classical", rel_tol=1e-3, max_iter=200))
    assert res.converged and res.iterations_run < 200


def test_small_clusters_still_get_penalties(rng):
    X = rng.standard_normal((40, 6))
    sets = [np.arange(0, 30), np.arange(30, 37), np.arange(37, 40)]
    cv = CvConfig(seed=0)
    etas = select_etas(X, sets, np.ones(3), cv, np.random.default_rng(0))
    assert etas[1] > 0  # seven points: three folds instead of five
    assert etas[2] == cv.grid_for(3)[-1]


def test_tiny_initial_cluster_stays_definite():
    # a 60-point sample in 30 dimensions leaves some K-means clusters under 10 points
    d = generate_gmm(SyntheticSpec(n=60, m=30, seed=26))
    init = init_from_kmeans(d.values, kmeans_fit(d.values, KMeansConfig(3, seed=26)))
    assert min(len(s) for s in init.index_sets) < 10
    res = fit(d.values, init, EmConfig(rel_tol=0), cv=CvConfig(seed=26))
    assert np.all(res.min_eigs > 0)


def test_singular_estimate_raises_penalty():
    # two far-apart groups spanning only two of five coordinates
    square = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], float)
    X = np.zeros((8, 5))
    X[:4, :2], X[4:, :2] = square, square + 100
    init = init_from_kmeans(X, kmeans_fit(X, KMeansConfig(2, seed=0)))
    res = fit(X, init, EmConfig(rel_tol=0, max_iter=3))
    assert 1 in res.repaired_iterations
    np.testing.assert_allclose(res.reg.etas, 4 * 10.0**-3)  # smallest positive candidate
    assert np.all(res.min_eigs > 0)
