"""Acceptance checks at full scale.

Each check records one PASS/FAIL line, printed in the terminal summary (see
conftest.py). Run alone with ``pytest tests/test_acceptance.py -v``.
"""

from dataclasses import replace
from statistics import median

import numpy as np
import pytest

from rgem.cv import CvConfig, select_eta
from rgem.data import SyntheticSpec, ar1_covariance, generate_gmm, load_dataset, pca_fit
from rgem.em import EmConfig, e_step, fit, m_step_regularized
from rgem.experiments import (
    ExperimentConfig,
    emit_csv,
    run_real_accuracy,
    run_real_starvation,
    run_synthetic_sweep,
)
from rgem.kmeans import Initialization, KMeansConfig, init_from_kmeans, kmeans_fit
from rgem.metrics import clustering_accuracy
from rgem.model import RegularizationState

RESULTS = []

# fixed 40 iterations per fit, no early stopping
SWEEP = ExperimentConfig(dims=(10, 40, 70, 100), repetitions=20, rel_tol=0.0,
                         record_timing=False)


def report(name, ok, detail):
    RESULTS.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, detail


def mean_acc(records, method, m=None, keep=None):
    acc = [r.accuracy for r in records if r.method == method and not r.failed
           and (m is None or r.m == m) and (keep is None or r.keep_fraction == keep)]
    return float(np.mean(acc)), acc


@pytest.fixture(scope="module")
def sweep_500():
    return run_synthetic_sweep(SWEEP)


@pytest.fixture(scope="module")
def sweep_1000():
    return run_synthetic_sweep(replace(SWEEP, n=1000))


def test_01_dimension_sweep(sweep_500):
    g10, g100 = (mean_acc(sweep_500, "gem", m)[0] for m in (10, 100))
    r10, r100 = (mean_acc(sweep_500, "rgem", m)[0] for m in (10, 100))
    checks = [g10 - g100 >= 0.10, abs(r10 - r100) <= 0.05, r100 - g100 >= 0.10]
    report("1 dimension sweep n=500", all(checks),
           f"G-EM {g10:.3f}->{g100:.3f}, RG-EM {r10:.3f}->{r100:.3f}, "
           f"gap at m=100 {r100 - g100:+.3f} (checks {checks})")


def test_02_breakdown_location(sweep_1000):
    base = mean_acc(sweep_1000, "gem", 10)[0]
    drops = {m: base - mean_acc(sweep_1000, "gem", m)[0] for m in (40, 70, 100)}
    ok = drops[40] < 0.10 and max(drops[70], drops[100]) >= 0.10
    report("2 breakdown location n=1000", ok,
           "G-EM drop from m=10: " + ", ".join(f"m={m} {d:+.3f}" for m, d in drops.items()))


def test_03_pca_dimensions():
    got = {}
    for name in ("breast_cancer", "ionosphere"):
        data, _ = load_dataset(name)
        got[name] = pca_fit(data, 0.95).n_components
    report("3 PCA dimensions at 95%", got == {"breast_cancer": 8, "ionosphere": 26},
           f"breast_cancer d={got['breast_cancer']} (want 8), "
           f"ionosphere d={got['ionosphere']} (want 26)")


@pytest.mark.parametrize("dataset", ["breast_cancer", "ionosphere"])
def test_04_real_ordering(dataset):
    cfg = ExperimentConfig(kind="real_accuracy", dataset=dataset, repetitions=100,
                           rel_tol=0.0, record_timing=False)
    recs = run_real_accuracy(cfg)
    med = {m: median(mean_acc(recs, m)[1]) for m in ("kmeans", "gem", "rgem")}
    gaps = [med["gem"] - med["kmeans"], med["rgem"] - med["kmeans"]]
    ok = med["rgem"] >= med["gem"] >= med["kmeans"] and all(0.05 <= g <= 0.15 for g in gaps)
    failed = sum(r.failed for r in recs)
    report(f"4 real-data ordering ({dataset})", ok,
           "medians " + ", ".join(f"{k} {v:.4f}" for k, v in med.items())
           + f", EM minus K-means {gaps[0]:+.3f} / {gaps[1]:+.3f}, {failed} failed runs")


def test_05_starvation():
    cfg = ExperimentConfig(kind="real_starvation", dataset="ionosphere", repetitions=100,
                           keep_fractions=(1.0, 0.7, 0.4, 0.1), rel_tol=0.0,
                           record_timing=False)
    recs = run_real_starvation(cfg)
    km = [mean_acc(recs, "kmeans", keep=k)[0] for k in cfg.keep_fractions]
    g, r = (mean_acc(recs, m, keep=0.1)[0] for m in ("gem", "rgem"))
    ok = max(km) - min(km) < 0.05 and r >= g
    report("5 starvation on ionosphere", ok,
           f"K-means range {max(km) - min(km):.3f}, at keep=0.1 RG-EM {r:.3f} vs G-EM {g:.3f}")


@pytest.fixture(scope="module")
def ascent_runs():
    """200 regularized fits over mixed n/m, every M-step recorded."""
    runs = []
    shapes = [(n, m) for n in (60, 150, 400) for m in (3, 10, 30, 60)]
    for seed in range(200):
        n, m = shapes[seed % len(shapes)]
        d = generate_gmm(SyntheticSpec(n=n, m=m, seed=seed))
        init = init_from_kmeans(d.values, kmeans_fit(d.values, KMeansConfig(3, seed=seed)))
        seen = []
        res = fit(d.values, init, EmConfig(rel_tol=0.0), cv=CvConfig(seed=seed),
                  callback=seen.append)
        runs.append((res, seen))
    return runs


def test_06_ascent(ascent_runs):
    violations = 0
    for res, _ in ascent_runs:
        values = [res.initial_penalized_ll, *res.penalized_ll_trace]
        skip = set(res.refresh_iterations) | set(res.repaired_iterations)
        for t in range(1, len(values)):
            if t not in skip and values[t] < values[t - 1] - 1e-8 * abs(values[t - 1]):
                violations += 1
    report("6 ascent between refreshes", violations == 0,
           f"{violations} violations over {len(ascent_runs)} fits")


def test_07_shrinkage_floor(ascent_runs):
    violations = steps = 0
    for _, seen in ascent_runs:
        for info in seen:
            lo = np.linalg.eigvalsh(info.params.covariances)[:, 0]
            violations += int(np.sum(lo < (1 - info.betas) * info.reg.scales - 1e-10))
            steps += 1
    report("7 shrinkage eigenvalue floor", violations == 0,
           f"{violations} violations over {steps} M-steps")


def test_08_penalty_limits():
    mismatched = 0
    worst = 0.0
    for seed in range(50):
        d = generate_gmm(SyntheticSpec(n=200, m=8, seed=seed))
        init = init_from_kmeans(d.values, kmeans_fit(d.values, KMeansConfig(3, seed=seed)))
        zero = Initialization(init.params, init.reg.with_etas(np.zeros(3)), init.index_sets)
        a = fit(d.values, zero, EmConfig(variant="regularized", rel_tol=0.0))
        b = fit(d.values, zero, EmConfig(variant="classical", epsilon=0.0, rel_tol=0.0))
        mismatched += not np.array_equal(a.penalized_ll_trace, b.penalized_ll_trace)
        heavy = RegularizationState(init.reg.targets, init.reg.scales, np.full(3, 1e300))
        p = m_step_regularized(d.values, e_step(d.values, init.params), heavy)
        worst = max(worst, float(np.max(np.abs(p.covariances - heavy.targets))))
    report("8 penalty limits", mismatched == 0 and worst <= 1e-12,
           f"{mismatched}/50 traces differ at eta=0, max |Sigma - T| at eta=1e300 {worst:.1e}")


def test_09_accuracy_oracle():
    rng = np.random.default_rng(0)
    differ = 0
    for _ in range(500):
        K = int(rng.integers(2, 6))
        y, p = rng.integers(0, K, 200), rng.integers(0, K, 200)
        a = clustering_accuracy(y, p, K, method="brute")[0]
        b = clustering_accuracy(y, p, K, method="assignment")[0]
        differ += a != b
    report("9 brute force vs assignment", differ == 0, f"{differ}/500 disagreements")


def test_10_cv_monte_carlo():
    iso = low = 0
    L = np.linalg.cholesky(ar1_covariance(0.9, 5))
    for r in range(50):
        rng = np.random.default_rng(r)
        X = np.sqrt(2.0) * rng.standard_normal((30, 20))
        rep = select_eta(X, np.arange(30), 2.0, CvConfig(seed=r))
        iso += rep.eta == rep.grid[-1]
        Y = rng.standard_normal((2000, 5)) @ L.T
        rep = select_eta(Y, np.arange(2000), 1.0, CvConfig(seed=r))
        low += rep.eta <= np.median(rep.grid)
    report("10 cross-validation sanity", iso >= 40 and low >= 40,
           f"isotropic: grid max chosen {iso}/50 (need 40); "
           f"AR(0.9): lower half chosen {low}/50 (need 40)")


def test_11_determinism(sweep_500, tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(sweep_500, first)
    emit_csv(run_synthetic_sweep(SWEEP), second)
    same = first.read_bytes() == second.read_bytes()
    report("11 byte-identical sweep", same, f"{len(sweep_500)} records, identical={same}")
