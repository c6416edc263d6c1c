"""Seeded Monte-Carlo experiment loops and CSV output.

Seeds
-----
Every random choice is driven by ``derive_seed(base_seed, *indices)``, a
32-bit value drawn from ``numpy.random.SeedSequence(base_seed,
spawn_key=indices)``. The index tuples are:

* synthetic data:      ``(0, grid_index, run)``
* method fits:         ``(1, grid_index, run)`` (synthetic) or ``(1, run)`` (real data)
* train/test split:    ``(2, run // resplit_every)``
* training subsample:  ``(3, grid_index, run)``

Real-data fit seeds do not depend on the keep fraction, so ``keep=1.0`` in
the starvation sweep reproduces the accuracy experiment run for run.
"""

import configparser
import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from statistics import median

import numpy as np

from . import data as data_mod
from .cv import CvConfig
from .em import CLASSICAL, REGULARIZED, EmConfig, fit, predict
from .exceptions import ConfigError, RgemError
from .kmeans import KMeansConfig, init_from_kmeans, kmeans_fit
from .metrics import clustering_accuracy

METHODS = ("kmeans", "gem", "rgem")
KINDS = ("synthetic_dim_sweep", "real_accuracy", "real_starvation", "single_fit")
CSV_COLUMNS = (
    "method", "dataset", "m", "n_train", "keep_fraction", "run", "seed", "accuracy",
    "iterations", "wall_ms", "min_cond", "max_cond", "eta_list",
)
SUMMARY_COLUMNS = (
    "method", "dataset", "m", "keep_fraction", "runs", "failed",
    "mean", "median", "std",
)


def derive_seed(base_seed, *indices):
    ss = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(i) for i in indices))
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "synthetic_dim_sweep"
    methods: tuple = METHODS
    n_clusters: int | None = None  # None: len(rhos) for synthetic data, class count otherwise
    repetitions: int = 20
    base_seed: int = 0
    record_timing: bool = True
    jobs: int = 1
    # K-means
    kmeans_n_init: int = 10
    kmeans_max_iter: int = 200
    kmeans_tol: float = 1e-4
    # EM
    em_max_iter: int = 40
    epsilon: float = 1e-4
    refresh_period: int = 10
    rel_tol: float = 1e-6
    # cross-validation
    cv_folds: int = 5
    cv_grid: tuple | None = None
    # synthetic data
    n: int = 500
    dims: tuple = (10, 40, 70, 100)
    rhos: tuple = (0.8, 0.5, 0.2)
    priors: tuple | None = None
    mean_radius: float = 2.0
    # real data
    dataset: str = "breast_cancer"  # bundled name or a file path
    label_column: str | None = None
    drop_columns: tuple = ()
    missing_token: str = "?"
    impute: str = "median"
    pca_threshold: float | None = 0.95
    pca_fit_on: str = "full"  # or "train"
    train_fraction: float = 0.7
    resplit_every: int = 10
    keep_fractions: tuple = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise ConfigError(f"unknown or empty methods: {sorted(bad)}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.kind == "synthetic_dim_sweep" and not self.dims:
            raise ConfigError("dims must be nonempty")
        if self.kind == "real_starvation" and not self.keep_fractions:
            raise ConfigError("keep_fractions must be nonempty")
        if self.pca_fit_on not in ("full", "train"):
            raise ConfigError("pca_fit_on must be 'full' or 'train'")
        if self.resplit_every < 1:
            raise ConfigError("resplit_every must be >= 1")
        if self.n_clusters is not None and self.n_clusters < 1:
            raise ConfigError("n_clusters must be >= 1")

    # -- derived configs

    def with_clusters(self, data):
        """Fill in ``n_clusters`` from the data's class count when unset."""
        if self.n_clusters is not None:
            return self
        return replace(self, n_clusters=max(data.n_classes, 1))

    def kmeans_config(self, seed):
        return KMeansConfig(
            self.n_clusters, self.kmeans_n_init, self.kmeans_max_iter, self.kmeans_tol, seed
        )

    def em_config(self, variant):
        return EmConfig(
            variant=variant,
            max_iter=self.em_max_iter,
            epsilon=self.epsilon,
            refresh_period=self.refresh_period,
            rel_tol=self.rel_tol,
        )

    def cv_config(self, seed):
        return CvConfig(self.cv_folds, self.cv_grid, seed)

    def synthetic_spec(self, m, seed, n=None):
        return data_mod.SyntheticSpec(
            n=self.n if n is None else n,
            m=m,
            n_clusters=len(self.rhos),
            priors=self.priors,
            mean_radius=self.mean_radius,
            rhos=self.rhos,
            seed=seed,
        )

    # -- file format

    @classmethod
    def from_file(cls, path, **overrides):
        """Read an INI file; every key may sit in any section.

        Tuples are comma-separated; ``none`` maps to None.
        """
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        values = {}
        for section in parser.sections():
            values.update(parser[section])
        return cls.from_mapping(values, **overrides)

    @classmethod
    def from_mapping(cls, values, **overrides):
        types = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            key = key.strip().replace("-", "_")
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, types[key].type)
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


def _coerce(key, raw, annotation):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if text.lower() == "none":
        return None
    ann = str(annotation)
    try:
        if "tuple" in ann:
            items = [t.strip() for t in text.split(",") if t.strip()]
            if key in ("methods", "drop_columns"):
                return tuple(items)
            return tuple(float(t) if key != "dims" else int(t) for t in items)
        if "bool" in ann:
            if text.lower() not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(text)
            return text.lower() in ("true", "yes", "1")
        if "int" in ann and "float" not in ann:
            return int(text)
        if "float" in ann:
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return text


@dataclass
class ExperimentRecord:
    method: str
    dataset: str
    m: int
    n_train: int
    keep_fraction: float
    run: int
    seed: int
    accuracy: float = math.nan
    iterations: int = 0
    wall_ms: float = 0.0
    min_cond: float = math.nan
    max_cond: float = math.nan
    etas: tuple = ()
    error: str = ""

    @property
    def failed(self):
        return bool(self.error)

    def row(self):
        eta_list = f"FAILED:{self.error}" if self.error else ";".join(_fmt(e) for e in self.etas)
        return [
            self.method, self.dataset, str(self.m), str(self.n_train), _fmt(self.keep_fraction),
            str(self.run), str(self.seed), _fmt(self.accuracy), str(self.iterations),
            _fmt(self.wall_ms), _fmt(self.min_cond), _fmt(self.max_cond), eta_list,
        ]


def _fmt(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


# -- one paired run ----------------------------------------------------------

def run_methods(train, test, cfg, seed, record_base):
    """Fit every configured method on ``train`` and score on ``test``.

    Both EM variants start from the K-means solution that is also reported as
    the K-means baseline.
    """
    K = cfg.n_clusters
    records = []
    k_seed, cv_seed = derive_seed(seed, 0), derive_seed(seed, 1)

    def make(method):
        return ExperimentRecord(method=method, seed=seed, **record_base)

    t0 = time.perf_counter()
    try:
        km = kmeans_fit(train.values, cfg.kmeans_config(k_seed))
    except RgemError as exc:
        return [replace(make(mth), error=type(exc).__name__) for mth in cfg.methods]
    km_ms = 1000 * (time.perf_counter() - t0)

    if "kmeans" in cfg.methods:
        pred = km.predict(test.values)
        rec = make("kmeans")
        rec.accuracy = clustering_accuracy(test.labels, pred, K)[0]
        rec.iterations = km.n_iter
        rec.wall_ms = km_ms
        records.append(rec)

    init = None
    for method, variant in (("gem", CLASSICAL), ("rgem", REGULARIZED)):
        if method not in cfg.methods:
            continue
        rec = make(method)
        t0 = time.perf_counter()
        try:
            if init is None:
                init = init_from_kmeans(train.values, km)
            cv = cfg.cv_config(cv_seed) if variant == REGULARIZED else None
            result = fit(train.values, init, cfg.em_config(variant), cv=cv)
            pred = predict(test.values, result.params)
        except RgemError as exc:
            rec.error = type(exc).__name__
            records.append(rec)
            continue
        rec.wall_ms = km_ms + 1000 * (time.perf_counter() - t0)
        rec.accuracy = clustering_accuracy(test.labels, pred, K)[0]
        rec.iterations = result.iterations_run
        rec.min_cond = float(np.min(result.condition_numbers))
        rec.max_cond = float(np.max(result.condition_numbers))
        if result.reg is not None:
            rec.etas = tuple(float(e) for e in result.reg.etas)
        records.append(rec)

    order = {m: i for i, m in enumerate(cfg.methods)}
    records.sort(key=lambda r: order[r.method])
    if not cfg.record_timing:
        for r in records:
            r.wall_ms = 0.0
    return records


def _synthetic_job(args):
    cfg, grid_index, m, run = args
    data_seed = derive_seed(cfg.base_seed, 0, grid_index, run)
    data = data_mod.generate_gmm(cfg.synthetic_spec(m, data_seed))
    cfg = cfg.with_clusters(data)
    base = dict(dataset="synthetic", m=m, n_train=data.n, keep_fraction=1.0, run=run)
    # no held-out set: accuracy is measured on the generated sample itself
    return run_methods(data, data, cfg, derive_seed(cfg.base_seed, 1, grid_index, run), base)


def _map(func, jobs, workers):
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(func, jobs))
    else:
        results = [func(j) for j in jobs]
    return [rec for recs in results for rec in recs]


def run_synthetic_sweep(cfg):
    """Accuracy versus dimension on freshly generated mixtures."""
    jobs = [
        (cfg, g, int(m), r)
        for g, m in enumerate(cfg.dims)
        for r in range(cfg.repetitions)
    ]
    return _map(_synthetic_job, jobs, cfg.jobs)


def load_real(cfg):
    """Load the configured dataset; returns ``(DataMatrix, tag)``."""
    if cfg.dataset in data_mod.DATASETS:
        data, _ = data_mod.load_dataset(cfg.dataset)
        return data, cfg.dataset
    schema = dict(
        label_column=cfg.label_column if cfg.label_column is not None else -1,
        missing_token=cfg.missing_token,
        impute=cfg.impute,
        drop_columns=tuple(int(c) if str(c).lstrip("-").isdigit() else c for c in cfg.drop_columns),
    )
    data, _ = data_mod.load_csv(cfg.dataset, **schema)
    tag = str(cfg.dataset).rsplit("/", 1)[-1].split(".")[0]
    return data, tag


def _prepared_split(cfg, full, split_index):
    train, test = data_mod.split_train_test(
        full, cfg.train_fraction, derive_seed(cfg.base_seed, 2, split_index)
    )
    if cfg.pca_threshold is not None and cfg.pca_fit_on == "train":
        pca = data_mod.pca_fit(train, cfg.pca_threshold)
        train = replace(train, values=pca.transform(train.values))
        test = replace(test, values=pca.transform(test.values))
    return train, test


def _prepare_full(cfg):
    full, tag = load_real(cfg)
    if cfg.pca_threshold is None or cfg.pca_fit_on == "train":
        return cfg.with_clusters(full), full, tag
    _, full = data_mod.pca_fit_transform(full, cfg.pca_threshold)
    return cfg.with_clusters(full), full, tag


def _real_job(args):
    cfg, full, tag, grid_index, keep, run = args
    train, test = _prepared_split(cfg, full, run // cfg.resplit_every)
    base = dict(dataset=tag, m=train.m, keep_fraction=keep, run=run)
    fit_seed = derive_seed(cfg.base_seed, 1, run)
    try:
        train = data_mod.subsample(train, keep, derive_seed(cfg.base_seed, 3, grid_index, run))
    except RgemError as exc:
        return [
            ExperimentRecord(method=mth, seed=fit_seed, n_train=0, error=type(exc).__name__, **base)
            for mth in cfg.methods
        ]
    base["n_train"] = train.n
    return run_methods(train, test, cfg, fit_seed, base)


def run_real_accuracy(cfg):
    """Held-out accuracy, with a fresh stratified split every ``resplit_every`` runs."""
    cfg, full, tag = _prepare_full(cfg)
    jobs = [(cfg, full, tag, 0, 1.0, r) for r in range(cfg.repetitions)]
    return _map(_real_job, jobs, cfg.jobs)


def run_real_starvation(cfg):
    """Held-out accuracy as the training split is subsampled."""
    cfg, full, tag = _prepare_full(cfg)
    jobs = [
        (cfg, full, tag, g, float(keep), r)
        for g, keep in enumerate(cfg.keep_fractions)
        for r in range(cfg.repetitions)
    ]
    return _map(_real_job, jobs, cfg.jobs)


RUNNERS = {
    "synthetic_dim_sweep": run_synthetic_sweep,
    "real_accuracy": run_real_accuracy,
    "real_starvation": run_real_starvation,
}


# -- output ------------------------------------------------------------------

def summarize(records):
    """Per (method, dataset, m, keep_fraction) accuracy statistics, failures excluded."""
    groups = {}
    for r in records:
        groups.setdefault((r.method, r.dataset, r.m, r.keep_fraction), []).append(r)
    rows = []
    for (method, dataset, m, keep), recs in groups.items():
        acc = [r.accuracy for r in recs if not r.failed]
        if acc:
            stats = (float(np.mean(acc)), float(median(acc)), float(np.std(acc)))
        else:
            stats = (math.nan,) * 3
        rows.append(dict(
            method=method, dataset=dataset, m=m, keep_fraction=keep, runs=len(recs),
            failed=len(recs) - len(acc), mean=stats[0], median=stats[1], std=stats[2],
        ))
    return rows


def summary_path(path):
    path = str(path)
    stem = path[:-4] if path.endswith(".csv") else path
    return stem + ".summary.csv"


def emit_csv(records, path, summary=True):
    """Write one row per record and, optionally, the companion summary file."""
    if not records:
        raise ValueError("no records to write")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow(r.row())
    if summary:
        with open(summary_path(path), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SUMMARY_COLUMNS)
            for s in summarize(records):
                writer.writerow([
                    s["method"], s["dataset"], s["m"], _fmt(s["keep_fraction"]), s["runs"],
                    s["failed"], _fmt(s["mean"]), _fmt(s["median"]), _fmt(s["std"]),
                ])
    return path


def read_csv(path):
    """Load records written by `emit_csv`."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            eta = row["eta_list"]
            error = eta[len("FAILED:"):] if eta.startswith("FAILED:") else ""
            etas = () if error or not eta else tuple(float(e) for e in eta.split(";"))
            out.append(ExperimentRecord(
                method=row["method"], dataset=row["dataset"], m=int(row["m"]),
                n_train=int(row["n_train"]), keep_fraction=float(row["keep_fraction"]),
                run=int(row["run"]), seed=int(row["seed"]), accuracy=float(row["accuracy"]),
                iterations=int(row["iterations"]), wall_ms=float(row["wall_ms"]),
                min_cond=float(row["min_cond"]), max_cond=float(row["max_cond"]),
                etas=etas, error=error,
            ))
    return out

