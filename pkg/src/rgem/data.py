"""Data sources and preparation: synthetic mixtures, CSV ingestion, PCA, splits."""

import csv
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .exceptions import (
    DegenerateDataError,
    DomainError,
    InsufficientDataError,
    ParseError,
    SchemaError,
)
from .linalg import cholesky


@dataclass(frozen=True)
class DataMatrix:
    """Observations as rows, with optional integer ground-truth labels."""

    values: np.ndarray
    labels: np.ndarray | None = None
    class_names: tuple = ()

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(values)):
            raise ValueError("data contains NaN or Inf")
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=int)
            if labels.shape != (values.shape[0],):
                raise ValueError("labels must have one entry per row")
            if labels.size and labels.min() < 0:
                raise ValueError("labels must be nonnegative")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]

    @property
    def n_classes(self):
        if self.labels is None:
            return 0
        return max(len(self.class_names), int(self.labels.max()) + 1 if self.n else 0)

    def take(self, rows):
        rows = np.asarray(rows)
        labels = None if self.labels is None else self.labels[rows]
        return DataMatrix(self.values[rows], labels, self.class_names)


# -- synthetic data ---------------------------------------------------------

def ar1_covariance(rho, m):
    """Toeplitz matrix with entries ``rho ** |i - j|``."""
    if not -1.0 < rho < 1.0:
        raise DomainError(f"|rho| must be < 1, got {rho}")
    lags = np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
    return float(rho) ** lags


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    m: int
    n_clusters: int = 3
    priors: tuple | None = None  # None: uniform
    mean_radius: float = 2.0
    rhos: tuple = (0.8, 0.5, 0.2)
    seed: int | None = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1 or self.n_clusters < 1:
            raise ValueError("n, m and n_clusters must be positive")
        if len(self.rhos) != self.n_clusters:
            raise ValueError("one rho per cluster is required")
        if any(abs(r) >= 1 for r in self.rhos):
            raise DomainError("every |rho| must be < 1")
        if self.mean_radius < 0:
            raise ValueError("mean_radius must be nonnegative")
        priors = self.prior_vector
        if len(priors) != self.n_clusters or np.any(priors < 0) or abs(priors.sum() - 1) > 1e-12:
            raise ValueError("priors must be a probability vector of length n_clusters")

    @property
    def prior_vector(self):
        if self.priors is None:
            return np.full(self.n_clusters, 1.0 / self.n_clusters)
        return np.asarray(self.priors, dtype=float)


def sphere_points(rng, count, m, radius):
    """``count`` points uniform on the radius-``radius`` sphere in ``R^m``."""
    g = rng.standard_normal((count, m))
    return radius * g / np.linalg.norm(g, axis=1, keepdims=True)


def generate_gmm(spec, return_means=False):
    """Draw a labeled sample from a mixture with AR(1) covariances.

    Means are uniform on a sphere, labels are categorical with the configured
    priors and each point is ``mean + L z`` with ``L`` the Cholesky factor of
    its cluster's AR(1) covariance.
    """
    rng = np.random.default_rng(spec.seed)
    K, m, n = spec.n_clusters, spec.m, spec.n
    means = sphere_points(rng, K, m, spec.mean_radius)
    labels = rng.choice(K, size=n, p=spec.prior_vector)
    z = rng.standard_normal((n, m))
    X = np.empty((n, m))
    for k in range(K):
        rows = labels == k
        factor = cholesky(ar1_covariance(spec.rhos[k], m))
        X[rows] = means[k] + z[rows] @ factor.T
    data = DataMatrix(X, labels, tuple(str(k) for k in range(K)))
    return (data, means) if return_means else data


# -- CSV ingestion ----------------------------------------------------------

@dataclass(frozen=True)
class IngestionReport:
    rows_read: int
    rows_dropped: int
    values_imputed: int
    class_names: tuple
    columns: tuple = ()


def _column_index(spec, header, width, what):
    if isinstance(spec, str) and not spec.lstrip("-").isdigit():
        if header is None or spec not in header:
            raise SchemaError(f"{what} column {spec!r} not found")
        return header.index(spec)
    idx = int(spec)
    if not -width <= idx < width:
        raise SchemaError(f"{what} column {idx} out of range for {width} columns")
    return idx % width


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_csv(
    path,
    label_column=None,
    missing_token="?",
    impute="median",
    drop_columns=(),
    header=None,
    delimiter=",",
):
    """Read a delimited numeric file.

    Parameters
    ----------
    path : str or path-like
    label_column : int or str, optional
        Column holding class labels; mapped to ``0..K-1`` by first appearance.
    missing_token : str
        Token marking a missing value.
    impute : {"median", "drop_row"}
        Column-median imputation or removal of incomplete rows.
    drop_columns : sequence of int or str
        Columns to discard (identifiers).
    header : bool, optional
        Whether the first row is a header; detected when None.

    Returns
    -------
    (DataMatrix, IngestionReport)
    """
    if impute not in ("median", "drop_row"):
        raise ValueError(f"unknown impute policy {impute!r}")
    with open(path, newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh, delimiter=delimiter))]
    rows = [(ln, [t.strip() for t in r]) for ln, r in rows if r and any(t.strip() for t in r)]
    if not rows:
        raise ParseError(path, 1, "empty file")
    width = len(rows[0][1])
    names = None
    if header is None:
        first = rows[0][1]
        header = not all(_is_number(t) or t == missing_token for t in first)
        if header and label_column is not None and not isinstance(label_column, str):
            # a non-numeric label column alone does not make a header
            others = [t for j, t in enumerate(first) if j != int(label_column) % width]
            header = not all(_is_number(t) or t == missing_token for t in others)
    if header:
        names = rows[0][1]
        rows = rows[1:]

    label_idx = None
    if label_column is not None:
        label_idx = _column_index(label_column, names, width, "label")
    dropped_cols = {_column_index(c, names, width, "drop") for c in drop_columns}
    feature_cols = [j for j in range(width) if j != label_idx and j not in dropped_cols]

    values, raw_labels = [], []
    for ln, r in rows:
        if len(r) != width:
            raise ParseError(path, ln, f"expected {width} fields, got {len(r)}")
        row = []
        for j in feature_cols:
            tok = r[j]
            if tok == missing_token or tok == "":
                row.append(np.nan)
                continue
            try:
                row.append(float(tok))
            except ValueError:
                raise ParseError(path, ln, f"non-numeric value {tok!r} in column {j}") from None
        values.append(row)
        if label_idx is not None:
            tok = r[label_idx]
            if tok == missing_token or tok == "":
                raise ParseError(path, ln, "missing label")
            raw_labels.append(tok)

    X = np.array(values, dtype=float).reshape(len(values), len(feature_cols))
    missing = np.isnan(X)
    rows_read = X.shape[0]
    n_dropped = n_imputed = 0
    keep = np.ones(rows_read, dtype=bool)
    if impute == "drop_row":
        keep = ~missing.any(axis=1)
        n_dropped = int((~keep).sum())
        X = X[keep]
    elif missing.any():
        medians = np.nanmedian(X, axis=0)
        if np.any(np.isnan(medians[missing.any(axis=0)])):
            raise SchemaError("a column has no observed values to impute from")
        X = np.where(missing, medians, X)
        n_imputed = int(missing.sum())

    labels, class_names = None, ()
    if label_idx is not None:
        order = {}
        for tok in raw_labels:
            order.setdefault(tok, len(order))
        class_names = tuple(order)
        labels = np.array([order[t] for t in raw_labels], dtype=int)[keep]

    columns = tuple(names[j] for j in feature_cols) if names else ()
    report = IngestionReport(rows_read, n_dropped, n_imputed, class_names, columns)
    return DataMatrix(X, labels, class_names), report


# Schemas for the two bundled UCI files, as distributed (no header).
BREAST_CANCER = dict(label_column=10, drop_columns=(0,), missing_token="?", impute="median")
IONOSPHERE = dict(label_column=34, missing_token="?", impute="median")
DATASETS = {
    "breast_cancer": ("breast-cancer-wisconsin.data", BREAST_CANCER),
    "ionosphere": ("ionosphere.data", IONOSPHERE),
}


def dataset_path(name):
    """Path of a bundled dataset file."""
    filename, _ = DATASETS[name]
    return resources.files("rgem") / "datasets" / filename


def load_dataset(name):
    """Load a bundled UCI dataset (``"breast_cancer"`` or ``"ionosphere"``)."""
    _, schema = DATASETS[name]
    with resources.as_file(dataset_path(name)) as path:
        return load_csv(path, header=False, **schema)


# -- PCA --------------------------------------------------------------------

@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray  # (m, d), orthonormal columns
    eigenvalues: np.ndarray  # all m sample-covariance eigenvalues, descending
    threshold: float = field(default=1.0)

    @property
    def n_components(self):
        return self.basis.shape[1]

    @property
    def retained_ratio(self):
        return float(self.eigenvalues[: self.n_components].sum() / self.eigenvalues.sum())

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) @ self.basis

    def inverse_transform(self, Z):
        return np.asarray(Z, dtype=float) @ self.basis.T + self.mean

    def save(self, path):
        """Write a plain-text audit file: threshold, d, mean, eigenvalues, basis."""
        m, d = self.basis.shape
        with open(path, "w") as fh:
            fh.write(f"# pca m={m} d={d} threshold={self.threshold!r}\n")
            fh.write("mean " + " ".join(repr(float(v)) for v in self.mean) + "\n")
            fh.write("eigenvalues " + " ".join(repr(float(v)) for v in self.eigenvalues) + "\n")
            for row in self.basis:
                fh.write("basis " + " ".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path):
        threshold, mean, eig, basis = 1.0, None, None, []
        with open(path) as fh:
            for line in fh:
                key, _, rest = line.strip().partition(" ")
                if key == "#":
                    threshold = float(rest.rsplit("threshold=", 1)[1])
                elif key == "mean":
                    mean = np.array(rest.split(), dtype=float)
                elif key == "eigenvalues":
                    eig = np.array(rest.split(), dtype=float)
                elif key == "basis":
                    basis.append(np.array(rest.split(), dtype=float))
        return cls(mean, np.array(basis).reshape(len(mean), -1), eig, threshold)


def components_for(eigenvalues, threshold):
    """Smallest ``d`` whose leading eigenvalues carry ``threshold`` of the total."""
    ratios = np.cumsum(eigenvalues) / eigenvalues.sum()
    # relative slack so that threshold=1.0 is reachable despite rounding
    return int(np.argmax(ratios >= threshold * (1.0 - 1e-12))) + 1


def pca_fit(X, variance_threshold=0.95):
    """Principal axes keeping at least ``variance_threshold`` of the variance."""
    if not 0.0 < variance_threshold <= 1.0:
        raise ValueError("variance_threshold must be in (0, 1]")
    X = np.asarray(getattr(X, "values", X), dtype=float)
    n, m = X.shape
    if n < 2:
        raise InsufficientDataError("PCA needs at least 2 rows")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    eig = np.zeros(m)
    eig[: len(s)] = s**2 / (n - 1)
    if eig.sum() <= 0:
        raise DegenerateDataError("all variance is zero")
    d = components_for(eig, variance_threshold)
    basis = vt[:d].T
    # deterministic sign: largest-magnitude loading positive
    signs = np.sign(basis[np.argmax(np.abs(basis), axis=0), np.arange(d)])
    basis = basis * np.where(signs == 0, 1.0, signs)
    return PcaModel(mean, basis, eig, variance_threshold)


def pca_fit_transform(data, variance_threshold=0.95):
    """Fit PCA on ``data`` and return ``(model, projected DataMatrix)``."""
    model = pca_fit(data, variance_threshold)
    return model, replace(data, values=model.transform(data.values))


# -- splits -----------------------------------------------------------------

def _allocate(labels, total):
    """Per-class counts summing to ``total`` and proportional within one row."""
    classes, counts = np.unique(labels, return_counts=True)
    exact = counts * (total / counts.sum())
    alloc = np.floor(exact).astype(int)
    short = total - alloc.sum()
    # largest remainders first, lower class index on ties
    order = np.lexsort((classes, -(exact - alloc)))
    alloc[order[:short]] += 1
    return classes, alloc


def _stratified_pick(labels, total, rng):
    classes, alloc = _allocate(labels, total)
    picked = []
    for c, k in zip(classes, alloc):
        rows = np.flatnonzero(labels == c)
        picked.append(rng.permutation(rows)[:k])
    return np.sort(np.concatenate(picked))


def split_train_test(data, train_fraction=0.7, seed=None, return_indices=False):
    """Stratified random split with ``floor(train_fraction * n)`` training rows."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    n_train = int(np.floor(train_fraction * data.n + 1e-9))
    if data.labels is None:
        train = np.sort(rng.permutation(data.n)[:n_train])
    else:
        train = _stratified_pick(data.labels, n_train, rng)
    test = np.setdiff1d(np.arange(data.n), train)
    out = (data.take(train), data.take(test))
    return out + (train, test) if return_indices else out


def subsample(data, keep_fraction, seed=None, min_per_class=2):
    """Stratified uniform subsample keeping ``floor(keep_fraction * n)`` rows."""
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must be in (0, 1]")
    if keep_fraction == 1.0:
        return data
    rng = np.random.default_rng(seed)
    total = int(np.floor(keep_fraction * data.n + 1e-9))
    if data.labels is None:
        if total < min_per_class:
            raise InsufficientDataError(f"only {total} rows would remain")
        return data.take(np.sort(rng.permutation(data.n)[:total]))
    _, alloc = _allocate(data.labels, total)
    if alloc.min() < min_per_class:
        raise InsufficientDataError(
            f"a class would keep {alloc.min()} rows (< {min_per_class})"
        )
    return data.take(_stratified_pick(data.labels, total, rng))
