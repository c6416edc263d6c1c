"""Command-line entry point.

Verbs: ``generate``, ``fit``, ``sweep-dim``, ``real-acc``, ``real-starve``.
Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
failure in ``fit``.
"""

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import data as data_mod
from .cv import CvConfig
from .em import CLASSICAL, REGULARIZED, fit, predict
from .exceptions import (
    AllCandidatesIndefiniteError,
    ConfigError,
    DegenerateDataError,
    EmptyClusterError,
    IndefiniteError,
    InsufficientDataError,
    ParseError,
    SchemaError,
)
from .experiments import ExperimentConfig, RUNNERS, emit_csv, load_real
from .kmeans import init_from_kmeans, kmeans_fit
from .metrics import clustering_accuracy, conditioning_report

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 1, 2, 3
DATA_ERRORS = (ParseError, SchemaError, DegenerateDataError, InsufficientDataError, OSError)
NUMERICAL_ERRORS = (IndefiniteError, EmptyClusterError, AllCandidatesIndefiniteError)


def _config(args, kind):
    overrides = dict(kind=kind, base_seed=args.seed)
    if getattr(args, "jobs", None):
        overrides["jobs"] = args.jobs
    if getattr(args, "no_timing", False):
        overrides["record_timing"] = False
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def cmd_generate(args):
    cfg = _config(args, "synthetic_dim_sweep")
    m = args.m if args.m is not None else cfg.dims[0]
    spec = cfg.synthetic_spec(m, cfg.base_seed, n=args.n)
    data = data_mod.generate_gmm(spec)
    header = ",".join([f"x{j}" for j in range(data.m)] + ["label"])
    np.savetxt(
        args.out, np.column_stack([data.values, data.labels]), delimiter=",",
        header=header, comments="", fmt=["%.17g"] * data.m + ["%d"],
    )
    print(f"wrote {data.n} rows x {data.m} columns to {args.out}")
    return 0


def cmd_fit(args):
    cfg = _config(args, "single_fit")
    if args.data:
        cfg = replace(cfg, dataset=args.data, label_column=args.label_column or cfg.label_column)
    data, tag = load_real(cfg)
    cfg = cfg.with_clusters(data)
    if cfg.pca_threshold is not None:
        pca, data = data_mod.pca_fit_transform(data, cfg.pca_threshold)
        print(f"PCA: kept {pca.n_components} of {pca.basis.shape[0]} dimensions "
              f"({pca.retained_ratio:.4f} of variance)")
    K = cfg.n_clusters
    km = kmeans_fit(data.values, cfg.kmeans_config(cfg.base_seed))
    method = args.method
    if method == "kmeans":
        labels = km.labels
        print(f"kmeans: inertia {km.inertia:.6g}, {km.n_iter} iterations")
    else:
        variant = CLASSICAL if method == "gem" else REGULARIZED
        init = init_from_kmeans(data.values, km)
        cv = CvConfig(cfg.cv_folds, cfg.cv_grid, cfg.base_seed) if method == "rgem" else None
        result = fit(data.values, init, cfg.em_config(variant), cv=cv)
        labels = predict(data.values, result.params)
        print(f"{method}: {result.iterations_run} iterations, final objective "
              f"{result.penalized_ll_trace[-1]:.10g}, converged={result.converged}")
        if result.reg is not None:
            print("eta: " + ", ".join(f"{e:.6g}" for e in result.reg.etas))
        report = conditioning_report(result.params)
        for k in range(K):
            print(f"  cluster {k}: weight {result.params.weights[k]:.4f}  "
                  f"min_eig {report.min_eig[k]:.4g}  max_eig {report.max_eig[k]:.4g}  "
                  f"cond {report.condition_number[k]:.4g}")
    print(f"dataset {tag}: n={data.n} m={data.m}")
    if data.labels is not None:
        acc, _ = clustering_accuracy(data.labels, labels, max(K, data.n_classes))
        print(f"accuracy: {acc:.4f}")
    return 0


def _sweep(kind):
    def run(args):
        cfg = _config(args, kind)
        records = RUNNERS[kind](cfg)
        emit_csv(records, args.out)
        failed = sum(r.failed for r in records)
        print(f"wrote {len(records)} records ({failed} failed) to {args.out}")
        return 0
    return run


def build_parser():
    parser = argparse.ArgumentParser(prog="rgem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="INI experiment configuration")
        p.add_argument("--seed", type=int, help="base seed (overrides the config)")
        p.add_argument("--out", required=out_required, help="output CSV path")
        return p

    p = common(sub.add_parser("generate", help="write a synthetic mixture sample to CSV"))
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.set_defaults(func=cmd_generate)

    p = common(sub.add_parser("fit", help="fit one method on one dataset"), out_required=False)
    p.add_argument("--method", choices=("kmeans", "gem", "rgem"), default="rgem")
    p.add_argument("--data", help="CSV path or bundled name (breast_cancer, ionosphere)")
    p.add_argument("--label-column")
    p.set_defaults(func=cmd_fit)

    for verb, kind in (("sweep-dim", "synthetic_dim_sweep"), ("real-acc", "real_accuracy"),
                       ("real-starve", "real_starvation")):
        p = common(sub.add_parser(verb))
        p.add_argument("--jobs", type=int, help="worker processes")
        p.add_argument("--no-timing", action="store_true",
                       help="write wall_ms as 0 so repeated runs are byte-identical")
        p.set_defaults(func=_sweep(kind))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
