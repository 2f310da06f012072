"""Command-line interface: ``sdrmatch {reduce,estimate,benchmark,diagnose,synth}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import SyntheticSpec, generate_synthetic, load_csv, save_synthetic
from .estimators import FixedProjectionMatching
from .evaluation import (METHODS, make_estimator, propensity_overlap, reduced_overlap,
                         run_benchmark)
from .exceptions import DataError, NumericalError
from .kdr import KernelDimensionReduction, Projection

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("sdrmatch")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _level(text):
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"expected a level in (0, 1), got {text}")
    return value


def _add_input(p, required=True):
    p.add_argument("--input", type=Path, required=required, metavar="PATH",
                   help="CSV file with a header row")
    p.add_argument("--treatment-col", default="w", metavar="NAME")
    p.add_argument("--outcome-col", default="y", metavar="NAME")


def _add_kdr(p):
    g = p.add_argument_group("kernel dimension reduction")
    g.add_argument("--dim", type=_positive_int, default=2, metavar="R",
                   help="reduced dimension (default: 2)")
    g.add_argument("--epsilon", type=_positive_float, default=1e-4, metavar="E",
                   help="regulariser (default: 1e-4)")
    g.add_argument("--sigma", type=_positive_float, default=5.0, metavar="D",
                   help="Gaussian kernel width (default: 5)")
    g.add_argument("--max-iter", type=int, default=20, metavar="I",
                   help="gradient iterations (default: 20)")
    g.add_argument("--step", type=_positive_float, default=1.0, metavar="B",
                   help="initial line-search step (default: 1)")
    g.add_argument("--no-standardize", action="store_true",
                   help="use covariates on their original scale")


def _add_estimation(p, method=True):
    p.add_argument("--estimand", choices=("ace", "act"), default="ace")
    if method:
        p.add_argument("--method", choices=sorted(METHODS), default="cesd")
    p.add_argument("--bootstrap", type=int, default=0, metavar="N",
                   help="percentile bootstrap replicates, 0 to skip (default: 0)")
    p.add_argument("--ci-level", type=_level, default=0.95, metavar="L")


def build_parser():
    parser = _Parser(prog="sdrmatch",
                     description="Causal effect estimation by kernel dimension reduction "
                                 "and nearest-neighbour matching.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("reduce", help="learn a projection and write it as JSON")
    _add_input(p)
    _add_kdr(p)
    p.add_argument("--seed", type=int, default=0, metavar="S")
    p.add_argument("--output", type=Path, metavar="PATH", help="default: stdout")

    p = sub.add_parser("estimate", help="estimate an effect and write the result as JSON")
    _add_input(p)
    _add_kdr(p)
    _add_estimation(p)
    p.add_argument("--projection", type=Path, metavar="PATH",
                   help="reuse a projection written by 'reduce' (cesd only)")
    p.add_argument("--seed", type=int, default=0, metavar="S")
    p.add_argument("--output", type=Path, metavar="PATH", help="default: stdout")

    p = sub.add_parser("benchmark", help="compare methods over several seeds")
    _add_input(p, required=False)
    _add_kdr(p)
    _add_estimation(p, method=False)
    p.add_argument("--method", action="append", choices=sorted(METHODS),
                   help="repeatable; default: all methods")
    p.add_argument("--seed", type=int, default=0, metavar="S", help="first seed")
    p.add_argument("--n-seeds", type=_positive_int, default=10, metavar="K",
                   help="run seeds S .. S+K-1 (default: 10)")
    p.add_argument("--truth", type=float, metavar="T",
                   help="known effect for --input data")
    p.add_argument("--jobs", type=_positive_int, default=1, metavar="N")
    _add_synth_options(p, "synthetic data (used when --input is absent)")
    p.add_argument("--output", type=Path, metavar="PATH", help="default: stdout")

    p = sub.add_parser("diagnose", help="write overlap histograms as CSV")
    _add_input(p)
    _add_kdr(p)
    p.add_argument("--seed", type=int, default=0, metavar="S")
    p.add_argument("--projection", type=Path, metavar="PATH")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--output", type=Path, required=True, metavar="DIR",
                   help="directory for the CSV files")

    p = sub.add_parser("synth", help="draw a synthetic dataset with known effects")
    _add_synth_options(p, "generator")
    p.add_argument("--seed", type=int, default=0, metavar="S")
    p.add_argument("--output", type=Path, required=True, metavar="PATH",
                   help="CSV path; metadata goes next to it as .meta.json")
    return parser


def _add_synth_options(p, title):
    g = p.add_argument_group(title)
    g.add_argument("--n", type=_positive_int, default=500)
    g.add_argument("--p", type=_positive_int, default=10)
    g.add_argument("--r-true", type=_positive_int, default=2)
    g.add_argument("--effect", type=float, default=2.0)
    g.add_argument("--confounding", type=float, default=1.0)
    g.add_argument("--noise-sd", type=_positive_float, default=1.0)
    g.add_argument("--heterogeneity", type=float, default=0.0)


def _synth_spec(args):
    return SyntheticSpec(n=args.n, p=args.p, r_true=args.r_true, effect=args.effect,
                         confounding_strength=args.confounding, noise_sd=args.noise_sd,
                         seed=args.seed, effect_heterogeneity=args.heterogeneity)


def _kdr_params(args):
    return dict(n_components=args.dim, epsilon=args.epsilon, kernel_width=args.sigma,
                max_iter=args.max_iter, step_size=args.step,
                standardize=not args.no_standardize)


def _check_common(args):
    if getattr(args, "max_iter", 0) < 0:
        raise UsageError("--max-iter must be >= 0")
    bootstrap = getattr(args, "bootstrap", 0)
    if bootstrap and bootstrap < 100:
        raise UsageError("--bootstrap must be 0 or at least 100")
    if getattr(args, "bins", 10) < 10:
        raise UsageError("--bins must be at least 10")


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        log.info("wrote %s", path)


def _load(args):
    return load_csv(args.input, args.treatment_col, args.outcome_col)


def _projection(args, data):
    if args.projection is not None:
        try:
            projection = Projection.from_json(args.projection)
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read projection {args.projection}: {exc}") from None
        if projection.input_dim != data.p:
            raise DataError(f"projection expects {projection.input_dim} covariates, "
                            f"data has {data.p}")
        return projection
    reducer = KernelDimensionReduction(random_state=args.seed, **_kdr_params(args))
    return reducer.fit(data.covariates, data.treatment).projection_


def cmd_reduce(args):
    data = _load(args)
    reducer = KernelDimensionReduction(random_state=args.seed, **_kdr_params(args))
    reducer.fit(data.covariates, data.treatment)
    payload = reducer.projection_.to_dict()
    payload["column_names"] = list(data.column_names)
    payload["objective_history"] = reducer.trace_.objective_history
    payload["converged"] = reducer.trace_.converged
    _emit(json.dumps(payload, indent=2) + "\n", args.output)


def cmd_estimate(args):
    data = _load(args)
    if args.projection is not None:
        if args.method != "cesd":
            raise UsageError("--projection only applies to --method cesd")
        est = FixedProjectionMatching(_projection(args, data), args.estimand, args.bootstrap,
                                      args.ci_level, args.seed)
    else:
        est = make_estimator(args.method, args.estimand, args.seed, args.bootstrap,
                             args.ci_level, **_kdr_params(args))
    result = est.estimate(data.covariates, data.treatment, data.outcome)
    _emit(result.to_json(), args.output)


def cmd_benchmark(args):
    seeds = range(args.seed, args.seed + args.n_seeds)
    params = dict(n_bootstrap=args.bootstrap, ci_level=args.ci_level, **_kdr_params(args))
    if args.input is not None:
        source, dataset_id = _load(args), args.input.name
    else:
        source, dataset_id = _synth_spec(args), "synthetic"
    report = run_benchmark(source, args.method or sorted(METHODS), seeds, args.truth,
                           args.estimand, args.jobs, dataset_id, **params)
    _emit(report.to_json(), args.output)


def _write_overlap(diag, path):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_center", "treated_density", "control_density"])
        writer.writerows(diag.rows())


def cmd_diagnose(args):
    data = _load(args)
    projection = _projection(args, data)
    reducer = KernelDimensionReduction.from_projection(projection)
    diags = reduced_overlap(reducer.transform(data.covariates), data.treatment, args.bins)
    diags.append(propensity_overlap(data, args.bins))

    args.output.mkdir(parents=True, exist_ok=True)
    summary = {}
    for diag in diags:
        path = args.output / f"overlap_{diag.label}.csv"
        _write_overlap(diag, path)
        summary[diag.label] = {"coefficient": diag.coefficient, "csv": str(path)}
    summary["mean_reduced_coefficient"] = float(
        np.mean([d.coefficient for d in diags if d.label != "propensity"]))
    _emit(json.dumps(summary, indent=2, sort_keys=True) + "\n", None)


def cmd_synth(args):
    synth = generate_synthetic(_synth_spec(args))
    args.output.parent.mkdir(parents=True, exist_ok=True)
    csv_path, meta_path = save_synthetic(synth, args.output)
    log.info("wrote %s and %s", csv_path, meta_path)


COMMANDS = {
    "reduce": cmd_reduce,
    "estimate": cmd_estimate,
    "benchmark": cmd_benchmark,
    "diagnose": cmd_diagnose,
    "synth": cmd_synth,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    logging.captureWarnings(True)
    try:
        _check_common(args)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sdrmatch: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"sdrmatch: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"sdrmatch: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
