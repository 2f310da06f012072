"""Accuracy metrics, overlap diagnostics and multi-method benchmarks."""

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .baselines import MahalanobisMatching, PropensityScoreMatching, fit_propensity
from .data import Dataset, SyntheticSpec, generate_synthetic, with_seed
from .estimators import KernelSDRMatching
from .kdr import KdrConfig, fit_kdr
from .exceptions import DataError, SdrMatchError
from .validation import check_both_arms, check_estimand, check_treatment

METHODS = {
    "cesd": KernelSDRMatching,
    "mdm": MahalanobisMatching,
    "psm": PropensityScoreMatching,
}

# KernelSDRMatching parameters that a benchmark config may override
CESD_PARAMS = ("n_components", "epsilon", "kernel_width", "max_iter", "step_size", "tol",
               "standardize", "refit_in_bootstrap")


def rmse(estimates, truth):
    """Root-mean-square error of ``estimates`` around ``truth`` (scalar or per-estimate)."""
    est = np.asarray(estimates, dtype=float).reshape(-1)
    if est.size == 0:
        raise DataError("rmse needs at least one estimate")
    return float(np.sqrt(np.mean((est - np.asarray(truth, dtype=float)) ** 2)))


def bias_percent(estimate, truth):
    """Relative error ``100 * (estimate - truth) / truth``."""
    if truth == 0:
        raise DataError("relative bias is undefined for a zero true effect; "
                        "report the absolute bias (estimate - truth) instead")
    return 100.0 * (estimate - truth) / truth


def naive_difference(data):
    """Difference in mean outcome between the treated and control arms."""
    check_both_arms(data.treatment)
    w = data.treatment == 1
    return float(data.outcome[w].mean() - data.outcome[~w].mean())


@dataclass(frozen=True, eq=False)
class OverlapDiagnostic:
    """Common-bin histograms of one variable in each arm, each with unit mass.

    ``coefficient`` is the area under ``min(treated_density, control_density)``:
    1 for identical distributions, 0 for disjoint supports.
    """

    label: str
    bin_edges: np.ndarray
    treated_density: np.ndarray
    control_density: np.ndarray
    coefficient: float

    @property
    def bin_centers(self):
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def rows(self):
        """``(bin_center, treated_density, control_density)`` tuples for CSV output."""
        return list(zip(self.bin_centers.tolist(), self.treated_density.tolist(),
                        self.control_density.tolist()))


def _bin_counts(values, lo, width, bins):
    idx = np.floor((values - lo) / width).astype(np.int64)
    return np.bincount(np.clip(idx, 0, bins - 1), minlength=bins)


def overlap_diagnostic(values, treatment, bins=50, label="value"):
    """Overlap of the treated and control distributions of ``values``.

    Both arms are binned on ``bins`` equal-width bins spanning the pooled
    range. If all values coincide the two distributions are identical and the
    coefficient is 1.
    """
    if bins < 10:
        raise DataError(f"overlap diagnostic needs at least 10 bins, got {bins}")
    v = np.asarray(values, dtype=float).reshape(-1)
    w = check_treatment(treatment, v.shape[0])
    check_both_arms(w)
    if not np.all(np.isfinite(v)):
        raise DataError("values contain non-finite entries")

    lo, hi = float(v.min()), float(v.max())
    span = hi - lo
    if span <= 0:
        span = 1.0
        lo -= 0.5
    width = span / bins
    edges = lo + width * np.arange(bins + 1)

    densities = []
    for arm in (1, 0):
        counts = _bin_counts(v[w == arm], lo, width, bins)
        densities.append(counts / (counts.sum() * width))
    treated, control = densities
    coef = float(np.minimum(treated, control).sum() * width)
    return OverlapDiagnostic(label, edges, treated, control, min(max(coef, 0.0), 1.0))


def propensity_overlap(data, bins=50):
    """Overlap diagnostic of the fitted logistic propensity score."""
    scores = fit_propensity(data).predict(data.covariates)
    return overlap_diagnostic(scores, data.treatment, bins, label="propensity")


def reduced_overlap(z, treatment, bins=50):
    """One overlap diagnostic per column of the reduced covariates ``z``."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    return [overlap_diagnostic(z[:, k], treatment, bins, label=f"z{k + 1}")
            for k in range(z.shape[1])]


def make_estimator(method, estimand="ace", seed=0, n_bootstrap=0, ci_level=0.95, **params):
    """Instantiate the estimator registered under ``method``.

    ``params`` holds CESD tunables; they are ignored by the baselines.
    """
    if method not in METHODS:
        raise DataError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    common = dict(estimand=estimand, n_bootstrap=n_bootstrap, ci_level=ci_level,
                  random_state=seed)
    if method == "cesd":
        common.update({k: v for k, v in params.items() if k in CESD_PARAMS})
    return METHODS[method](**common)


@dataclass
class BenchmarkReport:
    """Per-method accuracy summary plus the individual runs it aggregates.

    ``runs`` holds one record per (method, seed), sorted by method then seed.
    Metric fields are ``None`` when no ground truth is available.
    """

    methods: list
    runs: list
    metadata: dict = field(default_factory=dict)

    def to_dict(self, include_runtime=True):
        def strip(rows):
            if include_runtime:
                return rows
            return [{k: v for k, v in row.items() if k != "runtime_seconds"} for row in rows]

        return {"metadata": self.metadata, "methods": strip(self.methods),
                "runs": strip(self.runs)}

    def to_json(self, include_runtime=True):
        return json.dumps(self.to_dict(include_runtime), indent=2, sort_keys=True) + "\n"

    def row(self, method):
        for row in self.methods:
            if row["method_tag"] == method:
                return row
        raise KeyError(method)


def _finite(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def _resolve(source, seed, estimand, truth):
    if isinstance(source, SyntheticSpec):
        synth = generate_synthetic(with_seed(source, seed))
        oracle = synth.true_ace if estimand == "ace" else synth.true_act
        return synth.dataset, oracle if truth is None else truth
    return source, truth


def _run_one(source, method, seed, estimand, truth, params):
    data, truth = _resolve(source, seed, estimand, truth)
    record = {"method_tag": method, "seed": seed, "truth": truth}
    start = time.perf_counter()
    try:
        est = make_estimator(method, estimand, seed, **params)
        result = est.estimate(data.covariates, data.treatment, data.outcome)
    except (SdrMatchError, ArithmeticError, np.linalg.LinAlgError) as exc:
        record.update(estimate=None, ci_low=None, ci_high=None,
                      error=f"{type(exc).__name__}: {exc}")
    else:
        record.update(estimate=result.point, ci_low=_finite(result.ci_low),
                      ci_high=_finite(result.ci_high), error=None)
    record["runtime_seconds"] = time.perf_counter() - start
    return record


def _summarize(method, records):
    ok = [r for r in records if r["error"] is None]
    row = {"method_tag": method, "n_runs": len(records), "n_failed": len(records) - len(ok),
           "mean_estimate": None, "sd_estimate": None, "truth": None, "rmse": None,
           "bias_percent": None, "ci_coverage": None,
           "runtime_seconds": sum(r["runtime_seconds"] for r in records)}
    if not ok:
        return row
    est = np.array([r["estimate"] for r in ok])
    row["mean_estimate"] = float(est.mean())
    row["sd_estimate"] = float(est.std(ddof=1)) if est.size > 1 else 0.0
    if ok[0]["truth"] is None:
        return row
    truths = np.array([r["truth"] for r in ok], dtype=float)
    row["truth"] = float(truths.mean())
    row["rmse"] = rmse(est, truths)
    row["bias_percent"] = (bias_percent(row["mean_estimate"], row["truth"])
                           if row["truth"] != 0 else None)
    with_ci = [r for r in ok if r["ci_low"] is not None]
    if with_ci:
        row["ci_coverage"] = float(np.mean([r["ci_low"] <= r["truth"] <= r["ci_high"]
                                            for r in with_ci]))
    return row


def run_benchmark(source, methods=("cesd", "mdm", "psm"), seeds=(0,), truth=None,
                  estimand="ace", n_jobs=1, dataset_id=None, **params):
    """Run every method for every seed and aggregate accuracy metrics.

    Parameters
    ----------
    source : Dataset or SyntheticSpec
        A fixed dataset, or a generator spec that is redrawn with each seed
        (its oracle effect then serves as the truth unless ``truth`` is given).
    methods : sequence of {'cesd', 'mdm', 'psm'}
    seeds : sequence of int
        Each seed drives the estimator (and the generator for synthetic sources).
    truth : float, optional
        Known effect; without it only estimates and intervals are reported.
    n_jobs : int
        Parallel workers; results do not depend on it.
    **params
        ``n_bootstrap``, ``ci_level`` and CESD tunables.

    Failures of a single run are recorded in its ``error`` field and do not
    stop the others.
    """
    methods = sorted(set(methods))
    if not methods:
        raise DataError("run_benchmark needs at least one method")
    for m in methods:
        if m not in METHODS:
            raise DataError(f"unknown method {m!r}; choose from {sorted(METHODS)}")
    seeds = sorted({int(s) for s in seeds})
    if not seeds:
        raise DataError("run_benchmark needs at least one seed")
    estimand = check_estimand(estimand)
    if not isinstance(source, (Dataset, SyntheticSpec)):
        raise DataError("source must be a Dataset or a SyntheticSpec")

    tasks = [(m, s) for m in methods for s in seeds]
    records = Parallel(n_jobs=n_jobs)(
        delayed(_run_one)(source, m, s, estimand, truth, params) for m, s in tasks)
    records.sort(key=lambda r: (r["method_tag"], r["seed"]))

    summary = [_summarize(m, [r for r in records if r["method_tag"] == m]) for m in methods]
    synthetic = isinstance(source, SyntheticSpec)
    metadata = {
        "dataset": dataset_id or ("synthetic" if synthetic else "dataset"),
        "n": source.n,
        "p": source.p,
        "estimand": estimand.upper(),
        "seeds": seeds,
        "truth": truth,
        "config": dict(sorted(params.items())),
    }
    if synthetic:
        metadata["synthetic_spec"] = asdict(source)
    return BenchmarkReport(summary, records, metadata)


def time_kdr_iterations(n, p, reduced_dim=2, iterations=5, seed=0, repeats=1):
    """Mean wall time per accepted KDR iteration on standard-normal covariates.

    The treatment depends on the first covariate so the objective is not flat.
    Returns the best of ``repeats`` timings, in seconds per iteration.
    """
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    w = (X[:, 0] + rng.standard_normal(n) > 0).astype(np.int64)
    config = KdrConfig(reduced_dim=reduced_dim, max_iterations=iterations,
                       convergence_tol=1e-300, seed=seed)
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        _, trace = fit_kdr(X, w, config)
        elapsed = time.perf_counter() - start
        best = min(best, elapsed / max(trace.iterations_run, 1))
    return best
