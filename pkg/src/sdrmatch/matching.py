"""Mahalanobis nearest-neighbour imputation of counterfactual outcomes."""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import DataError, NumericalError
from .validation import check_both_arms, check_estimand, check_outcome, check_treatment

# squared distances within this relative gap of the minimum count as ties
TIE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class MatchResult:
    matched_index: np.ndarray
    imputed_outcome: np.ndarray
    distances: np.ndarray


@dataclass
class EstimationResult:
    estimand: str
    point: float
    ci_low: float = float("nan")
    ci_high: float = float("nan")
    ci_level: float = 0.95
    n_used: int = 0
    method_tag: str = "cesd"
    seed: int = None
    config: dict = field(default_factory=dict)

    def to_dict(self):
        def clean(v):
            return None if isinstance(v, float) and math.isnan(v) else v

        return {
            "estimand": self.estimand.upper(),
            "point": clean(float(self.point)),
            "ci_low": clean(float(self.ci_low)),
            "ci_high": clean(float(self.ci_high)),
            "ci_level": self.ci_level,
            "n_used": self.n_used,
            "method_tag": self.method_tag,
            "seed": self.seed,
            "config": self.config,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def mahalanobis_distance(a, b, precision):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    P = np.atleast_2d(np.asarray(precision, dtype=float))
    if a.shape != b.shape or P.shape != (a.size, a.size):
        raise DataError("dimension mismatch between points and precision matrix")
    if not np.allclose(P, P.T) or np.linalg.eigvalsh(0.5 * (P + P.T)).min() <= 0:
        raise DataError("precision matrix must be symmetric positive definite")
    d = a - b
    return float(math.sqrt(max(d @ P @ d, 0.0)))


def reduced_covariance_precision(z, ridge=1e-8):
    """Inverse sample covariance of the rows of ``z``.

    ``ridge * I`` is added first when the smallest eigenvalue of the
    covariance is below 1e-10.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n, r = z.shape
    if n <= r:
        raise DataError(f"need more samples than dimensions to estimate a covariance ({n} <= {r})")
    cov = np.atleast_2d(np.cov(z, rowvar=False))
    if np.linalg.eigvalsh(cov).min() < 1e-10:
        cov = cov + ridge * np.eye(r)
    try:
        precision = np.linalg.inv(cov)
    except np.linalg.LinAlgError:
        raise NumericalError("covariance of reduced covariates is singular") from None
    precision = 0.5 * (precision + precision.T)
    if not np.all(np.isfinite(precision)) or np.linalg.eigvalsh(precision).min() <= 0:
        raise NumericalError("covariance of reduced covariates is not invertible")
    return precision


def _whitener(precision):
    try:
        return np.linalg.cholesky(precision)
    except np.linalg.LinAlgError:
        raise DataError("precision matrix must be symmetric positive definite") from None


def impute_counterfactuals(z, treatment, outcome, precision=None, chunk_size=2048):
    """Impute each sample's missing potential outcome from its nearest opposite-arm neighbour.

    Matching is one-to-one nearest neighbour with replacement under the
    Mahalanobis metric defined by ``precision`` (by default the inverse sample
    covariance of ``z``); ties go to the lowest sample index.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n = z.shape[0]
    w = check_treatment(treatment, n)
    y = check_outcome(outcome, n)
    check_both_arms(w)
    if precision is None:
        precision = reduced_covariance_precision(z)
    L = _whitener(np.atleast_2d(precision))
    white = z @ L

    matched = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    for arm in (0, 1):
        query = np.flatnonzero(w == arm)
        pool = np.flatnonzero(w != arm)
        for start in range(0, query.size, chunk_size):
            q = query[start:start + chunk_size]
            d2 = cdist(white[q], white[pool], "sqeuclidean")
            best = d2.min(axis=1, keepdims=True)
            # first column within tolerance of the minimum is the lowest index
            pick = np.argmax(d2 <= best * (1.0 + TIE_RTOL), axis=1)
            matched[q] = pool[pick]
            dist[q] = np.sqrt(d2[np.arange(q.size), pick])
    return MatchResult(matched, y[matched], dist)


def brute_force_match(z, treatment, precision):
    """O(n^2) pairwise scan using :func:`mahalanobis_distance`; reference for tests."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    w = np.asarray(treatment)
    n = len(w)
    matched = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    for i in range(n):
        candidates = [j for j in range(n) if w[j] != w[i]]
        d2 = [mahalanobis_distance(z[i], z[j], precision) ** 2 for j in candidates]
        best = min(d2)
        k = next(k for k, d in enumerate(d2) if d <= best * (1.0 + TIE_RTOL))
        matched[i] = candidates[k]
        dist[i] = math.sqrt(d2[k])
    return matched, dist


def _potential_outcomes(treatment, outcome, match):
    w = np.asarray(treatment)
    y = np.asarray(outcome, dtype=float)
    if match.imputed_outcome.shape[0] != y.shape[0]:
        raise DataError("match does not cover every sample")
    y1 = np.where(w == 1, y, match.imputed_outcome)
    y0 = np.where(w == 0, y, match.imputed_outcome)
    return y1, y0


def estimate_ace(data, match):
    y1, y0 = _potential_outcomes(data.treatment, data.outcome, match)
    return float(np.mean(y1 - y0))


def estimate_act(data, match):
    treated = np.asarray(data.treatment) == 1
    if not treated.any():
        raise DataError("no treated samples; the ACT is undefined")
    y1, y0 = _potential_outcomes(data.treatment, data.outcome, match)
    return float(np.mean((y1 - y0)[treated]))


def estimate_effect(data, match, estimand):
    estimand = check_estimand(estimand)
    return estimate_ace(data, match) if estimand == "ace" else estimate_act(data, match)


def match_and_estimate(z, data, estimand="ace", precision=None):
    """Match in the representation ``z`` and aggregate the chosen estimand."""
    match = impute_counterfactuals(z, data.treatment, data.outcome, precision)
    return estimate_effect(data, match, estimand)


def bootstrap_ci(data, pipeline, replicates=1000, level=0.95, seed=0, estimand="ace",
                 method_tag="cesd"):
    """Nonparametric percentile bootstrap around ``pipeline(data)``.

    ``pipeline`` maps a :class:`~sdrmatch.data.Dataset` to a point estimate.
    Replicate ``j`` resamples rows with the generator seeded by ``(seed, j)``,
    so results do not depend on execution order. Resamples with an empty
    treatment arm are redrawn, up to ``10 * replicates`` draws in total.
    """
    if replicates < 100:
        raise DataError(f"bootstrap needs at least 100 replicates, got {replicates}")
    if not 0 < level < 1:
        raise DataError(f"confidence level must be in (0, 1), got {level}")
    check_both_arms(data.treatment)
    point = float(pipeline(data))

    n = data.n
    estimates = []
    attempts = 0
    j = 0
    while len(estimates) < replicates:
        if attempts >= 10 * replicates:
            raise DataError("too many bootstrap resamples had an empty treatment arm")
        attempts += 1
        rng = np.random.default_rng([seed, j])
        j += 1
        idx = rng.integers(0, n, n)
        n_treated = int(data.treatment[idx].sum())
        if n_treated == 0 or n_treated == n:
            continue
        estimates.append(float(pipeline(data.subset(idx))))

    alpha = 1.0 - level
    low, high = np.quantile(np.asarray(estimates), [alpha / 2, 1 - alpha / 2])
    return EstimationResult(check_estimand(estimand), point, float(low), float(high),
                            level, n, method_tag, seed)
