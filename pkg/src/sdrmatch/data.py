"""Dataset container, CSV ingestion, standardization and a synthetic generator."""

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import DataError
from .validation import check_covariates, check_outcome, check_treatment


def _frozen(arr):
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observational sample of covariates, a binary treatment and an outcome.

    Parameters
    ----------
    covariates : array of shape (n, p)
    treatment : array of shape (n,)
        Integer 0/1 treatment indicator.
    outcome : array of shape (n,)
    column_names : sequence of str, optional
        Covariate names, defaults to ``x1 .. xp``.
    """

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    column_names: tuple = ()

    def __post_init__(self):
        X = check_covariates(self.covariates, "covariates")
        n, p = X.shape
        w = check_treatment(self.treatment, n)
        y = check_outcome(self.outcome, n)
        names = tuple(self.column_names) or tuple(f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise DataError(f"got {len(names)} column names for {p} covariates")
        object.__setattr__(self, "covariates", _frozen(X))
        object.__setattr__(self, "treatment", _frozen(w))
        object.__setattr__(self, "outcome", _frozen(y))
        object.__setattr__(self, "column_names", names)

    @property
    def n(self):
        return self.covariates.shape[0]

    @property
    def p(self):
        return self.covariates.shape[1]

    @property
    def n_treated(self):
        return int(self.treatment.sum())

    def subset(self, index):
        index = np.asarray(index)
        return Dataset(self.covariates[index], self.treatment[index],
                       self.outcome[index], self.column_names)

    def with_covariates(self, covariates, column_names=None):
        return Dataset(covariates, self.treatment, self.outcome,
                       self.column_names if column_names is None else column_names)


@dataclass(frozen=True)
class StandardizationReport:
    means: np.ndarray
    stddevs: np.ndarray

    def apply(self, X):
        return (np.asarray(X, dtype=float) - self.means) / self.stddevs

    def to_dict(self):
        return {"means": self.means.tolist(), "stddevs": self.stddevs.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["means"], float), np.asarray(d["stddevs"], float))


def _parse_float(text, row, col):
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"non-numeric value {text!r} at row {row}, column {col!r}") from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {text!r} at row {row}, column {col!r}")
    return value


def load_csv(path, treatment_col, outcome_col):
    """Read a comma-separated file with a header row into a :class:`Dataset`.

    Every column other than ``treatment_col`` and ``outcome_col`` becomes a
    covariate, in file order. Row numbers in error messages are 1-based data
    rows (the header is row 0).
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        for col in (treatment_col, outcome_col):
            if col not in header:
                raise DataError(f"column {col!r} not found in {path}; header is {header}")
        t_idx = header.index(treatment_col)
        y_idx = header.index(outcome_col)
        cov_idx = [j for j in range(len(header)) if j not in (t_idx, y_idx)]
        if not cov_idx:
            raise DataError(f"{path} has no covariate columns")

        X, w, y = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"row {row_no} has {len(row)} fields, expected {len(header)}")
            t_val = row[t_idx].strip()
            try:
                t_num = float(t_val)
            except ValueError:
                t_num = None
            if t_num not in (0.0, 1.0):
                raise DataError(f"non-binary treatment at row {row_no}: {t_val!r}")
            w.append(int(t_num))
            y.append(_parse_float(row[y_idx].strip(), row_no, outcome_col))
            X.append([_parse_float(row[j].strip(), row_no, header[j]) for j in cov_idx])

    if not X:
        raise DataError(f"{path} contains a header but no data rows")
    return Dataset(np.array(X), np.array(w), np.array(y), [header[j] for j in cov_idx])


def write_csv(data, path, treatment_col="w", outcome_col="y"):
    """Write ``data`` using the schema read by :func:`load_csv`."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([treatment_col, outcome_col, *data.column_names])
        for i in range(data.n):
            writer.writerow([int(data.treatment[i]), repr(float(data.outcome[i])),
                             *(repr(float(v)) for v in data.covariates[i])])
    return path


def standardize(data):
    """Center each covariate and scale it to unit (population) standard deviation.

    Returns the transformed dataset and the :class:`StandardizationReport`
    needed to apply the same map to new rows.
    """
    X = data.covariates
    means = X.mean(axis=0)
    stddevs = X.std(axis=0)
    scale = np.maximum(np.abs(means), 1.0)
    zero = stddevs <= 1e-12 * scale
    if zero.any():
        bad = [data.column_names[j] for j in np.flatnonzero(zero)]
        raise DataError(f"zero-variance covariate column(s): {', '.join(bad)}")
    report = StandardizationReport(means, stddevs)
    return data.with_covariates(report.apply(X)), report


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic confounded-data generator.

    ``effect_heterogeneity`` adds a per-sample effect proportional to the
    confounding index, so the average effect on the treated differs from the
    average effect; it defaults to 0 (constant effect).
    """

    n: int = 500
    p: int = 10
    r_true: int = 2
    effect: float = 2.0
    confounding_strength: float = 1.0
    noise_sd: float = 1.0
    seed: int = 0
    effect_heterogeneity: float = 0.0

    def __post_init__(self):
        if self.n < 2 or self.p < 1:
            raise DataError("n must be >= 2 and p >= 1")
        if not 1 <= self.r_true <= self.p:
            raise DataError(f"r_true must be in [1, p], got {self.r_true}")
        if self.confounding_strength < 0:
            raise DataError("confounding_strength must be >= 0")
        if self.noise_sd <= 0:
            raise DataError("noise_sd must be > 0")


@dataclass(frozen=True, eq=False)
class SyntheticData:
    dataset: Dataset
    true_ace: float
    true_projection: np.ndarray
    true_act: float
    potential_outcomes: np.ndarray = field(repr=False)
    propensity: np.ndarray = field(repr=False)
    spec: SyntheticSpec = None

    @property
    def individual_effects(self):
        return self.potential_outcomes[:, 1] - self.potential_outcomes[:, 0]

    def metadata(self):
        return {
            "true_ace": self.true_ace,
            "true_act": self.true_act,
            "true_projection": self.true_projection.tolist(),
            "spec": asdict(self.spec),
        }


def _random_orthonormal(rng, rows, cols):
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


def generate_synthetic(spec):
    """Draw a confounded dataset whose ground-truth effects are known exactly.

    Covariates are i.i.d. standard normal. A random orthonormal ``p x r_true``
    matrix defines the true reduced covariates ``z = Psi_true^T x``; a random
    rotation of ``z`` gives coordinates ``u``, with ``u_1 = a^T z`` for the unit
    vector ``a``. Treatment and outcome depend on ``x`` only through ``u``::

        index = (u_1 + sum_{k>=2} (u_k^2 - 1) / sqrt(2)) / sqrt(r_true)
        W ~ Bernoulli(sigmoid(confounding_strength * index + eta)),  eta ~ N(0, 0.1)
        g(u) = tanh(2 u_1) + 0.5 * sum_{k>=2} tanh(u_k^2)
        Y(0) = g(u) + noise,   Y(1) = Y(0) + effect + effect_heterogeneity * u_1

    ``index`` has unit variance, and every direction of the true subspace
    enters both the assignment and the outcome. ``g`` is bounded so that
    samples deep in a region of poor overlap do not dominate the matching
    error. Both potential outcomes are
    kept, so ``true_ace`` and ``true_act`` are sample means of exact effects.
    """
    seeds = np.random.SeedSequence(spec.seed).spawn(4)
    rng_x, rng_basis, rng_w, rng_y = (np.random.default_rng(s) for s in seeds)

    X = rng_x.standard_normal((spec.n, spec.p))
    psi_true = _random_orthonormal(rng_basis, spec.p, spec.r_true)
    rotation = _random_orthonormal(rng_basis, spec.r_true, spec.r_true)
    u = X @ psi_true @ rotation

    quad = (u[:, 1:] ** 2 - 1.0) / np.sqrt(2.0)
    index = (u[:, 0] + quad.sum(axis=1)) / np.sqrt(spec.r_true)
    eta = rng_w.normal(0.0, 0.1, spec.n)
    propensity = 1.0 / (1.0 + np.exp(-(spec.confounding_strength * index + eta)))
    w = (rng_w.uniform(size=spec.n) < propensity).astype(np.int64)

    g = np.tanh(2.0 * u[:, 0]) + 0.5 * np.tanh(u[:, 1:] ** 2).sum(axis=1)
    y0 = g + rng_y.normal(0.0, spec.noise_sd, spec.n)
    tau = spec.effect + spec.effect_heterogeneity * u[:, 0]
    y1 = y0 + tau
    y = np.where(w == 1, y1, y0)

    effects = y1 - y0
    true_act = float(effects[w == 1].mean()) if w.any() else float("nan")
    return SyntheticData(
        dataset=Dataset(X, w, y),
        true_ace=float(effects.mean()),
        true_projection=psi_true,
        true_act=true_act,
        potential_outcomes=np.column_stack([y0, y1]),
        propensity=propensity,
        spec=spec,
    )


def with_seed(spec, seed):
    return replace(spec, seed=int(seed))


def save_synthetic(synthetic, path):
    """Write the dataset as CSV plus a ``.meta.json`` sidecar with the ground truth."""
    path = Path(path)
    write_csv(synthetic.dataset, path)
    meta_path = path.with_suffix(".meta.json")
    meta_path.write_text(json.dumps(synthetic.metadata(), indent=2) + "\n")
    return path, meta_path
