"""Kernel dimension reduction for a binary treatment.

The projection ``Psi`` (``p x r``, orthonormal columns) is chosen to minimise
the log-determinant of the regularised empirical conditional covariance
operator of the treatment given ``Z = X Psi``::

    Sigma = (Kw + eps I)^2 - Kw Kz ((Kz + eps I)^2)^{-1} Kz Kw

with ``Kw``, ``Kz`` the centered Gaussian Gram matrices of the treatment and of
the reduced covariates.

Writing ``S = Kz + eps I`` and ``R = (2 Kz + eps I) S^{-2}``, the identity
``I - Kz S^{-2} Kz = eps R`` gives ``Sigma = eps (eps I + 2 Kw + Kw R Kw)``,
which has no cancellation. The treatment Gram has rank at most the number of
distinct treatment values (1 for a binary treatment after centering), so with
``Kw = U diag(lam) U^T``::

    log det Sigma = (2n - k) log eps + log det(eps I_k + 2 diag(lam) + diag(lam) U^T R U diag(lam))

Each evaluation costs one Cholesky factorisation of ``S``.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DataError, NumericalError
from .kernel import center, centered_gram, gaussian_gram, gram_for_treatment
from .validation import check_covariates, check_treatment

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KdrConfig:
    """Tunables of the KDR optimiser.

    ``convergence_tol`` bounds the max-abs change of ``Psi`` between accepted
    steps and is unrelated to the regulariser ``epsilon``.
    ``treatment_width`` overrides the kernel width used for the treatment Gram
    (``None`` reuses ``kernel_width``).
    """

    reduced_dim: int = 2
    epsilon: float = 1e-4
    kernel_width: float = 5.0
    max_iterations: int = 20
    initial_step: float = 1.0
    convergence_tol: float = 1e-5
    seed: int = 0
    treatment_width: float = None
    max_halvings: int = 20

    def __post_init__(self):
        if self.reduced_dim < 1:
            raise DataError("reduced_dim must be >= 1")
        if not self.epsilon > 0:
            raise DataError("epsilon must be > 0")
        if not self.kernel_width > 0:
            raise DataError("kernel_width must be > 0")
        if self.treatment_width is not None and not self.treatment_width > 0:
            raise DataError("treatment_width must be > 0")
        if self.max_iterations < 0:
            raise DataError("max_iterations must be >= 0")
        if not self.initial_step > 0 or not self.convergence_tol > 0:
            raise DataError("initial_step and convergence_tol must be > 0")

    @property
    def width_w(self):
        return self.kernel_width if self.treatment_width is None else self.treatment_width


@dataclass(frozen=True, eq=False)
class Projection:
    """Orthonormal ``p x r`` matrix spanning the reduced covariate space."""

    matrix: np.ndarray
    config: KdrConfig = None
    standardization: object = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2:
            raise DataError("projection matrix must be 2-dimensional")
        p, r = m.shape
        if not 1 <= r <= p:
            raise DataError(f"projection must satisfy 1 <= r <= p, got {p}x{r}")
        if orthonormality_error(m) > 1e-8:
            raise DataError("projection columns are not orthonormal")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def input_dim(self):
        return self.matrix.shape[0]

    @property
    def reduced_dim(self):
        return self.matrix.shape[1]

    def to_dict(self):
        d = {
            "input_dim": self.input_dim,
            "reduced_dim": self.reduced_dim,
            "matrix": self.matrix.tolist(),
        }
        if self.config is not None:
            d["config"] = asdict(self.config)
            d["seed"] = self.config.seed
        if self.standardization is not None:
            d["standardization"] = self.standardization.to_dict()
        return d

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d):
        from .data import StandardizationReport

        matrix = np.asarray(d["matrix"], dtype=float)
        if matrix.shape != (d["input_dim"], d["reduced_dim"]):
            raise DataError("projection JSON dimensions do not match its matrix")
        config = KdrConfig(**d["config"]) if "config" in d else None
        std = d.get("standardization")
        std = StandardizationReport.from_dict(std) if std is not None else None
        return cls(matrix, config, std)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class FitTrace:
    objective_history: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    converged: bool = False
    iterations_run: int = 0
    warnings: list = field(default_factory=list)


def orthonormality_error(psi):
    psi = np.asarray(psi, dtype=float)
    return float(np.max(np.abs(psi.T @ psi - np.eye(psi.shape[1]))))


def orthonormalize(A):
    """Thin QR with the sign convention diag(R) > 0."""
    q, r = np.linalg.qr(A)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs


def principal_angles(A, B):
    """Principal angles (radians, ascending) between the column spans of A and B."""
    qa = orthonormalize(np.asarray(A, dtype=float))
    qb = orthonormalize(np.asarray(B, dtype=float))
    s = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return np.sort(np.arccos(np.clip(s, -1.0, 1.0)))


def _matrix(psi):
    return psi.matrix if isinstance(psi, Projection) else np.asarray(psi, dtype=float)


def reduce(psi, X):
    """Reduced covariates ``Z = X Psi`` (row ``i`` is ``Psi^T x_i``)."""
    m = _matrix(psi)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != m.shape[0]:
        raise DataError(f"cannot project data of shape {X.shape} with a {m.shape} projection")
    return X @ m


def _treatment_factor(w, width):
    """Eigen-factor of the centered treatment Gram, ``Kw = U diag(lam) U^T``.

    Rows with equal treatment value have equal Gram rows, so the factor is
    computed from the ``m x m`` Gram of the distinct values.
    """
    values, inverse = np.unique(np.asarray(w, dtype=float), return_inverse=True)
    n = inverse.shape[0]
    indicator = np.zeros((n, values.shape[0]))
    indicator[np.arange(n), inverse] = 1.0
    indicator -= indicator.mean(axis=0)
    q, r = np.linalg.qr(indicator)
    middle = r @ gaussian_gram(values, width) @ r.T
    lam, vec = np.linalg.eigh(0.5 * (middle + middle.T))
    keep = lam > 1e-12 * max(lam.max(initial=0.0), 1.0)
    return q @ vec[:, keep], lam[keep]


@dataclass
class _Evaluation:
    psi: np.ndarray
    value: float
    Z: np.ndarray = None
    G: np.ndarray = None
    Y1: np.ndarray = None
    Y2: np.ndarray = None
    core_factor: tuple = None


class KdrObjective:
    """Objective and gradient of KDR for fixed data; caches the treatment factor."""

    def __init__(self, X, treatment, config):
        self.X = check_covariates(X)
        self.w = check_treatment(treatment, self.X.shape[0])
        self.config = config
        self.eps = float(config.epsilon)
        self.width = float(config.kernel_width)
        self.U, self.lam = _treatment_factor(self.w, config.width_w)

    @property
    def n(self):
        return self.X.shape[0]

    def evaluate(self, psi):
        psi = np.asarray(psi, dtype=float)
        n, eps = self.n, self.eps
        k = self.lam.shape[0]
        Z = self.X @ psi
        G = gaussian_gram(Z, self.width)
        if k == 0:
            return _Evaluation(psi, 2 * n * math.log(eps), Z, G)
        S = center(G)
        S = 0.5 * (S + S.T)
        S[np.diag_indices_from(S)] += eps
        try:
            chol = linalg.cho_factor(S, lower=True, overwrite_a=True, check_finite=False)
        except linalg.LinAlgError:
            raise NumericalError(
                "Kz + eps*I is not positive definite; increase epsilon") from None
        Y1 = linalg.cho_solve(chol, self.U, check_finite=False)
        Y2 = linalg.cho_solve(chol, Y1, check_finite=False)
        UtRU = self.U.T @ (2.0 * Y1 - eps * Y2)
        UtRU = 0.5 * (UtRU + UtRU.T)
        core = eps * np.eye(k) + np.diag(2.0 * self.lam) + self.lam[:, None] * UtRU * self.lam
        try:
            core_factor = linalg.cho_factor(core, lower=True, check_finite=False)
        except linalg.LinAlgError:
            raise NumericalError("conditional covariance is singular; increase epsilon") from None
        logdet_core = 2.0 * np.log(np.diag(core_factor[0])).sum()
        value = (2 * n - k) * math.log(eps) + logdet_core
        if not math.isfinite(value):
            raise NumericalError("non-finite objective; increase epsilon")
        return _Evaluation(psi, value, Z, G, Y1, Y2, core_factor)

    def gradient(self, ev):
        """d(log det Sigma)/d(Psi) at an evaluated point.

        The differential is ``-2 eps tr(Sigma^{-1} Kw S^{-1} dKz S^{-2} Kz Kw)``.
        With the treatment factor this is ``tr(B dKz)`` for the rank-k matrix
        ``B = -2 (Y1 - eps Y2) D Y1^T``, ``Y1 = S^{-1} U``, ``Y2 = S^{-1} Y1``,
        ``D = lam core^{-1} lam``. Since ``dKz = H dG H`` and the Gaussian Gram
        derivative is
        ``dG_ij/dPsi_ab = -G_ij (x_i - x_j)_a (z_i - z_j)_b / delta^2`` then
        sums to ``-(2 / delta^2) X^T (diag(E 1) - E) Z`` with
        ``E = sym(H B H) * G``.
        """
        p, r = ev.psi.shape
        if ev.Y1 is None:
            return np.zeros((p, r))
        eps = self.eps
        D = self.lam[:, None] * linalg.cho_solve(ev.core_factor, np.diag(self.lam),
                                                 check_finite=False)
        D = 0.5 * (D + D.T)
        F1 = ev.Y1 - eps * ev.Y2
        F2 = ev.Y1
        F1 = F1 - F1.mean(axis=0)
        F2 = F2 - F2.mean(axis=0)
        A = F1 @ D
        E = A @ F2.T
        E += E.T
        E *= -1.0
        E *= ev.G
        Z = ev.Z
        LZ = E.sum(axis=1)[:, None] * Z - E @ Z
        return -(2.0 / self.width ** 2) * (self.X.T @ LZ)

    def __call__(self, psi):
        return self.evaluate(psi).value


def conditional_covariance_logdet(psi, X, treatment, config):
    """log det of the regularised empirical conditional covariance of W given X Psi."""
    return KdrObjective(X, treatment, config).evaluate(_matrix(psi)).value


def objective_gradient(psi, X, treatment, config):
    obj = KdrObjective(X, treatment, config)
    return obj.gradient(obj.evaluate(_matrix(psi)))


def block_ratio_logdet(psi, X, treatment, config):
    """Dense reference form: log det of the joint block matrix minus log det of its Z block.

    Builds the ``2n x 2n`` matrix ``[[(Kw+eps I)^2, Kw Kz], [Kz Kw, (Kz+eps I)^2]]``
    explicitly; intended for verification on small ``n`` only.
    """
    m = _matrix(psi)
    X = check_covariates(X)
    eps = config.epsilon
    n = X.shape[0]
    Kw = gram_for_treatment(treatment, config.width_w).values
    Kz = centered_gram(X @ m, config.kernel_width).values
    I = np.eye(n)
    Sw = (Kw + eps * I) @ (Kw + eps * I)
    Sz = (Kz + eps * I) @ (Kz + eps * I)
    joint = np.block([[Sw, Kw @ Kz], [Kz @ Kw, Sz]])
    sign_j, logdet_j = np.linalg.slogdet(joint)
    sign_z, logdet_z = np.linalg.slogdet(Sz)
    if sign_j <= 0 or sign_z <= 0:
        raise NumericalError("block covariance is not positive definite")
    return logdet_j - logdet_z


def initial_projection(p, r, seed):
    rng = np.random.default_rng(seed)
    return orthonormalize(rng.standard_normal((p, r)))


def fit_kdr(X, treatment, config=KdrConfig(), psi0=None):
    """Minimise the KDR objective by projected gradient descent.

    Each iteration takes ``Psi - beta * grad`` and re-orthonormalises it (thin
    QR). ``beta`` starts at twice the previously accepted step (capped at
    ``config.initial_step``) and is halved until the objective strictly
    decreases, at most ``config.max_halvings`` times. Iteration stops after
    ``config.max_iterations`` steps or once the max-abs change of ``Psi`` is
    at most ``config.convergence_tol``.

    Returns
    -------
    projection : Projection
        The accepted iterate with the lowest objective.
    trace : FitTrace
    """
    X = check_covariates(X)
    n, p = X.shape
    r = config.reduced_dim
    if r >= p:
        raise DataError(f"reduced_dim ({r}) must be smaller than the number of covariates ({p})")
    obj = KdrObjective(X, treatment, config)
    psi = initial_projection(p, r, config.seed) if psi0 is None else orthonormalize(psi0)
    current = obj.evaluate(psi)
    trace = FitTrace(objective_history=[current.value])
    beta = config.initial_step

    for t in range(config.max_iterations):
        grad = obj.gradient(current)
        beta = min(config.initial_step, 2.0 * beta)
        accepted = None
        for _ in range(config.max_halvings + 1):
            candidate = orthonormalize(current.psi - beta * grad)
            trial = obj.evaluate(candidate)
            if trial.value < current.value:
                accepted = trial
                break
            beta *= 0.5
        if accepted is None:
            msg = f"line search found no decrease at iteration {t}"
            trace.warnings.append(msg)
            logger.warning(msg)
            break
        change = float(np.max(np.abs(accepted.psi - current.psi)))
        current = accepted
        trace.objective_history.append(current.value)
        trace.step_sizes.append(beta)
        trace.iterations_run = t + 1
        if change <= config.convergence_tol:
            trace.converged = True
            break

    return Projection(current.psi, config), trace


class KernelDimensionReduction(TransformerMixin, BaseEstimator):
    """Supervised projection of covariates that retains their dependence with a binary treatment.

    ``fit(X, y)`` takes the treatment as ``y``, so the reducer can sit in a
    scikit-learn pipeline; ``transform`` returns ``X Psi`` (after the stored
    standardization when ``standardize=True``).

    Parameters
    ----------
    n_components : int, default=2
    epsilon : float, default=1e-4
    kernel_width : float, default=5.0
    max_iter : int, default=20
    step_size : float, default=1.0
    tol : float, default=1e-5
    standardize : bool, default=True
    treatment_kernel_width : float, optional
    random_state : int, default=0

    Attributes
    ----------
    projection_ : Projection
    trace_ : FitTrace
    components_ : ndarray of shape (n_components, n_features)
    """

    def __init__(self, n_components=2, epsilon=1e-4, kernel_width=5.0, max_iter=20,
                 step_size=1.0, tol=1e-5, standardize=True, treatment_kernel_width=None,
                 random_state=0):
        self.n_components = n_components
        self.epsilon = epsilon
        self.kernel_width = kernel_width
        self.max_iter = max_iter
        self.step_size = step_size
        self.tol = tol
        self.standardize = standardize
        self.treatment_kernel_width = treatment_kernel_width
        self.random_state = random_state

    def kdr_config(self):
        return KdrConfig(
            reduced_dim=self.n_components, epsilon=self.epsilon,
            kernel_width=self.kernel_width, max_iterations=self.max_iter,
            initial_step=self.step_size, convergence_tol=self.tol,
            seed=self.random_state, treatment_width=self.treatment_kernel_width,
        )

    def fit(self, X, y):
        from .data import Dataset, standardize

        X = check_covariates(X)
        w = check_treatment(y, X.shape[0])
        report = None
        if self.standardize:
            std_data, report = standardize(Dataset(X, w, np.zeros(X.shape[0])))
            X = std_data.covariates
        projection, self.trace_ = fit_kdr(X, w, self.kdr_config())
        self.projection_ = Projection(projection.matrix, projection.config, report)
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_projection(cls, projection):
        """Wrap an existing (e.g. deserialised) projection as a fitted reducer."""
        cfg = projection.config or KdrConfig(reduced_dim=projection.reduced_dim)
        reducer = cls(n_components=cfg.reduced_dim, epsilon=cfg.epsilon,
                      kernel_width=cfg.kernel_width, max_iter=cfg.max_iterations,
                      step_size=cfg.initial_step, tol=cfg.convergence_tol,
                      standardize=projection.standardization is not None,
                      treatment_kernel_width=cfg.treatment_width, random_state=cfg.seed)
        reducer.projection_ = projection
        reducer.trace_ = None
        reducer.n_features_in_ = projection.input_dim
        return reducer

    @property
    def components_(self):
        return self.projection_.matrix.T

    def transform(self, X):
        check_is_fitted(self, "projection_")
        X = np.asarray(X, dtype=float)
        if self.projection_.standardization is not None:
            X = self.projection_.standardization.apply(X)
        return reduce(self.projection_, X)
