"""Reference estimators: Mahalanobis distance matching and propensity score matching."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import StandardizationReport, standardize
from .estimators import MatchingEstimator
from .exceptions import SeparationError
from .validation import check_both_arms


@dataclass(frozen=True, eq=False)
class PropensityModel:
    """Logistic model of ``Pr(W=1 | X)`` fitted on standardized covariates.

    ``coefficients`` are on the standardized scale; ``predict`` applies the
    stored standardization to raw covariates.
    """

    coefficients: np.ndarray
    intercept: float
    standardization: StandardizationReport
    n_iter: int = 0
    converged: bool = False

    def linear_predictor(self, X):
        Xs = self.standardization.apply(X)
        return self.intercept + Xs @ self.coefficients

    def predict(self, X):
        return expit(self.linear_predictor(X))


def _log_likelihood(eta, w):
    return float(-np.sum(np.where(w == 1, np.logaddexp(0.0, -eta), np.logaddexp(0.0, eta))))


def fit_propensity(data, max_iter=100, tol=1e-10, max_coef_norm=1e3):
    """Maximum-likelihood logistic regression of treatment on covariates by IRLS.

    Iterates Newton steps until the log-likelihood changes by less than
    ``tol``. A singular weighted design gets a ``1e-6`` ridge and a warning.

    Raises
    ------
    SeparationError
        If the coefficient norm exceeds ``max_coef_norm`` or the fitted linear
        predictor orders the two arms perfectly (no finite MLE exists).
    """
    check_both_arms(data.treatment)
    std_data, report = standardize(data)
    w = data.treatment.astype(float)
    A = np.column_stack([np.ones(data.n), std_data.covariates])
    beta = np.zeros(A.shape[1])
    ll_old = _log_likelihood(A @ beta, w)
    ridge_warned = False
    converged = False

    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(A @ beta)
        hessian = A.T @ ((mu * (1.0 - mu))[:, None] * A)
        score = A.T @ (w - mu)
        if np.linalg.cond(hessian) > 1e12:
            if not ridge_warned:
                warnings.warn("singular logistic design; adding ridge 1e-6", RuntimeWarning,
                              stacklevel=2)
                ridge_warned = True
            hessian = hessian + 1e-6 * np.eye(hessian.shape[0])
        beta = beta + np.linalg.solve(hessian, score)
        if np.linalg.norm(beta[1:]) > max_coef_norm:
            raise SeparationError("logistic coefficients diverge; the treatment is perfectly "
                                  "separable by the covariates")
        ll = _log_likelihood(A @ beta, w)
        if abs(ll - ll_old) < tol:
            converged = True
            break
        ll_old = ll

    eta = A @ beta
    if eta[w == 1].min() > eta[w == 0].max():
        raise SeparationError("the treatment is perfectly separable by the covariates; "
                              "remove or merge the separating covariates")
    return PropensityModel(beta[1:], float(beta[0]), report, it, converged)


class MahalanobisMatching(MatchingEstimator):
    """Nearest-neighbour matching on all covariates under the Mahalanobis metric."""

    method_tag = "mdm"

    def __init__(self, estimand="ace", n_bootstrap=0, ci_level=0.95, random_state=0):
        self.estimand = estimand
        self.n_bootstrap = n_bootstrap
        self.ci_level = ci_level
        self.random_state = random_state

    def _fit_representation(self, data):
        pass

    def _represent(self, X):
        return np.asarray(X, dtype=float)


class PropensityScoreMatching(MatchingEstimator):
    """Nearest-neighbour matching on the logistic propensity score (probability scale)."""

    method_tag = "psm"

    def __init__(self, estimand="ace", max_iter=100, tol=1e-10, n_bootstrap=0,
                 ci_level=0.95, refit_in_bootstrap=False, random_state=0):
        self.estimand = estimand
        self.max_iter = max_iter
        self.tol = tol
        self.n_bootstrap = n_bootstrap
        self.ci_level = ci_level
        self.refit_in_bootstrap = refit_in_bootstrap
        self.random_state = random_state

    def _fit_representation(self, data):
        self.propensity_ = fit_propensity(data, self.max_iter, self.tol)

    def _represent(self, X):
        return self.propensity_.predict(X)[:, None]

    def _precision(self, z):
        return np.eye(1)

    def transform(self, X):
        return self._represent(X)


def mdm_estimate(data, estimand="ace", **params):
    est = MahalanobisMatching(estimand=estimand, **params)
    return est.estimate(data.covariates, data.treatment, data.outcome)


def psm_estimate(data, estimand="ace", **params):
    est = PropensityScoreMatching(estimand=estimand, **params)
    return est.estimate(data.covariates, data.treatment, data.outcome)
