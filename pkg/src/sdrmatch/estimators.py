"""Scikit-learn style matching estimators.

Every estimator follows the same protocol: ``fit(X, treatment, outcome)``
learns a representation of ``X``, imputes counterfactuals by nearest-neighbour
matching in that representation and stores the effect in ``effect_`` and the
full :class:`~sdrmatch.matching.EstimationResult` in ``result_``.
"""

from dataclasses import asdict

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import Dataset
from .kdr import KernelDimensionReduction
from .matching import (EstimationResult, bootstrap_ci, estimate_effect,
                       impute_counterfactuals)
from .validation import check_both_arms, check_estimand


class MatchingEstimator(BaseEstimator):
    """Base class: subclasses supply ``_fit_representation`` and ``_represent``."""

    method_tag = None

    def _fit_representation(self, data):
        raise NotImplementedError

    def _represent(self, X):
        raise NotImplementedError

    def _precision(self, z):
        return None

    def _effect(self, data):
        z = self._represent(data.covariates)
        match = impute_counterfactuals(z, data.treatment, data.outcome, self._precision(z))
        return estimate_effect(data, match, self.estimand), match

    def _config_echo(self):
        return {k: v for k, v in self.get_params().items()}

    def fit(self, X, treatment, outcome):
        estimand = check_estimand(self.estimand)
        data = Dataset(X, treatment, outcome)
        check_both_arms(data.treatment)
        self._fit_representation(data)
        self.effect_, self.match_ = self._effect(data)

        if self.n_bootstrap:
            refit = getattr(self, "refit_in_bootstrap", False)

            def pipeline(d):
                if refit:
                    est = self.__class__(**{**self.get_params(), "n_bootstrap": 0}).fit(
                        d.covariates, d.treatment, d.outcome)
                    return est.effect_
                return self._effect(d)[0]

            result = bootstrap_ci(data, pipeline, self.n_bootstrap, self.ci_level,
                                  self.random_state, estimand, self.method_tag)
        else:
            result = EstimationResult(estimand, self.effect_, n_used=data.n,
                                      ci_level=self.ci_level, method_tag=self.method_tag,
                                      seed=self.random_state)
        result.config = self._config_echo()
        self.result_ = result
        return self

    def estimate(self, X, treatment, outcome):
        return self.fit(X, treatment, outcome).result_


class KernelSDRMatching(TransformerMixin, MatchingEstimator):
    """Kernel dimension reduction followed by Mahalanobis nearest-neighbour matching.

    Parameters
    ----------
    n_components : int, default=2
        Dimension ``r`` of the reduced covariates.
    epsilon : float, default=1e-4
        Regulariser of the conditional covariance operator.
    kernel_width : float, default=5.0
        Gaussian kernel width used for both Gram matrices.
    max_iter : int, default=20
    step_size : float, default=1.0
        Initial gradient step of the backtracking line search.
    tol : float, default=1e-5
        Stop once the max-abs change of the projection falls below this.
    standardize : bool, default=True
        Standardize covariates before learning the projection.
    estimand : {'ace', 'act'}, default='ace'
    n_bootstrap : int, default=0
        Percentile bootstrap replicates; 0 skips the interval.
    ci_level : float, default=0.95
    refit_in_bootstrap : bool, default=False
        Re-learn the projection in every bootstrap replicate instead of
        holding it fixed.
    treatment_kernel_width : float, optional
        Separate kernel width for the treatment Gram.
    random_state : int, default=0
        Seeds the initial projection and the bootstrap.
    """

    method_tag = "cesd"

    def __init__(self, n_components=2, epsilon=1e-4, kernel_width=5.0, max_iter=20,
                 step_size=1.0, tol=1e-5, standardize=True, estimand="ace", n_bootstrap=0,
                 ci_level=0.95, refit_in_bootstrap=False, treatment_kernel_width=None,
                 random_state=0):
        self.n_components = n_components
        self.epsilon = epsilon
        self.kernel_width = kernel_width
        self.max_iter = max_iter
        self.step_size = step_size
        self.tol = tol
        self.standardize = standardize
        self.estimand = estimand
        self.n_bootstrap = n_bootstrap
        self.ci_level = ci_level
        self.refit_in_bootstrap = refit_in_bootstrap
        self.treatment_kernel_width = treatment_kernel_width
        self.random_state = random_state

    def _reducer(self):
        return KernelDimensionReduction(
            n_components=self.n_components, epsilon=self.epsilon,
            kernel_width=self.kernel_width, max_iter=self.max_iter,
            step_size=self.step_size, tol=self.tol, standardize=self.standardize,
            treatment_kernel_width=self.treatment_kernel_width,
            random_state=self.random_state)

    def _fit_representation(self, data):
        self.reducer_ = self._reducer().fit(data.covariates, data.treatment)

    @property
    def projection_(self):
        return self.reducer_.projection_

    @property
    def trace_(self):
        return self.reducer_.trace_

    def _represent(self, X):
        return self.reducer_.transform(X)

    def transform(self, X):
        check_is_fitted(self, "reducer_")
        return self._represent(X)

    def _config_echo(self):
        return asdict(self.reducer_.kdr_config()) | {"standardize": self.standardize,
                                                     "estimand": self.estimand}


class FixedProjectionMatching(KernelSDRMatching):
    """Matching in the span of a given projection (for example one loaded from JSON)."""

    def __init__(self, projection=None, estimand="ace", n_bootstrap=0, ci_level=0.95,
                 random_state=0):
        self.projection = projection
        self.estimand = estimand
        self.n_bootstrap = n_bootstrap
        self.ci_level = ci_level
        self.random_state = random_state

    def _fit_representation(self, data):
        self.reducer_ = KernelDimensionReduction.from_projection(self.projection)

    def _config_echo(self):
        cfg = self.projection.config
        echo = asdict(cfg) if cfg is not None else {}
        return echo | {"standardize": self.projection.standardization is not None,
                       "estimand": self.estimand}


def cesd_estimate(data, estimand="ace", **params):
    """Run :class:`KernelSDRMatching` on a :class:`~sdrmatch.data.Dataset`."""
    est = KernelSDRMatching(estimand=estimand, **params)
    return est.estimate(data.covariates, data.treatment, data.outcome)
