"""Causal effect estimation by kernel dimension reduction and nearest-neighbour matching.

Typical use::

    from sdrmatch import KernelSDRMatching
    est = KernelSDRMatching(n_components=2).fit(X, treatment, outcome)
    est.effect_, est.result_.to_json()
"""

from .baselines import (MahalanobisMatching, PropensityModel, PropensityScoreMatching,
                        fit_propensity, mdm_estimate, psm_estimate)
from .data import (Dataset, StandardizationReport, SyntheticData, SyntheticSpec,
                   generate_synthetic, load_csv, standardize, write_csv)
from .estimators import FixedProjectionMatching, KernelSDRMatching, cesd_estimate
from .evaluation import (BenchmarkReport, OverlapDiagnostic, bias_percent, naive_difference,
                         overlap_diagnostic, rmse, run_benchmark)
from .exceptions import DataError, NumericalError, SdrMatchError, SeparationError
from .kdr import (FitTrace, KdrConfig, KernelDimensionReduction, Projection,
                  conditional_covariance_logdet, fit_kdr, objective_gradient)
from .kernel import GramMatrix, centered_gram, gaussian_gram
from .matching import (EstimationResult, MatchResult, bootstrap_ci, estimate_act, estimate_ace,
                       impute_counterfactuals)

__version__ = "0.1.0"

__all__ = [
    "BenchmarkReport", "Dataset", "DataError", "EstimationResult", "FitTrace",
    "FixedProjectionMatching", "GramMatrix", "KdrConfig", "KernelDimensionReduction",
    "KernelSDRMatching", "MahalanobisMatching", "MatchResult", "NumericalError",
    "OverlapDiagnostic", "Projection", "PropensityModel", "PropensityScoreMatching",
    "SdrMatchError", "SeparationError", "StandardizationReport", "SyntheticData",
    "SyntheticSpec", "bias_percent", "bootstrap_ci", "centered_gram", "cesd_estimate",
    "conditional_covariance_logdet", "estimate_ace", "estimate_act", "fit_kdr",
    "fit_propensity", "gaussian_gram", "generate_synthetic", "impute_counterfactuals",
    "load_csv", "mdm_estimate", "naive_difference", "objective_gradient",
    "overlap_diagnostic", "psm_estimate", "rmse", "run_benchmark", "standardize", "write_csv",
]
