import json
import warnings

import numpy as np
import pytest
from sklearn.base import clone

from sdrmatch import (DataError, Dataset, FixedProjectionMatching, KernelSDRMatching,
                      MahalanobisMatching, Projection, PropensityScoreMatching,
                      SeparationError, SyntheticSpec, cesd_estimate, fit_propensity,
                      generate_synthetic, impute_counterfactuals, mdm_estimate, psm_estimate)
from sdrmatch.evaluation import naive_difference
from sdrmatch.matching import match_and_estimate


def _standard_error(data):
    t = data.outcome[data.treatment == 1]
    c = data.outcome[data.treatment == 0]
    return np.sqrt(t.var(ddof=1) / t.size + c.var(ddof=1) / c.size)


@pytest.fixture(scope="module")
def randomized():
    return generate_synthetic(SyntheticSpec(n=1000, p=5, confounding_strength=0.0, seed=21))


class TestKernelSDRMatching:
    def test_fit_attributes(self, small_synthetic):
        d = small_synthetic.dataset
        est = KernelSDRMatching(max_iter=5).fit(d.covariates, d.treatment, d.outcome)
        assert np.isfinite(est.effect_)
        assert est.result_.method_tag == "cesd"
        assert est.result_.point == est.effect_
        assert est.result_.config["reduced_dim"] == 2
        assert est.transform(d.covariates).shape == (d.n, 2)
        assert est.projection_.matrix.shape == (d.p, 2)
        assert len(est.match_.matched_index) == d.n

    def test_params_and_clone(self):
        est = KernelSDRMatching(n_components=3, estimand="act", n_bootstrap=100)
        assert clone(est).get_params() == est.get_params()

    def test_bootstrap_interval(self, small_synthetic):
        d = small_synthetic.dataset
        res = KernelSDRMatching(max_iter=5, n_bootstrap=100, random_state=1).estimate(
            d.covariates, d.treatment, d.outcome)
        assert res.ci_low < res.ci_high
        assert res.seed == 1 and res.n_used == d.n

    def test_refit_bootstrap_runs(self):
        s = generate_synthetic(SyntheticSpec(n=60, p=4, seed=0))
        d = s.dataset
        res = KernelSDRMatching(max_iter=1, n_bootstrap=100, refit_in_bootstrap=True).estimate(
            d.covariates, d.treatment, d.outcome)
        assert np.isfinite(res.ci_low) and np.isfinite(res.ci_high)

    def test_estimand_validation(self, small_synthetic):
        d = small_synthetic.dataset
        with pytest.raises(DataError):
            KernelSDRMatching(estimand="att").fit(d.covariates, d.treatment, d.outcome)

    def test_single_arm(self):
        with pytest.raises(DataError, match="arm is empty"):
            KernelSDRMatching().fit(np.zeros((4, 3)), [1, 1, 1, 1], np.zeros(4))

    def test_functional_wrapper(self, small_synthetic):
        d = small_synthetic.dataset
        a = cesd_estimate(d, "act", max_iter=3)
        b = KernelSDRMatching(estimand="act", max_iter=3).estimate(d.covariates, d.treatment,
                                                                  d.outcome)
        assert a.point == b.point and a.estimand == "act"


class TestFixedProjection:
    def test_matches_fitted_estimator(self, small_synthetic):
        d = small_synthetic.dataset
        est = KernelSDRMatching(max_iter=4).fit(d.covariates, d.treatment, d.outcome)
        proj = Projection.from_dict(json.loads(est.projection_.to_json()))
        fixed = FixedProjectionMatching(proj).fit(d.covariates, d.treatment, d.outcome)
        assert fixed.effect_ == est.effect_
        assert fixed.result_.config["reduced_dim"] == 2

    def test_one_dimension_equals_mdm(self, rng):
        X = rng.standard_normal((50, 1))
        w = np.arange(50) % 2
        y = rng.standard_normal(50)
        fixed = FixedProjectionMatching(Projection(np.ones((1, 1)))).fit(X, w, y)
        mdm = MahalanobisMatching().fit(X, w, y)
        np.testing.assert_array_equal(fixed.match_.matched_index, mdm.match_.matched_index)
        assert fixed.effect_ == mdm.effect_


class TestMahalanobisMatching:
    def test_equals_identity_projection_pipeline(self, small_synthetic):
        d = small_synthetic.dataset
        mdm = MahalanobisMatching().fit(d.covariates, d.treatment, d.outcome)
        direct = impute_counterfactuals(d.covariates @ np.eye(d.p), d.treatment, d.outcome)
        np.testing.assert_array_equal(mdm.match_.matched_index, direct.matched_index)
        assert mdm.effect_ == match_and_estimate(d.covariates, d)

    def test_randomized_within_two_se(self, randomized):
        d = randomized.dataset
        est = mdm_estimate(d)
        assert est.method_tag == "mdm"
        assert abs(est.point - 2.0) < 2 * _standard_error(d)

    def test_collinear_columns(self, rng):
        x = rng.standard_normal((80, 1))
        X = np.hstack([x, 2 * x, rng.standard_normal((80, 1))])
        w = np.arange(80) % 2
        est = MahalanobisMatching().fit(X, w, rng.standard_normal(80))
        assert np.isfinite(est.effect_)


class TestPropensity:
    def test_independent_treatment_small_coefficients(self):
        s = generate_synthetic(SyntheticSpec(n=2000, p=5, confounding_strength=0.0, seed=8))
        model = fit_propensity(s.dataset)
        assert np.all(np.abs(model.coefficients) < 0.2)
        assert model.converged

    def test_calibration_identity(self, small_synthetic):
        d = small_synthetic.dataset
        scores = fit_propensity(d).predict(d.covariates)
        assert np.all((scores > 0) & (scores < 1))
        assert abs(scores.mean() - d.treatment.mean()) < 1e-6

    def test_matches_newton_oracle(self, small_synthetic):
        # first-order condition of the likelihood at the returned coefficients
        d = small_synthetic.dataset
        model = fit_propensity(d)
        Xs = model.standardization.apply(d.covariates)
        resid = d.treatment - model.predict(d.covariates)
        np.testing.assert_allclose(Xs.T @ resid, 0.0, atol=1e-6)

    def test_separation(self):
        d = Dataset(np.array([[-2.0], [-1.0], [1.0], [2.0]]), [0, 0, 1, 1], np.zeros(4))
        with pytest.raises(SeparationError, match="separable"):
            fit_propensity(d)

    def test_singular_design_warns(self, rng):
        x = rng.standard_normal((100, 1))
        X = np.hstack([x, x])
        w = (x[:, 0] + rng.standard_normal(100) > 0).astype(int)
        with pytest.warns(RuntimeWarning, match="ridge"):
            model = fit_propensity(Dataset(X, w, np.zeros(100)))
        assert np.all(np.isfinite(model.coefficients))

    def test_score_monotone_in_positive_coefficient(self, small_synthetic):
        d = small_synthetic.dataset
        model = fit_propensity(d)
        j = int(np.argmax(model.coefficients))
        assert model.coefficients[j] > 0
        x = d.covariates[:5].copy()
        bumped = x.copy()
        bumped[:, j] += 0.5
        assert np.all(model.predict(bumped) > model.predict(x))


class TestPropensityScoreMatching:
    def test_affine_transform_of_score(self, small_synthetic):
        d = small_synthetic.dataset
        psm = PropensityScoreMatching().fit(d.covariates, d.treatment, d.outcome)
        s = psm.transform(d.covariates)
        a = impute_counterfactuals(s, d.treatment, d.outcome, np.eye(1))
        b = impute_counterfactuals(3.0 * s - 7.0, d.treatment, d.outcome, np.eye(1))
        np.testing.assert_array_equal(a.matched_index, b.matched_index)
        np.testing.assert_array_equal(a.matched_index, psm.match_.matched_index)

    def test_degenerate_scores_tie_to_lowest_index(self):
        # treatment alternates independently of a symmetric covariate: all scores tie
        X = np.array([[-1.0], [1.0], [1.0], [-1.0]] * 5)
        w = np.array([0, 0, 1, 1] * 5)
        y = np.arange(20.0)
        psm = PropensityScoreMatching().fit(X, w, y)
        first_t, first_c = np.flatnonzero(w == 1)[0], np.flatnonzero(w == 0)[0]
        expected = np.where(w == 1, first_c, first_t)
        np.testing.assert_array_equal(psm.match_.matched_index, expected)

    def test_randomized_within_two_se(self, randomized):
        d = randomized.dataset
        est = psm_estimate(d)
        assert est.method_tag == "psm"
        assert abs(est.point - 2.0) < 2 * _standard_error(d)

    def test_cattaneo2_in_reported_range(self, cattaneo2_path):
        from sdrmatch import load_csv

        d = load_csv(cattaneo2_path, "mbsmoke", "bweight")
        est = psm_estimate(d)
        assert -285.36 < est.point < -152
        assert naive_difference(d) < -270
