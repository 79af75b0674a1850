import math

import numpy as np
import pytest

import irtcal as ic
from irtcal.errors import DomainError, RefusalError
from irtcal.estimation import (
    EstimationConfig,
    ExtremeScorePolicy,
    estimate,
    estimate_rasch,
    log_likelihood,
    loglik_gradient,
)
from irtcal.model import (
    SQRT2,
    Link,
    ModelKind,
    ModelSpec,
    ParameterSet,
    ResponseMatrix,
)
from irtcal.simulation import make_scenario, simulate

from conftest import random_paramset


def finite_difference_gradient(matrix, params, spec, h=1e-5):
    """Central finite differences of the log-likelihood (oracle)."""
    out = {}
    names = ["theta", "beta"]
    if spec.kind.frees_person_d:
        names.append("d_person")
    if spec.kind.frees_item_d:
        names.append("d_item")
    for name in names:
        base = getattr(params, name)
        fd = np.zeros(len(base))
        for k in range(len(base)):
            vals = {n: np.array(getattr(params, n)) for n in
                    ("theta", "beta", "d_person", "d_item")}
            vals[name][k] += h
            up = log_likelihood(matrix, ParameterSet(**vals), spec)
            vals[name][k] -= 2 * h
            down = log_likelihood(matrix, ParameterSet(**vals), spec)
            fd[k] = (up - down) / (2 * h)
        out[name] = fd
    return out


class TestLogLikelihood:
    def test_single_cell_half(self):
        m = ResponseMatrix([[1, np.nan], [np.nan, np.nan]])
        params = ParameterSet.rasch([0.0, 0.0], [0.0, 0.0])
        spec = ModelSpec(ModelKind.RASCH, Link.LOGISTIC)
        assert log_likelihood(m, params, spec) == \
            pytest.approx(math.log(0.5), abs=1e-12)

    def test_two_cells_symmetry(self):
        m = ResponseMatrix([[1, 0], [np.nan, np.nan]])
        params = ParameterSet.rasch([0.0, 0.0], [0.0, 0.0])
        spec = ModelSpec(ModelKind.RASCH, Link.LOGISTIC)
        assert log_likelihood(m, params, spec) == \
            pytest.approx(2 * math.log(0.5), abs=1e-12)

    def test_clamped_extremes_stay_finite(self):
        m = ResponseMatrix(np.ones((3, 3)))
        params = ParameterSet.rasch([50.0, 50.0, 50.0], [-50.0] * 3)
        spec = ModelSpec(ModelKind.RASCH, Link.LOGISTIC)
        ll = log_likelihood(m, params, spec)
        assert np.isfinite(ll)
        assert ll >= 9 * math.log(1 - 1e-12) - 1e-9
        assert ll <= 0

    def test_dimension_mismatch(self):
        m = ResponseMatrix([[1, 0], [0, 1]])
        params = ParameterSet.rasch([0.0] * 3, [0.0, 0.0])
        with pytest.raises(DomainError):
            log_likelihood(m, params, ModelSpec(ModelKind.RASCH))


class TestGradient:
    @pytest.mark.parametrize("kind", list(ModelKind))
    @pytest.mark.parametrize("link", list(Link))
    def test_matches_finite_differences(self, kind, link):
        spec = ModelSpec(kind, link)
        seed = 100 * list(ModelKind).index(kind) + list(Link).index(link)
        rng = np.random.default_rng(seed)
        for _ in range(3):
            sc = make_scenario(spec, 7, 5, int(rng.integers(1 << 30)), 0.3)
            matrix = simulate(sc)
            params = random_paramset(rng, 7, 5)
            g = loglik_gradient(matrix, params, spec)
            fd = finite_difference_gradient(matrix, params, spec)
            assert set(g) == set(fd)
            for name in g:
                scale = np.maximum(np.abs(fd[name]), 1e-6)
                assert np.max(np.abs(g[name] - fd[name]) / scale) < 1e-5

    def test_rasch_theta_gradient_formula(self):
        # for the logistic one-parameter model the score for theta_i is
        # the raw residual sum over that person's items
        spec = ModelSpec(ModelKind.RASCH, Link.LOGISTIC)
        rng = np.random.default_rng(17)
        sc = make_scenario(spec, 10, 8, 3, 0.0)
        matrix = simulate(sc)
        params = random_paramset(rng, 10, 8)
        g = loglik_gradient(matrix, params, spec)
        from irtcal.model import probability_matrix
        p = probability_matrix(spec, params)
        resid = np.nan_to_num(matrix.responses) - p
        resid[~matrix.observed] = 0.0
        np.testing.assert_allclose(g["theta"], resid.sum(axis=1),
                                   rtol=1e-10, atol=1e-10)

    def test_theta_beta_negation_single_cell(self):
        m = ResponseMatrix([[1, np.nan], [np.nan, np.nan]])
        params = ParameterSet.rasch([0.4, 0.0], [-0.2, 0.0])
        g = loglik_gradient(m, params, ModelSpec(ModelKind.RASCH))
        assert g["theta"][0] == pytest.approx(-g["beta"][0], abs=1e-14)

    def test_near_zero_at_optimum(self):
        spec = ModelSpec(ModelKind.RASCH, Link.LOGISTIC)
        sc = make_scenario(spec, 40, 20, 5, 0.0)
        matrix = simulate(sc)
        cfg = EstimationConfig(tolerance=1e-9, max_iterations=2000)
        fit = estimate_rasch(matrix, Link.LOGISTIC, cfg)
        keep_p = np.isfinite(fit.params.theta)
        keep_i = np.isfinite(fit.params.beta)
        sub = ResponseMatrix(matrix.responses[np.ix_(keep_p, keep_i)])
        params = ParameterSet.rasch(fit.params.theta[keep_p],
                                    fit.params.beta[keep_i])
        g = loglik_gradient(sub, params, spec)
        # gradient projected off the location gauge direction
        gt = g["theta"] - g["theta"].mean()
        assert np.max(np.abs(gt)) < 1e-4
        assert np.max(np.abs(g["beta"] - g["beta"].mean())) < 1e-4


class TestRaschEstimation:
    def test_recovery_200x40(self):
        spec = ModelSpec(ModelKind.RASCH, Link.LOGISTIC)
        sc = make_scenario(spec, 200, 40, 11, 0.0)
        matrix = simulate(sc)
        fit = estimate_rasch(matrix)
        keep = np.isfinite(fit.params.theta)
        r = ic.pearson_r(fit.params.theta[keep], sc.true_params.theta[keep])
        assert r >= 0.9

    def test_perfect_score_excluded(self):
        arr = np.array([
            [1, 1, 1, 1],
            [1, 0, 1, 0],
            [0, 1, 0, 1],
            [0, 0, 1, 1],
            [1, 0, 0, 0],
        ], dtype=float)
        fit = estimate_rasch(ResponseMatrix(arr))
        assert 0 in fit.excluded_persons
        assert np.isnan(fit.params.theta[0])

    def test_identical_rows_identical_theta(self):
        arr = np.array([
            [1, 0, 1, 0, 1],
            [1, 0, 1, 0, 1],
            [0, 1, 0, 1, 1],
            [1, 1, 0, 0, 0],
            [0, 0, 1, 1, 0],
        ], dtype=float)
        fit = estimate_rasch(ResponseMatrix(arr))
        assert fit.params.theta[0] == pytest.approx(fit.params.theta[1],
                                                    abs=1e-12)

    def test_mean_theta_zero(self, small_matrix):
        fit = estimate_rasch(small_matrix)
        th = fit.params.theta[np.isfinite(fit.params.theta)]
        assert abs(th.mean()) < 1e-9

    def test_refusal_when_too_small(self):
        arr = np.array([[1, 1], [1, 0], [0, 0]], dtype=float)
        # row 0 and row 2 are extreme; exclusions cascade below 2 persons
        with pytest.raises(RefusalError):
            estimate_rasch(ResponseMatrix(arr))

    def test_penalize_keeps_extremes(self):
        arr = np.array([
            [1, 1, 1, 1],
            [1, 0, 1, 0],
            [0, 1, 0, 1],
            [0, 0, 0, 1],
        ], dtype=float)
        cfg = EstimationConfig(
            extreme_score_policy=ExtremeScorePolicy.PENALIZE)
        fit = estimate_rasch(ResponseMatrix(arr), Link.LOGISTIC, cfg)
        assert fit.excluded_persons == ()
        assert np.all(np.isfinite(fit.params.theta))


class TestEstimate:
    def test_frozen_d_reduces_to_rasch(self, small_matrix):
        cfg = EstimationConfig(d_bounds=(SQRT2, SQRT2), tolerance=1e-9,
                               max_iterations=3000)
        rasch = estimate_rasch(small_matrix, Link.LOGISTIC, cfg)
        three = estimate(small_matrix,
                         ModelSpec(ModelKind.THREE_PARAM, Link.LOGISTIC),
                         cfg)
        np.testing.assert_allclose(three.params.theta, rasch.params.theta,
                                   atol=1e-6)
        np.testing.assert_allclose(three.params.beta, rasch.params.beta,
                                   atol=1e-6)

    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_monotone_ascent(self, kind):
        spec = ModelSpec(kind, Link.LOGISTIC)
        sc = make_scenario(spec, 40, 15, 23, 0.3)
        fit = estimate(simulate(sc), spec)
        assert np.all(np.diff(fit.loglik_trace) >= -1e-9)

    def test_nested_model_likelihood_ordering(self):
        spec3 = ModelSpec(ModelKind.THREE_PARAM, Link.LOGISTIC)
        sc = make_scenario(spec3, 60, 25, 31, 0.3)
        matrix = simulate(sc)
        ll = {kind: estimate(matrix, ModelSpec(kind, Link.LOGISTIC))
              .loglik_trace[-1] for kind in ModelKind}
        assert ll[ModelKind.RASCH] <= ll[ModelKind.TWO_PARAM_ITEM] + 1e-6
        assert ll[ModelKind.RASCH] <= ll[ModelKind.TWO_PARAM_PERSON] + 1e-6
        assert ll[ModelKind.TWO_PARAM_ITEM] <= \
            ll[ModelKind.THREE_PARAM] + 1e-6
        assert ll[ModelKind.TWO_PARAM_PERSON] <= \
            ll[ModelKind.THREE_PARAM] + 1e-6

    def test_permutation_equivariance(self):
        spec = ModelSpec(ModelKind.TWO_PARAM_ITEM, Link.LOGISTIC)
        sc = make_scenario(spec, 30, 12, 37, 0.3)
        matrix = simulate(sc)
        fit = estimate(matrix, spec)
        rng = np.random.default_rng(1)
        perm = rng.permutation(30)
        permuted = ResponseMatrix(matrix.responses[perm])
        fit_p = estimate(permuted, spec)
        np.testing.assert_allclose(fit_p.params.theta,
                                   fit.params.theta[perm], atol=1e-9)
        np.testing.assert_allclose(fit_p.params.beta, fit.params.beta,
                                   atol=1e-9)

    def test_transpose_duality(self):
        spec_p = ModelSpec(ModelKind.TWO_PARAM_PERSON, Link.LOGISTIC)
        spec_i = ModelSpec(ModelKind.TWO_PARAM_ITEM, Link.LOGISTIC)
        sc = make_scenario(spec_p, 35, 20, 41, 0.3)
        matrix = simulate(sc)
        f1 = estimate(matrix, spec_p)
        f2 = estimate(matrix.transposed(complement=True), spec_i)
        assert f1.loglik_trace[-1] == pytest.approx(f2.loglik_trace[-1],
                                                    abs=1e-6)

    def test_logit_probit_consistency(self):
        spec = ModelSpec(ModelKind.RASCH, Link.LOGISTIC)
        sc = make_scenario(spec, 200, 40, 11, 0.0)
        matrix = simulate(sc)
        fit_l = estimate_rasch(matrix, Link.LOGISTIC)
        fit_n = estimate_rasch(matrix, Link.NORMAL_OGIVE)
        keep = np.isfinite(fit_l.params.theta) \
            & np.isfinite(fit_n.params.theta)
        tl = fit_l.params.theta[keep]
        tn = fit_n.params.theta[keep]
        assert ic.pearson_r(tl, tn) > 0.999
        slope = float(np.polyfit(tn, tl, 1)[0])
        assert 1.6 <= slope <= 1.8

    def test_config_validation(self):
        with pytest.raises(DomainError):
            EstimationConfig(tolerance=0.0)
        with pytest.raises(DomainError):
            EstimationConfig(d_bounds=(2.0, 5.0))
        with pytest.raises(DomainError):
            EstimationConfig(d_bounds=(0.5, 1.2))

    def test_d_bounds_respected(self):
        spec = ModelSpec(ModelKind.THREE_PARAM, Link.LOGISTIC)
        sc = make_scenario(spec, 40, 15, 53, 0.8)
        cfg = EstimationConfig(d_bounds=(0.5, 2.5))
        fit = estimate(simulate(sc), spec, cfg)
        for d in (fit.params.d_person, fit.params.d_item):
            d = d[np.isfinite(d)]
            assert np.all(d >= 0.5 - 1e-12)
            assert np.all(d <= 2.5 + 1e-12)
