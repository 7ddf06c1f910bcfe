import math

import numpy as np
import pytest
from scipy.special import ndtr, ndtri

from clusterssd.datagen import PsiModel, ZetaProcess
from clusterssd.numerics import Hypothesis, ModelParams, expit
from clusterssd.proxy import (
    LambdaEstimate,
    estimate_lambda,
    mle_draw,
    proxy_sample,
    proxy_tau,
    proxy_tau_logit,
    theorem1_slope,
)

HYP = Hypothesis(-math.inf, 0.04)


class TestMleDraw:
    def test_median_is_truth(self):
        assert mle_draw(0.02, 0.001, 100, 0.5) == pytest.approx(0.02, abs=1e-15)

    def test_monotone_in_u(self):
        vals = [mle_draw(0.02, 0.001, 100, u) for u in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_matches_formula(self):
        assert mle_draw(0.01, 0.0016, 50, 0.8) == pytest.approx(
            0.01 + ndtri(0.8) * math.sqrt(0.0016 / 50), rel=1e-14)

    def test_rejects_boundary_u(self):
        for u in (0.0, 1.0):
            with pytest.raises(ValueError):
                mle_draw(0.0, 0.001, 10, u)


class TestProxyTauLogit:
    def test_one_sided_matches_naive_at_moderate_z(self):
        lam, c = 0.0016, 100
        sd = math.sqrt(lam / c)
        for dh in (0.0, 0.02, 0.04, 0.05):
            z = (0.04 - dh) / sd
            naive = math.log(ndtr(z)) - math.log(ndtr(-z))
            assert proxy_tau_logit(dh, lam, c, HYP) == pytest.approx(naive, rel=1e-10)

    def test_two_sided_matches_naive(self):
        hyp = Hypothesis(-0.04, 0.04)
        lam, c = 0.0016, 100
        sd = math.sqrt(lam / c)
        for dh in (-0.02, 0.0, 0.03):
            inside = ndtr((0.04 - dh) / sd) - ndtr((-0.04 - dh) / sd)
            outside = ndtr(-(0.04 - dh) / sd) + ndtr((-0.04 - dh) / sd)
            naive = math.log(inside) - math.log(outside)
            assert proxy_tau_logit(dh, lam, c, hyp) == pytest.approx(naive, rel=1e-9)

    def test_finite_at_extreme_counts(self):
        lt = proxy_tau_logit(0.0, 0.0016, 10**5, HYP)
        assert math.isfinite(lt) and lt > 100
        lt = proxy_tau_logit(0.08, 0.0016, 10**5, HYP)
        assert math.isfinite(lt) and lt < -100

    def test_lower_bounded_interval(self):
        hyp = Hypothesis(0.0, math.inf)
        assert proxy_tau_logit(0.05, 0.0016, 100, hyp) > 0
        assert proxy_tau_logit(-0.05, 0.0016, 100, hyp) < 0

    def test_tau_strictly_interior(self):
        for dh in (-0.5, 0.0, 0.5):
            t = proxy_tau(dh, 0.0016, 10**5, HYP)
            assert 0.0 < t < 1.0


class TestTheorem1Slope:
    def test_sign_structure(self):
        lam = 0.0016
        assert theorem1_slope(0.0, lam, HYP) > 0       # interior
        assert theorem1_slope(0.08, lam, HYP) < 0      # exterior
        assert theorem1_slope(0.04, lam, HYP) == 0.0   # boundary

    def test_magnitude_formula(self):
        lam = 0.002
        assert theorem1_slope(0.01, lam, HYP) == pytest.approx(
            0.5 * (0.04 - 0.01) ** 2 / lam, rel=1e-14)
        assert theorem1_slope(0.06, lam, HYP) == pytest.approx(
            -0.5 * (0.04 - 0.06) ** 2 / lam, rel=1e-14)

    def test_two_sided_takes_nearest_endpoint(self):
        hyp = Hypothesis(-0.04, 0.04)
        lam = 0.001
        assert theorem1_slope(0.03, lam, hyp) == pytest.approx(
            0.5 * 0.01**2 / lam, rel=1e-12)

    def test_interior_slope_larger_when_farther_from_boundary(self):
        lam = 0.0016
        assert theorem1_slope(0.0, lam, HYP) > theorem1_slope(0.02, lam, HYP)


class TestEstimateLambda:
    def test_deterministic_given_stream(self):
        th = ModelParams(-3.9, 0.9, 0.4)
        z = ZetaProcess("shifted_poisson", lam=3.0)
        e1 = estimate_lambda(th, z, 2000, np.random.default_rng(5))
        e2 = estimate_lambda(th, z, 2000, np.random.default_rng(5))
        assert e1.lam == e2.lam and e1.se == e2.se

    def test_positive_with_se(self):
        th = ModelParams(-3.0, 0.5, 0.3)
        e = estimate_lambda(th, ZetaProcess("fixed", n=3), 2000,
                            np.random.default_rng(1))
        assert e.lam > 0 and e.se > 0 and e.n_mc == 2000

    def test_rejects_small_n_mc(self):
        with pytest.raises(ValueError):
            estimate_lambda(ModelParams(-3, 0.5, 0.3), ZetaProcess("fixed", n=2),
                            500, np.random.default_rng(0))

    def test_more_clusters_means_less_information_needed(self):
        # larger clusters carry more information, so per-cluster variance drops
        th = ModelParams(-3.0, 0.5, 0.0)
        g1 = estimate_lambda(th, ZetaProcess("fixed", n=1), 50_000,
                             np.random.default_rng(2))
        g4 = estimate_lambda(th, ZetaProcess("fixed", n=4), 50_000,
                             np.random.default_rng(3))
        assert g4.lam < g1.lam


class TestProxySample:
    def test_degenerate_counts_and_validity(self):
        psi = PsiModel("s", theta=ModelParams(-3.9, 0.9, 0.4))
        z = ZetaProcess("shifted_poisson", lam=3.0)
        out = proxy_sample(psi, z, 100, 500, HYP, np.random.default_rng(11),
                           n_mc=2000)
        assert len(out) == 500
        for d in out[:20]:
            assert 0.0 < d.u < 1.0
            assert 0.0 < d.tau < 1.0

    def test_u_delta_link(self):
        # delta_hat must be monotone in u within a degenerate sample
        psi = PsiModel("s", theta=ModelParams(-3.9, 0.9, 0.4))
        z = ZetaProcess("fixed", n=4)
        out = proxy_sample(psi, z, 100, 300, HYP, np.random.default_rng(2), n_mc=2000)
        us = np.array([d.u for d in out])
        dh = np.array([d.delta_hat for d in out])
        order = np.argsort(us)
        assert np.all(np.diff(dh[order]) >= 0)


def test_lambda_estimate_validation():
    with pytest.raises(ValueError):
        LambdaEstimate(lam=0.0, n_mc=1000, se=0.1)
    with pytest.raises(ValueError):
        LambdaEstimate(lam=1.0, n_mc=1000, se=-0.1)
