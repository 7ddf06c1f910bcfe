import math
import warnings

import numpy as np
import pytest

from clusterssd.datagen import PsiModel, ZetaProcess, build_theta_for_scenario
from clusterssd.engine import (
    GcompConfig,
    LogitLineFamily,
    SsdResult,
    TargetUnreachableError,
    TauSample,
    bootstrap_recommendation,
    calibrate_gamma,
    choose_c1,
    estimate_oc,
    find_min_clusters,
    fit_logit_lines,
    oc_curve,
    predict_power,
    simulate_tau_sample,
)
from clusterssd.inference import McmcConfig, PriorSpec
from clusterssd.numerics import Hypothesis, QuadratureRule, expit, logit
from clusterssd.proxy import LambdaEstimate

HYP = Hypothesis(-math.inf, 0.04)
MCMC_FAST = McmcConfig(burnin=150, retained=300)
GCOMP = GcompConfig()


def synthetic_sample(c, logits, seed=0, label="s"):
    lt = np.asarray(logits, dtype=float)
    return TauSample(c=c, psi_label=label, tau=expit(lt), logit_tau=lt,
                     delta=np.zeros(len(lt)), master_seed=seed)


def quick_sample(c, m=100, seed=42, label="s", workers=1):
    rule = QuadratureRule.gauss_hermite(30)
    theta = build_theta_for_scenario(0.02, 0.02, 0.05, rule)
    psi = PsiModel(label, theta=theta)
    z = ZetaProcess("shifted_poisson", lam=3.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return simulate_tau_sample(psi, z, c, m, PriorSpec(), MCMC_FAST, HYP,
                                   GCOMP, seed, workers=workers)


class TestLineFamily:
    def test_exact_at_anchors(self):
        g = np.random.default_rng(1)
        l0, l1 = g.normal(0, 2, 50), g.normal(1, 2, 50)
        fam = LogitLineFamily(c0=100, c1=140, l_at_c0=l0, l_at_c1=l1)
        assert np.array_equal(fam.evaluate(100), l0)
        assert np.array_equal(fam.evaluate(140), l1)

    def test_linear_between(self):
        fam = LogitLineFamily(c0=10, c1=20, l_at_c0=np.array([0.0]),
                              l_at_c1=np.array([1.0]))
        assert fam.evaluate(15)[0] == pytest.approx(0.5)
        assert fam.slopes[0] == pytest.approx(0.1)

    def test_same_counts_rejected(self):
        with pytest.raises(ValueError):
            LogitLineFamily(c0=10, c1=10, l_at_c0=np.zeros(2), l_at_c1=np.zeros(2))


class TestEstimateAndCalibrate:
    def test_estimate_oc_counts_threshold_inclusive(self):
        # expit(0) == 0.5 exactly, so the threshold value itself is counted
        s = synthetic_sample(10, np.array([-2.0, 0.0, 1.0, 2.0]))
        assert estimate_oc(s, 0.5) == pytest.approx(0.75)

    def test_calibrate_smallest_qualifying_threshold(self):
        # taus: 0.10 .. 0.99; alpha = 0.05 -> need P(tau >= g) <= 0.05
        taus = np.linspace(0.10, 0.99, 90)
        s = synthetic_sample(10, logit(taus))
        g = calibrate_gamma(s, 0.05)
        assert estimate_oc(s, g) <= 0.05
        assert estimate_oc(s, g - 0.01) > 0.05

    def test_grid_step(self):
        s = synthetic_sample(10, logit(np.linspace(0.1, 0.9, 50)))
        g = calibrate_gamma(s, 0.10, grid_step=0.005)
        assert round(g / 0.005) == pytest.approx(g / 0.005)


class TestPairing:
    def test_multiset_preserved(self):
        s0 = quick_sample(10, m=100, seed=1)
        s1 = quick_sample(14, m=100, seed=2, label="s")
        fam = fit_logit_lines(s0, s1)
        assert np.array_equal(np.sort(fam.l_at_c0), np.sort(s0.logit_tau))
        assert np.array_equal(np.sort(fam.l_at_c1), np.sort(s1.logit_tau))

    def test_rank_paired_monotone(self):
        s0 = quick_sample(10, m=100, seed=1)
        s1 = quick_sample(14, m=100, seed=2)
        fam = fit_logit_lines(s0, s1)
        assert np.all(np.diff(fam.l_at_c0) >= 0)
        assert np.all(np.diff(fam.l_at_c1) >= 0)

    def test_one_subgroup_equals_plain(self):
        s0 = quick_sample(10, m=100, seed=1)
        s1 = quick_sample(14, m=100, seed=2)
        plain = fit_logit_lines(s0, s1, subgroups=1)
        grouped = fit_logit_lines(s0, s1, subgroups=1)
        assert np.array_equal(plain.l_at_c0, grouped.l_at_c0)
        assert np.array_equal(plain.l_at_c1, grouped.l_at_c1)

    def test_subgroups_partition_lines(self):
        s0 = quick_sample(10, m=100, seed=1)
        s1 = quick_sample(14, m=100, seed=2)
        fam = fit_logit_lines(s0, s1, subgroups=4)
        assert fam.m == 100
        assert np.array_equal(np.sort(fam.l_at_c0), np.sort(s0.logit_tau))

    def test_mismatched_samples_rejected(self):
        s0 = quick_sample(10, m=100, seed=1)
        with pytest.raises(ValueError):
            fit_logit_lines(s0, s0)  # same c
        s1 = synthetic_sample(14, np.zeros(50))
        with pytest.raises(ValueError):
            fit_logit_lines(s0, s1)  # different m


class TestAnchoring:
    def test_predict_power_reproduces_empirical_oc_bitwise(self):
        s0 = quick_sample(10, m=100, seed=1)
        s1 = quick_sample(14, m=100, seed=2)
        fam = fit_logit_lines(s0, s1)
        for gamma in (0.5, 0.8, 0.9, 0.95, 0.97):
            assert predict_power(fam, 10, gamma) == estimate_oc(s0, gamma)
            assert predict_power(fam, 14, gamma) == estimate_oc(s1, gamma)


class TestFindMin:
    def test_known_crossing(self):
        # 10 lines rising from logit(0.5) at c=10; slope 0.1 each;
        # gamma=0.9 -> logit ~ 2.197; all lines cross at the same c
        l0 = np.full(10, float(logit(0.5)))
        l1 = l0 + 0.1 * (20 - 10)
        fam = LogitLineFamily(c0=10, c1=20, l_at_c0=l0, l_at_c1=l1)
        c = find_min_clusters(fam, 0.9, 0.2, 2, 500)
        # need logit >= logit(0.9): c >= 10 + logit(0.9)/0.1
        assert c == math.ceil(10 + float(logit(0.9)) / 0.1)

    def test_unreachable_raises_with_max_power(self):
        l0 = np.full(10, -5.0)
        l1 = np.full(10, -5.0)  # flat, hopeless
        fam = LogitLineFamily(c0=10, c1=20, l_at_c0=l0, l_at_c1=l1)
        with pytest.raises(TargetUnreachableError) as ei:
            find_min_clusters(fam, 0.9, 0.2, 2, 100)
        assert ei.value.max_power == 0.0

    def test_non_monotone_power_handled(self):
        # one line falls steeply, others rise: power dips then recovers
        l0 = np.array([3.0, -1.0, -1.0, -1.0])
        l1 = np.array([-6.0, 3.0, 3.0, 3.0])
        fam = LogitLineFamily(c0=10, c1=20, l_at_c0=l0, l_at_c1=l1)
        c = find_min_clusters(fam, 0.6, 0.3, 2, 100)
        assert predict_power(fam, c, 0.6) >= 0.7
        assert all(predict_power(fam, cc, 0.6) < 0.7 for cc in range(2, c))


class TestChooseC1:
    def test_direction_above_when_underpowered(self):
        s0 = synthetic_sample(100, logit(np.linspace(0.05, 0.9, 100)))
        lam = LambdaEstimate(lam=0.0016, n_mc=1000, se=0.0)
        c1 = choose_c1(s0, 0.9, 0.2, lam, HYP)
        assert c1 > 100

    def test_direction_below_when_overpowered(self):
        s0 = synthetic_sample(100, logit(np.linspace(0.9, 0.999, 100)))
        lam = LambdaEstimate(lam=0.0016, n_mc=1000, se=0.0)
        c1 = choose_c1(s0, 0.5, 0.2, lam, HYP)
        assert c1 < 100


class TestBootstrap:
    def test_zero_variance_gives_zero_width(self):
        s0 = synthetic_sample(10, np.full(100, -1.0))
        s1 = synthetic_sample(20, np.full(100, 2.0))
        lo, hi, recs = bootstrap_recommendation(
            s0, s1, 0.8, 0.2, 200, 0.95, np.random.default_rng(0), c_min=2)
        assert lo == hi
        assert len(np.unique(recs)) == 1

    def test_fixed_seed_reproducible(self):
        s0 = quick_sample(10, m=100, seed=1)
        s1 = quick_sample(14, m=100, seed=2)
        a = bootstrap_recommendation(s0, s1, 0.6, 0.4, 200, 0.95,
                                     np.random.default_rng(9), c_min=2)
        b = bootstrap_recommendation(s0, s1, 0.6, 0.4, 200, 0.95,
                                     np.random.default_rng(9), c_min=2)
        assert a[0] == b[0] and a[1] == b[1]
        assert np.array_equal(a[2], b[2])

    def test_interval_ordering(self):
        s0 = quick_sample(10, m=100, seed=1)
        s1 = quick_sample(14, m=100, seed=2)
        lo, hi, recs = bootstrap_recommendation(s0, s1, 0.6, 0.4, 200, 0.95,
                                                np.random.default_rng(4), c_min=2)
        assert lo <= hi
        assert recs.min() >= 2

    def test_breakpoint_scan_agrees_with_linear_scan(self):
        g = np.random.default_rng(10)
        for _ in range(20):
            l0 = g.normal(0.0, 2.0, 40)
            l1 = l0 + g.normal(0.5, 1.0, 40)
            fam = LogitLineFamily(c0=10, c1=20, l_at_c0=np.sort(l0),
                                  l_at_c1=np.sort(l1))
            gamma, beta = 0.7, 0.4
            try:
                ref = find_min_clusters(fam, gamma, beta, 2, 200)
            except TargetUnreachableError:
                ref = None
            from clusterssd.engine import _min_c_from_pairs
            got = _min_c_from_pairs(np.sort(l0), np.sort(l1), 10, 20,
                                    float(logit(gamma)), 40 * (1 - beta), 2, 200)
            assert got == ref


class TestOcCurve:
    def test_bands_contain_estimate(self):
        s0 = quick_sample(10, m=100, seed=1)
        s1 = quick_sample(14, m=100, seed=2)
        fam = fit_logit_lines(s0, s1)
        pts = oc_curve(fam, 0.8, [8, 10, 12, 14, 16], s0, s1, 200,
                       np.random.default_rng(3))
        for c, est, lo, hi in pts:
            assert 0.0 <= lo <= est <= hi <= 1.0

    def test_grid_echoed(self):
        s0 = quick_sample(10, m=100, seed=1)
        s1 = quick_sample(14, m=100, seed=2)
        fam = fit_logit_lines(s0, s1)
        pts = oc_curve(fam, 0.8, [9, 11], s0, s1, 200, np.random.default_rng(3))
        assert [p[0] for p in pts] == [9, 11]


class TestSimulateTauSample:
    def test_worker_counts_agree(self):
        a = quick_sample(8, m=100, seed=7, workers=1)
        b = quick_sample(8, m=100, seed=7, workers=4)
        assert np.array_equal(a.tau, b.tau)
        assert np.array_equal(a.logit_tau, b.logit_tau)
        assert np.array_equal(a.delta, b.delta)

    def test_tau_expit_identity_bitwise(self):
        s = quick_sample(8, m=100, seed=7)
        assert np.array_equal(s.tau, expit(s.logit_tau))

    def test_small_m_warns(self):
        rule = QuadratureRule.gauss_hermite(30)
        theta = build_theta_for_scenario(0.02, 0.02, 0.05, rule)
        psi = PsiModel("s", theta=theta)
        z = ZetaProcess("fixed", n=2)
        import warnings as w

        with pytest.warns(UserWarning):
            simulate_tau_sample(psi, z, 8, 10, PriorSpec(), MCMC_FAST, HYP,
                                GCOMP, 1)


def test_ssd_result_invariant():
    with pytest.raises(ValueError):
        SsdResult(gamma=0.9, c0=100, c1=140, c2=150, power_at_c2=0.8,
                  ci_lower=100, ci_upper=120, oc_curve=[])
