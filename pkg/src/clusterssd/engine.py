"""Two-cluster-count design engine.

Estimates sampling distributions of posterior probabilities at two cluster
counts, joins same-rank order statistics of their logits with lines, and scans
those lines to find the smallest cluster count meeting the power target.
Bootstrap resampling of the two tau samples quantifies simulation uncertainty
in both the recommendation and the operating-characteristic curve.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .datagen import PsiModel, ZetaProcess, draw_theta, simulate_trial
from .gcomp import marginalize_dirichlet, marginalize_parametric, tau_from_delta
from .inference import McmcConfig, PriorSpec, sample_posterior
from .numerics import (
    Hypothesis,
    NumericError,
    QuadratureRule,
    estimand_delta,
    expit,
    logit,
)
from .proxy import LambdaEstimate, theorem1_slope
from .streams import phase_tag, substream

__all__ = [
    "GcompConfig",
    "TauSample",
    "LogitLineFamily",
    "SsdResult",
    "TargetUnreachableError",
    "simulate_tau_sample",
    "estimate_oc",
    "calibrate_gamma",
    "choose_c1",
    "fit_logit_lines",
    "predict_power",
    "find_min_clusters",
    "bootstrap_recommendation",
    "oc_curve",
]


class TargetUnreachableError(RuntimeError):
    """Power target not reachable in the allowed cluster-count range."""

    def __init__(self, msg, max_power=None):
        super().__init__(msg)
        self.max_power = max_power


@dataclass(frozen=True)
class GcompConfig:
    """How posterior draws become estimand draws and a tau value."""

    method: str = "parametric_quadrature"
    quad_order: int = 30
    n_rew: int = 1
    bandwidth: object = "silverman"  # "silverman" or a fixed float

    def __post_init__(self):
        if self.method not in ("parametric_quadrature", "dirichlet_reweight"):
            raise ValueError(f"unknown gcomp method {self.method!r}")
        if self.quad_order < 1:
            raise ValueError("quad_order must be >= 1")
        if self.n_rew < 1:
            raise ValueError("n_rew must be >= 1")


@dataclass(frozen=True)
class TauSample:
    """Estimated sampling distribution of tau at one (scenario, c) pair."""

    c: int
    psi_label: str
    tau: np.ndarray  # (m,)
    logit_tau: np.ndarray  # (m,)
    delta: np.ndarray  # (m,) estimand value per repetition
    master_seed: int

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        lt = np.asarray(self.logit_tau, dtype=float)
        de = np.asarray(self.delta, dtype=float)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "logit_tau", lt)
        object.__setattr__(self, "delta", de)
        if not len(tau) == len(lt) == len(de):
            raise ValueError("tau, logit_tau, delta must share length")

    @property
    def m(self) -> int:
        return len(self.tau)


@dataclass(frozen=True)
class LogitLineFamily:
    """Rank-paired lines through the logit order statistics at c0 and c1.

    Line r passes exactly through (c0, l_at_c0[r]) and (c1, l_at_c1[r]);
    evaluation uses the convex-combination form so both anchors reproduce the
    stored order statistics bitwise.
    """

    c0: int
    c1: int
    l_at_c0: np.ndarray
    l_at_c1: np.ndarray
    subgroup_count: int = 1

    def __post_init__(self):
        if self.c0 == self.c1:
            raise ValueError("c0 and c1 must differ")
        if self.subgroup_count < 1:
            raise ValueError("subgroup_count must be >= 1")
        l0 = np.asarray(self.l_at_c0, dtype=float)
        l1 = np.asarray(self.l_at_c1, dtype=float)
        object.__setattr__(self, "l_at_c0", l0)
        object.__setattr__(self, "l_at_c1", l1)
        if len(l0) != len(l1):
            raise ValueError("anchor arrays must share length")

    @property
    def m(self) -> int:
        return len(self.l_at_c0)

    @property
    def slopes(self) -> np.ndarray:
        return (self.l_at_c1 - self.l_at_c0) / (self.c1 - self.c0)

    @property
    def intercepts(self) -> np.ndarray:
        return self.l_at_c0 - self.slopes * self.c0

    def evaluate(self, c) -> np.ndarray:
        """Logits of all lines at cluster count c (exact at the anchors)."""
        t = (np.asarray(c, dtype=float) - self.c0) / (self.c1 - self.c0)
        if np.ndim(t) == 0:
            return self.l_at_c0 * (1.0 - t) + self.l_at_c1 * t
        return (self.l_at_c0[:, None] * (1.0 - t)[None, :]
                + self.l_at_c1[:, None] * t[None, :])


@dataclass(frozen=True)
class SsdResult:
    gamma: float
    c0: int
    c1: int
    c2: int
    power_at_c2: float
    ci_lower: int
    ci_upper: int
    oc_curve: list  # of (c, estimate, band_lo, band_hi)

    def __post_init__(self):
        if not self.ci_lower <= self.c2 <= self.ci_upper:
            raise ValueError("confidence interval must contain the recommendation")


def _one_repetition(r, psi, zeta, c, priors, mcmc_cfg, hyp, gcomp_cfg, master_seed,
                    tag, rule):
    """One simulation repetition; retried once on sampler failure.

    The data stream and the inference stream are separate children of the
    repetition's substream; the data stream (via simulate_trial's per-cluster
    children) is shared across cluster counts and scenario parameter settings,
    so operating characteristics at different design points are compared with
    common random numbers rather than independent noise.
    """
    for attempt in (0, 1):
        rng_data = substream(master_seed, tag, r, attempt, 0)
        rng_inf = substream(master_seed, tag, r, attempt, 1)
        theta = draw_theta(psi, rng_data)
        data = simulate_trial(theta, zeta, c, rng_data)
        try:
            draws = sample_posterior(data, priors, mcmc_cfg, rng_inf)
        except NumericError:
            if attempt == 1:
                raise NumericError(f"sampler failed twice at repetition {r}")
            continue
        if gcomp_cfg.method == "parametric_quadrature":
            dp = marginalize_parametric(draws, rule)
        else:
            dp = marginalize_dirichlet(draws, gcomp_cfg.n_rew, rng_inf)
        tv = tau_from_delta(dp, hyp, gcomp_cfg.bandwidth)
        delta_r = estimand_delta(theta, rule)
        return r, delta_r, tv.tau, tv.logit_tau
    raise AssertionError("unreachable")


def _rep_star(args):
    return _one_repetition(*args)


def simulate_tau_sample(psi: PsiModel, zeta: ZetaProcess, c: int, m: int,
                        priors: PriorSpec, mcmc_cfg: McmcConfig, hyp: Hypothesis,
                        gcomp_cfg: GcompConfig, master_seed: int,
                        workers: int = 1) -> TauSample:
    """Estimate the sampling distribution of tau at one cluster count.

    Each repetition draws parameters, simulates a trial, runs the posterior
    sampler, marginalizes, and smooths. Repetition r owns the substream
    (master_seed, tag(psi.label), r), so results are identical for any worker
    count. The tag deliberately excludes c: the same scenario sampled at two
    cluster counts (or under two parameter settings with the same label
    layout) reuses the same repetition streams, giving common-random-number
    coupling across the design grid. A repetition is retried once on sampler
    failure; a second failure aborts (the sample size m is never silently
    reduced).
    """
    if m < 100:
        warnings.warn(f"m = {m} < 100: operating-characteristic estimates "
                      "are unreliable", stacklevel=2)
    tag = phase_tag(psi.label)
    rule = QuadratureRule.gauss_hermite(gcomp_cfg.quad_order)
    jobs = [(r, psi, zeta, c, priors, mcmc_cfg, hyp, gcomp_cfg, master_seed, tag, rule)
            for r in range(m)]
    if workers <= 1:
        results = [_rep_star(j) for j in jobs]
    else:
        import multiprocessing as mp

        ctx = mp.get_context("fork")
        with ctx.Pool(workers) as pool:
            results = pool.map(_rep_star, jobs, chunksize=max(1, m // (workers * 8)))
    results.sort(key=lambda t: t[0])
    delta = np.array([t[1] for t in results])
    tau = np.array([t[2] for t in results])
    lt = np.array([t[3] for t in results])
    return TauSample(c=c, psi_label=psi.label, tau=tau, logit_tau=lt, delta=delta,
                     master_seed=master_seed)


def estimate_oc(sample: TauSample, gamma: float) -> float:
    """Empirical fraction of repetitions with tau >= gamma."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0,1]")
    return float(np.mean(sample.tau >= gamma))


def calibrate_gamma(null_sample: TauSample, alpha: float,
                    grid_step: float = 0.01) -> float:
    """Smallest grid threshold bounding the null rejection rate by alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0,1)")
    if not 0.0 < grid_step <= 0.01 + 1e-12:
        raise ValueError("grid_step must be in (0, 0.01]")
    n_steps = int(round(1.0 / grid_step))
    grid = np.round(np.arange(1, n_steps + 1) * grid_step, 10)
    for g in grid:
        if estimate_oc(null_sample, float(g)) <= alpha:
            return float(g)
    raise NumericError("no threshold bounds the null rejection rate: "
                       "tau has point mass at 1.0 (check KDE smoothing)")


def choose_c1(sample_c0: TauSample, gamma: float, beta: float,
              lambda_est: LambdaEstimate, hyp: Hypothesis,
              c_min: int = 2, cap_mult: int = 10) -> int:
    """Second cluster count, from limiting-slope projections of the c0 logits.

    Each repetition's logit is projected along its closed-form limiting slope
    to find the smallest count whose projected power meets 1 - beta; the
    returned c1 then doubles that step away from c0. The limiting slopes are
    steeper than the finite-sample growth of logit(tau), so the projected
    count systematically undershoots the eventual recommendation; taking
    twice the step makes c1 tend to bracket it, and the final prediction
    interpolates between the two anchors instead of extrapolating beyond
    them. The search runs strictly below c0 when power at c0 already meets
    the target and strictly above otherwise, so the direction rule holds by
    construction.
    """
    c0 = sample_c0.c
    emp = estimate_oc(sample_c0, gamma)
    lgam = float(logit(gamma))
    slopes = np.array([theorem1_slope(d, lambda_est.lam, hyp) for d in sample_c0.delta])
    l0 = sample_c0.logit_tau

    def projected_power(cands):
        proj = l0[:, None] + slopes[:, None] * (cands[None, :] - c0)
        return np.mean(proj >= lgam, axis=0)

    if emp >= 1.0 - beta:
        cands = np.arange(max(2, c_min), c0)
        if len(cands) == 0:
            return max(2, c0 - 1)
        ok = projected_power(cands) >= 1.0 - beta
        hit = np.flatnonzero(ok)
        if len(hit) == 0:
            return c0 - 1
        ck = int(cands[hit[0]])
        return max(max(2, c_min), c0 - 2 * (c0 - ck))
    cap = cap_mult * c0
    cands = np.arange(c0 + 1, cap + 1)
    ok = projected_power(cands) >= 1.0 - beta
    hit = np.flatnonzero(ok)
    if len(hit) == 0:
        warnings.warn(f"projected power never reaches {1 - beta:g} below c = {cap}; "
                      "returning the cap", stacklevel=2)
        return cap
    ck = int(cands[hit[0]])
    return min(cap, c0 + 2 * (ck - c0))


def _paired_logits(logit0, delta0, logit1, delta1, subgroups):
    """Rank-pair two logit samples, optionally within delta-ordered blocks.

    Ties broken by repetition index (stable lexsort) so pairing is
    deterministic. Returns (l0, l1) arrays in line order.
    """
    m = len(logit0)
    idx = np.arange(m)
    if subgroups <= 1:
        o0 = np.lexsort((idx, logit0))
        o1 = np.lexsort((idx, logit1))
        return logit0[o0], logit1[o1]
    by_d0 = np.array_split(np.lexsort((idx, delta0)), subgroups)
    by_d1 = np.array_split(np.lexsort((idx, delta1)), subgroups)
    l0_parts, l1_parts = [], []
    for b0, b1 in zip(by_d0, by_d1):
        if len(b0) != len(b1):
            raise ValueError("subgroup blocks must align; m must split equally")
        s0 = b0[np.lexsort((b0, logit0[b0]))]
        s1 = b1[np.lexsort((b1, logit1[b1]))]
        l0_parts.append(logit0[s0])
        l1_parts.append(logit1[s1])
    return np.concatenate(l0_parts), np.concatenate(l1_parts)


def fit_logit_lines(sample0: TauSample, sample1: TauSample,
                    subgroups: int = 1) -> LogitLineFamily:
    """Join same-rank logit order statistics at the two cluster counts.

    With subgroups > 1, repetitions are first split into blocks by the order
    statistics of their estimand values and rank-paired within blocks.
    """
    if sample0.c == sample1.c:
        raise ValueError("the two samples must have different cluster counts")
    if sample0.m != sample1.m:
        raise ValueError("the two samples must have equal m")
    if sample0.psi_label != sample1.psi_label:
        raise ValueError("the two samples must come from the same scenario model")
    l0, l1 = _paired_logits(sample0.logit_tau, sample0.delta,
                            sample1.logit_tau, sample1.delta, subgroups)
    return LogitLineFamily(c0=sample0.c, c1=sample1.c, l_at_c0=l0, l_at_c1=l1,
                           subgroup_count=subgroups)


def predict_power(lines: LogitLineFamily, c: int, gamma: float) -> float:
    """Fraction of inverse-logit line values at c that meet the threshold."""
    if c < 2:
        raise ValueError("c must be >= 2")
    taus = expit(lines.evaluate(int(c)))
    return float(np.mean(taus >= gamma))


def find_min_clusters(lines: LogitLineFamily, gamma: float, beta: float,
                      c_min: int, c_max: int) -> int:
    """Smallest c in [c_min, c_max] with predicted power >= 1 - beta.

    Linear scan: crossing lines make predicted power non-monotone in c, so
    bisection is not safe.
    """
    if c_min < 2:
        raise ValueError("c_min must be >= 2")
    if c_max < c_min:
        raise ValueError("need c_max >= c_min")
    best = -1.0
    for c in range(c_min, c_max + 1):
        p = predict_power(lines, c, gamma)
        if p >= 1.0 - beta:
            return c
        best = max(best, p)
    raise TargetUnreachableError(
        f"power target {1 - beta:g} unreachable in [{c_min}, {c_max}]; "
        f"max predicted power {best:.4f}", max_power=best)


def _min_c_from_pairs(l0, l1, c0, c1, lgam, need, c_min, c_max):
    """Breakpoint scan for the smallest qualifying integer c, given paired
    anchor logits. Used by the bootstrap loop (vectorized equivalent of
    find_min_clusters up to floating-point knife edges)."""
    d = c1 - c0
    slope = (l1 - l0) / d
    cands = np.arange(c_min, c_max + 1)
    pos = slope > 0
    neg = slope < 0
    flat = ~(pos | neg)
    counts = np.zeros(len(cands))
    if flat.any():
        counts += np.sum(l0[flat] >= lgam)
    if pos.any():
        x = c0 + (lgam - l0[pos]) / slope[pos]
        counts += np.searchsorted(np.sort(x), cands, side="right")
    if neg.any():
        x = c0 + (lgam - l0[neg]) / slope[neg]
        counts += neg.sum() - np.searchsorted(np.sort(x), cands, side="left")
    ok = np.flatnonzero(counts >= need)
    return int(cands[ok[0]]) if len(ok) else None


def bootstrap_recommendation(sample0: TauSample, sample1: TauSample, gamma: float,
                             beta: float, M: int, level: float,
                             rng: np.random.Generator,
                             c_min: int = 10, c_max: Optional[int] = None,
                             subgroups: int = 1):
    """Percentile bootstrap interval for the recommended cluster count.

    Resamples (tau, delta) pairs with replacement from each sample, refits the
    line family, and re-recommends; the interval is the percentile interval of
    the M recommendations. Resamples whose target is unreachable record the
    search cap (censoring, counted in the returned distribution).
    """
    if M < 100:
        raise ValueError("M must be >= 100")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0,1)")
    if c_max is None:
        c_max = 10 * sample0.c
    m = sample0.m
    lgam = float(logit(gamma))
    need = m * (1.0 - beta)
    recs = np.empty(M, dtype=np.int64)
    for b in range(M):
        i0 = rng.integers(0, m, m)
        i1 = rng.integers(0, m, m)
        l0, l1 = _paired_logits(sample0.logit_tau[i0], sample0.delta[i0],
                                sample1.logit_tau[i1], sample1.delta[i1], subgroups)
        c = _min_c_from_pairs(l0, l1, sample0.c, sample1.c, lgam, need, c_min, c_max)
        recs[b] = c_max if c is None else c
    lo_q = (1.0 - level) / 2.0
    ci_lo = int(np.quantile(recs, lo_q, method="closest_observation"))
    ci_hi = int(np.quantile(recs, 1.0 - lo_q, method="closest_observation"))
    return ci_lo, ci_hi, recs


def oc_curve(lines: LogitLineFamily, gamma: float, c_grid, sample0: TauSample,
             sample1: TauSample, M: int, rng: np.random.Generator,
             level: float = 0.95, subgroups: int = 1):
    """Pointwise percentile bands for predicted power over a cluster grid.

    Point estimates come from the fitted line family; bands from M bootstrap
    refits. Bands are widened (if needed) to contain the point estimate.
    """
    c_grid = [int(c) for c in c_grid]
    if len(c_grid) == 0:
        raise ValueError("grid must be non-empty")
    est = np.array([predict_power(lines, c, gamma) for c in c_grid])
    m = sample0.m
    lgam = float(logit(gamma))
    d = lines.c1 - lines.c0
    t = (np.asarray(c_grid, dtype=float) - lines.c0) / d  # (G,)
    powers = np.empty((M, len(c_grid)))
    chunk = max(1, min(M, 200))
    done = 0
    while done < M:
        k = min(chunk, M - done)
        i0 = rng.integers(0, m, (k, m))
        i1 = rng.integers(0, m, (k, m))
        if subgroups <= 1:
            l0 = np.sort(sample0.logit_tau[i0], axis=1, kind="stable")
            l1 = np.sort(sample1.logit_tau[i1], axis=1, kind="stable")
        else:
            l0 = np.empty((k, m))
            l1 = np.empty((k, m))
            for j in range(k):
                l0[j], l1[j] = _paired_logits(
                    sample0.logit_tau[i0[j]], sample0.delta[i0[j]],
                    sample1.logit_tau[i1[j]], sample1.delta[i1[j]], subgroups)
        vals = l0[:, :, None] * (1.0 - t)[None, None, :] \
            + l1[:, :, None] * t[None, None, :]
        powers[done:done + k] = np.mean(vals >= lgam, axis=1)
        done += k
    lo_q = (1.0 - level) / 2.0
    lo = np.quantile(powers, lo_q, axis=0)
    hi = np.quantile(powers, 1.0 - lo_q, axis=0)
    lo = np.minimum(lo, est)
    hi = np.maximum(hi, est)
    return [(c, float(e), float(a), float(b))
            for c, e, a, b in zip(c_grid, est, lo, hi)]
