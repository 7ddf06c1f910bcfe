"""Posterior sampling for the logistic random-intercept model.

Blockwise adaptive random-walk Metropolis over (beta0, beta1), log sigma, and
the cluster intercepts w_j. With no individual-level covariates, all members
of a cluster share one linear predictor, so the likelihood depends on the data
only through per-cluster (size, event count, arm) triples; the chain kernel is
O(c) per sweep and compiled with numba.

Proposal scales adapt (Robbins-Monro on the log scale) during burn-in only and
are frozen afterwards, so the retained chain uses a fixed kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .datagen import TrialData
from .numerics import ModelParams, NumericError, logit

__all__ = [
    "PriorSpec",
    "McmcConfig",
    "PosteriorDraws",
    "log_joint",
    "sample_posterior",
    "dump_draws",
]

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorSpec:
    """Diffuse analysis priors: normal on the betas, half-normal on sigma."""

    beta0_mean: float = 0.0
    beta0_sd: float = 10.0
    beta1_mean: float = 0.0
    beta1_sd: float = 2.5
    sigma_scale: float = 1.0

    def __post_init__(self):
        if self.beta0_sd <= 0 or self.beta1_sd <= 0 or self.sigma_scale <= 0:
            raise ValueError("prior scales must be > 0")


@dataclass(frozen=True)
class McmcConfig:
    burnin: int = 500
    retained: int = 2000
    chains: int = 1
    adapt_window: Optional[int] = None  # defaults to burnin
    target_accept_pair: float = 0.25
    target_accept_scalar: float = 0.30
    compute_diagnostics: bool = False

    def __post_init__(self):
        if self.burnin < 0:
            raise ValueError("burnin must be >= 0")
        if self.retained < 1:
            raise ValueError("retained must be >= 1")
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not 0.0 < self.target_accept_pair < 1.0:
            raise ValueError("target_accept_pair must be in (0,1)")
        if not 0.0 < self.target_accept_scalar < 1.0:
            raise ValueError("target_accept_scalar must be in (0,1)")


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained draws; immutable after creation."""

    beta0: np.ndarray  # (S,)
    beta1: np.ndarray  # (S,)
    sigma: np.ndarray  # (S,), all > 0
    w: np.ndarray  # (S, c)
    accept_rates: dict
    diagnostics: Optional[dict] = None

    def __post_init__(self):
        if not (len(self.beta0) == len(self.beta1) == len(self.sigma) == self.w.shape[0]):
            raise ValueError("draw arrays must share length")
        if np.any(self.sigma <= 0):
            raise ValueError("sigma draws must be > 0")
        for arr in (self.beta0, self.beta1, self.sigma, self.w):
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError("draws must be finite")

    @property
    def n_draws(self) -> int:
        return len(self.beta0)


def _softplus(x):
    # log(1 + e^x), overflow-safe
    return np.where(x > 35.0, x, np.log1p(np.exp(np.minimum(x, 35.0))))


def log_joint(params: ModelParams, w, data: TrialData, priors: PriorSpec) -> float:
    """Log prior + log latent density + log likelihood; -inf for sigma <= 0.

    Additive over clusters; for an empty trial only the prior terms remain.
    """
    w = np.asarray(w, dtype=float)
    if len(w) != data.c:
        raise ValueError("w length must equal number of clusters")
    b0, b1, sig = params.beta0, params.beta1, params.sigma
    if sig <= 0:
        return -math.inf
    lp = -0.5 * ((b0 - priors.beta0_mean) / priors.beta0_sd) ** 2 \
        - math.log(priors.beta0_sd) - 0.5 * _LOG_2PI
    lp += -0.5 * ((b1 - priors.beta1_mean) / priors.beta1_sd) ** 2 \
        - math.log(priors.beta1_sd) - 0.5 * _LOG_2PI
    lp += 0.5 * math.log(2.0 / math.pi) - math.log(priors.sigma_scale) \
        - 0.5 * (sig / priors.sigma_scale) ** 2
    if data.c == 0:
        return float(lp)
    lp += float(np.sum(-0.5 * (w / sig) ** 2 - math.log(sig) - 0.5 * _LOG_2PI))
    sizes = data.cluster_sizes.astype(float)
    counts = np.add.reduceat(data.y_flat.astype(float), data.offsets[:-1])
    eta = b0 + b1 * data.arms.astype(float) + w
    lp += float(np.sum(counts * eta - sizes * _softplus(eta)))
    return float(lp)


@njit(cache=True)
def _chain_kernel(n, s, a, c,
                  b0m, b0s, b1m, b1s, sscale,
                  burnin, retained, adapt_window,
                  target_pair, target_scalar,
                  b0, b1, lt, w,
                  z_pair, u_pair, z_lt, u_lt, z_w, u_w,
                  out_b0, out_b1, out_sig, out_w):
    """Run the three-block chain; returns post-adaptation acceptance rates."""
    total = burnin + retained

    # per-cluster data log likelihood at the current state
    cl = np.empty(c)
    for j in range(c):
        eta = b0 + b1 * a[j] + w[j]
        sp = eta if eta > 35.0 else math.log1p(math.exp(eta))
        cl[j] = s[j] * eta - n[j] * sp
    ll = cl.sum()

    sig = math.exp(lt)
    wss = 0.0
    for j in range(c):
        wss += w[j] * w[j]

    def_scale_pair = 0.5
    scale_pair = def_scale_pair
    scale_lt = 0.5
    scale_w = np.full(c, 1.0)

    acc_pair = 0.0
    acc_lt = 0.0
    acc_w = 0.0
    n_post = 0

    cl_prop = np.empty(c)

    for k in range(total):
        adapting = k < adapt_window
        step = (k + 1.0) ** (-0.6)

        # block 1: (beta0, beta1) jointly
        b0p = b0 + scale_pair * z_pair[k, 0]
        b1p = b1 + scale_pair * z_pair[k, 1]
        llp = 0.0
        for j in range(c):
            eta = b0p + b1p * a[j] + w[j]
            sp = eta if eta > 35.0 else math.log1p(math.exp(eta))
            cl_prop[j] = s[j] * eta - n[j] * sp
            llp += cl_prop[j]
        d = llp - ll
        d += -0.5 * ((b0p - b0m) / b0s) ** 2 + 0.5 * ((b0 - b0m) / b0s) ** 2
        d += -0.5 * ((b1p - b1m) / b1s) ** 2 + 0.5 * ((b1 - b1m) / b1s) ** 2
        accepted = math.log(u_pair[k]) < d
        if accepted:
            b0 = b0p
            b1 = b1p
            ll = llp
            for j in range(c):
                cl[j] = cl_prop[j]
        if adapting:
            scale_pair *= math.exp(step * ((1.0 if accepted else 0.0) - target_pair))
            if scale_pair < 1e-3:
                scale_pair = 1e-3
            elif scale_pair > 10.0:
                scale_pair = 10.0
        elif k >= burnin:
            if accepted:
                acc_pair += 1.0

        # block 2: log sigma (half-normal prior on sigma, with Jacobian)
        ltp = lt + scale_lt * z_lt[k]
        sigp = math.exp(ltp)
        # latent term: sum_j log N(w_j; 0, sigma^2)
        d = -c * ltp - 0.5 * wss / (sigp * sigp) + c * lt + 0.5 * wss / (sig * sig)
        # prior on sigma plus log-Jacobian d sigma / d lt = sigma
        d += -0.5 * (sigp / sscale) ** 2 + ltp + 0.5 * (sig / sscale) ** 2 - lt
        accepted = math.log(u_lt[k]) < d
        if accepted:
            lt = ltp
            sig = sigp
        if adapting:
            scale_lt *= math.exp(step * ((1.0 if accepted else 0.0) - target_scalar))
            if scale_lt < 1e-3:
                scale_lt = 1e-3
            elif scale_lt > 10.0:
                scale_lt = 10.0
        elif k >= burnin:
            if accepted:
                acc_lt += 1.0

        # block 3: each w_j, scalar updates; proposal scale rides on the
        # current sigma so acceptance stays stable wherever sigma mixes to
        inv2v = 0.5 / (sig * sig)
        n_acc_w = 0
        for j in range(c):
            wp = w[j] + scale_w[j] * sig * z_w[k, j]
            eta = b0 + b1 * a[j] + wp
            sp = eta if eta > 35.0 else math.log1p(math.exp(eta))
            clp = s[j] * eta - n[j] * sp
            d = clp - cl[j] + inv2v * (w[j] * w[j] - wp * wp)
            accepted = math.log(u_w[k, j]) < d
            if accepted:
                wss += wp * wp - w[j] * w[j]
                w[j] = wp
                ll += clp - cl[j]
                cl[j] = clp
                n_acc_w += 1
            if adapting:
                scale_w[j] *= math.exp(step * ((1.0 if accepted else 0.0) - target_scalar))
                if scale_w[j] < 1e-3:
                    scale_w[j] = 1e-3
                elif scale_w[j] > 10.0:
                    scale_w[j] = 10.0
        if k >= burnin and k >= adapt_window:
            acc_w += n_acc_w

        if k >= burnin:
            idx = k - burnin
            out_b0[idx] = b0
            out_b1[idx] = b1
            out_sig[idx] = sig
            for j in range(c):
                out_w[idx, j] = w[j]
            n_post += 1

    if n_post > 0:
        acc_pair /= n_post
        acc_lt /= n_post
        if c > 0:
            acc_w /= n_post * c
    return acc_pair, acc_lt, acc_w


def _collapsed_init(data: TrialData) -> tuple:
    """Closed-form intercept/slope from pooled per-arm event rates.

    Continuity correction keeps the estimate finite with zero events; this is
    the cluster-collapsed logistic fit for an intercept + arm model.
    """
    if data.c == 0:
        return 0.0, 0.0
    arm_obs = np.repeat(data.arms, data.cluster_sizes)
    y = data.y_flat.astype(float)
    n1 = max(int((arm_obs == 1).sum()), 0)
    n0 = max(int((arm_obs == 0).sum()), 0)
    if n0 == 0 or n1 == 0:
        return 0.0, 0.0
    p0 = (y[arm_obs == 0].sum() + 0.5) / (n0 + 1.0)
    p1 = (y[arm_obs == 1].sum() + 0.5) / (n1 + 1.0)
    b0 = float(logit(p0))
    b1 = float(logit(p1)) - b0
    return b0, b1


def _run_one_chain(data: TrialData, priors: PriorSpec, cfg: McmcConfig,
                   rng: np.random.Generator) -> PosteriorDraws:
    c = data.c
    total = cfg.burnin + cfg.retained
    adapt_window = cfg.burnin if cfg.adapt_window is None else min(cfg.adapt_window, total)

    b0, b1 = _collapsed_init(data)
    sigma0 = 0.5
    w0 = np.zeros(c)
    if not math.isfinite(log_joint(ModelParams(b0, b1, sigma0), w0, data, priors)):
        raise NumericError("non-finite log joint at initialization")

    # all randomness drawn up front in a fixed order (substream determinism)
    z_pair = rng.standard_normal((total, 2))
    u_pair = rng.random(total)
    z_lt = rng.standard_normal(total)
    u_lt = rng.random(total)
    z_w = rng.standard_normal((total, c))
    u_w = rng.random((total, c))

    out_b0 = np.empty(cfg.retained)
    out_b1 = np.empty(cfg.retained)
    out_sig = np.empty(cfg.retained)
    out_w = np.empty((cfg.retained, c))

    counts = (np.add.reduceat(data.y_flat.astype(float), data.offsets[:-1])
              if c > 0 else np.zeros(0))
    acc = _chain_kernel(
        data.cluster_sizes.astype(np.float64), counts, data.arms.astype(np.float64), c,
        priors.beta0_mean, priors.beta0_sd, priors.beta1_mean, priors.beta1_sd,
        priors.sigma_scale,
        cfg.burnin, cfg.retained, adapt_window,
        cfg.target_accept_pair, cfg.target_accept_scalar,
        b0, b1, math.log(sigma0), w0.copy(),
        z_pair, u_pair, z_lt, u_lt, z_w, u_w,
        out_b0, out_b1, out_sig, out_w,
    )
    rates = {"pair": float(acc[0]), "log_sigma": float(acc[1]), "w": float(acc[2])}
    return PosteriorDraws(beta0=out_b0, beta1=out_b1, sigma=out_sig, w=out_w,
                          accept_rates=rates)


def _split_rhat(x: np.ndarray) -> float:
    """Split-chain potential scale reduction on one scalar series."""
    half = len(x) // 2
    if half < 2:
        return float("nan")
    chains = np.stack([x[:half], x[half:2 * half]])
    means = chains.mean(axis=1)
    b = half * means.var(ddof=1)
    wvar = chains.var(axis=1, ddof=1).mean()
    if wvar == 0:
        return 1.0
    var_plus = (half - 1) / half * wvar + b / half
    return float(math.sqrt(var_plus / wvar))


def sample_posterior(data: TrialData, priors: PriorSpec, cfg: McmcConfig,
                     rng: np.random.Generator) -> PosteriorDraws:
    """Joint posterior draws of (beta0, beta1, sigma, w) given one trial.

    Deterministic given (data, cfg, generator state). With chains > 1 the
    chains are concatenated and split-chain diagnostics attached.
    """
    if cfg.chains == 1:
        draws = _run_one_chain(data, priors, cfg, rng)
        if cfg.compute_diagnostics:
            diag = {name: _split_rhat(getattr(draws, name))
                    for name in ("beta0", "beta1", "sigma")}
            draws = PosteriorDraws(draws.beta0, draws.beta1, draws.sigma, draws.w,
                                   draws.accept_rates, diagnostics=diag)
        return draws

    parts = []
    for _ in range(cfg.chains):
        child = np.random.default_rng(rng.integers(0, 2**63 - 1))
        parts.append(_run_one_chain(data, priors, cfg, child))
    beta0 = np.concatenate([p.beta0 for p in parts])
    beta1 = np.concatenate([p.beta1 for p in parts])
    sigma = np.concatenate([p.sigma for p in parts])
    w = np.concatenate([p.w for p in parts])
    rates = {k: float(np.mean([p.accept_rates[k] for p in parts]))
             for k in parts[0].accept_rates}
    diag = None
    if cfg.compute_diagnostics:
        diag = {name: _split_rhat(np.concatenate([getattr(p, name) for p in parts]))
                for name in ("beta0", "beta1", "sigma")}
    return PosteriorDraws(beta0, beta1, sigma, w, rates, diagnostics=diag)


def dump_draws(draws: PosteriorDraws, path) -> None:
    """Columnar text dump, one row per retained iteration."""
    cols = [draws.beta0, draws.beta1, draws.sigma]
    header = "beta0 beta1 sigma " + " ".join(f"w{j}" for j in range(draws.w.shape[1]))
    mat = np.column_stack(cols + [draws.w])
    np.savetxt(path, mat, header=header, comments="")
