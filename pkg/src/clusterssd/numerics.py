"""Core statistical primitives: model parameters, marginal estimand, quadrature.

Everything here is a pure function of its inputs. The marginal adverse-event
rate for one arm integrates the inverse-logit link over the normal law of the
cluster random intercepts; with a known normal mixing distribution we use
Gauss-Hermite quadrature rather than Monte Carlo.

The intraclass correlation is defined on the latent logistic scale, with
residual variance pi^2/3:  ICC = sigma^2 / (sigma^2 + pi^2/3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as _expit, logit as _logit

LOGISTIC_RESIDUAL_VAR = math.pi**2 / 3.0

__all__ = [
    "ModelParams",
    "Hypothesis",
    "QuadratureRule",
    "expit",
    "logit",
    "marginal_mean",
    "estimand_delta",
    "solve_intercept",
    "solve_slope",
    "sigma_from_icc",
    "icc_from_sigma",
]


class NumericError(RuntimeError):
    """A numeric routine failed (bad bracket, singular matrix, ...)."""


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the logistic random-intercept model.

    beta0: log-odds intercept; beta1: log-odds treatment effect;
    sigma: standard deviation (log-odds scale) of the cluster intercepts.
    """

    beta0: float
    beta1: float
    sigma: float

    def __post_init__(self):
        for name in ("beta0", "beta1", "sigma"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma!r}")

    @property
    def icc(self) -> float:
        return icc_from_sigma(self.sigma)


@dataclass(frozen=True)
class Hypothesis:
    """Interval alternative H1: delta in (delta_l, delta_u).

    Endpoints may be -inf / +inf for one-sided tests, but not both.
    """

    delta_l: float
    delta_u: float

    def __post_init__(self):
        if not self.delta_l < self.delta_u:
            raise ValueError(f"need delta_l < delta_u, got ({self.delta_l}, {self.delta_u})")
        if math.isinf(self.delta_l) and math.isinf(self.delta_u):
            raise ValueError("at least one endpoint must be finite")

    def contains(self, x: float) -> bool:
        return self.delta_l < x < self.delta_u


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights for integrating f against the standard normal density.

    sum_k weights[k] * f(nodes[k])  approximates  E[f(Z)], Z ~ N(0,1).
    Built from Gauss-Hermite rules after the change of variables w = sqrt(2) x.
    """

    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if len(nodes) != self.order or len(weights) != self.order:
            raise ValueError("nodes/weights length must equal order")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 under the standard normal weight")

    @classmethod
    def gauss_hermite(cls, order: int = 30) -> "QuadratureRule":
        x, w = np.polynomial.hermite.hermgauss(order)
        return cls(nodes=math.sqrt(2.0) * x, weights=w / math.sqrt(math.pi), order=order)


def expit(x):
    """Numerically stable inverse logit, 1/(1+exp(-x))."""
    return _expit(x)


def logit(p):
    """log(p) - log(1-p)."""
    return _logit(p)


def _check_params(params: ModelParams):
    # dataclass validation already enforces finiteness; re-check for callers
    # that pass duck-typed objects.
    if not (math.isfinite(params.beta0) and math.isfinite(params.beta1) and math.isfinite(params.sigma)):
        raise ValueError("non-finite model parameters")


def marginal_mean(params: ModelParams, arm: int, rule: QuadratureRule) -> float:
    """Marginal event rate for one arm, integrating over the random intercepts.

    Computes E[expit(beta0 + beta1*arm + w)] with w ~ N(0, sigma^2).
    Exact (no quadrature) when sigma == 0.
    """
    _check_params(params)
    if arm not in (0, 1):
        raise ValueError(f"arm must be 0 or 1, got {arm!r}")
    eta0 = params.beta0 + params.beta1 * arm
    if params.sigma == 0.0:
        return float(_expit(eta0))
    vals = _expit(eta0 + params.sigma * rule.nodes)
    return float(np.dot(rule.weights, vals))


def estimand_delta(params: ModelParams, rule: QuadratureRule) -> float:
    """Difference in marginal event rates, treated minus control."""
    return marginal_mean(params, 1, rule) - marginal_mean(params, 0, rule)


def _bracketed_root(f, lo: float, hi: float, xtol: float = 1e-13) -> float:
    from scipy.optimize import brentq

    flo, fhi = f(lo), f(hi)
    if not (math.isfinite(flo) and math.isfinite(fhi)):
        raise NumericError("non-finite objective at bracket endpoints")
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise NumericError(f"root not bracketed on [{lo}, {hi}]")
    return float(brentq(f, lo, hi, xtol=xtol))


def solve_intercept(target_marginal_rate: float, sigma: float, rule: QuadratureRule) -> float:
    """Intercept beta0 whose control-arm marginal rate equals the target.

    The marginal mean is strictly increasing in beta0, so a bracketing root
    finder converges; result accurate to ~1e-10 on the rate scale.
    """
    if not 0.0 < target_marginal_rate < 1.0:
        raise ValueError(f"target rate must be in (0,1), got {target_marginal_rate!r}")
    if not math.isfinite(sigma) or sigma < 0:
        raise ValueError(f"sigma must be finite and >= 0, got {sigma!r}")
    center = float(_logit(target_marginal_rate))
    if sigma == 0.0:
        return center
    lo = center - 6.0 * sigma - 1.0
    hi = center + 1.0

    def f(b0):
        return marginal_mean(ModelParams(b0, 0.0, sigma), 0, rule) - target_marginal_rate

    return _bracketed_root(f, lo, hi)


def solve_slope(beta0: float, target_treated_rate: float, sigma: float, rule: QuadratureRule) -> float:
    """Slope beta1 whose treated-arm marginal rate equals the target, given beta0."""
    if not 0.0 < target_treated_rate < 1.0:
        raise ValueError(f"target rate must be in (0,1), got {target_treated_rate!r}")
    center = float(_logit(target_treated_rate)) - beta0
    lo = center - 6.0 * sigma - 1.0
    hi = center + 6.0 * sigma + 1.0

    def f(b1):
        return marginal_mean(ModelParams(beta0, b1, sigma), 1, rule) - target_treated_rate

    return _bracketed_root(f, lo, hi)


def sigma_from_icc(icc: float) -> float:
    """Random-intercept standard deviation for a latent-scale ICC."""
    if not 0.0 <= icc < 1.0:
        raise ValueError(f"icc must be in [0,1), got {icc!r}")
    return math.sqrt(icc / (1.0 - icc) * LOGISTIC_RESIDUAL_VAR)


def icc_from_sigma(sigma: float) -> float:
    """Latent-scale ICC implied by the random-intercept standard deviation."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma!r}")
    v = sigma * sigma
    return v / (v + LOGISTIC_RESIDUAL_VAR)
