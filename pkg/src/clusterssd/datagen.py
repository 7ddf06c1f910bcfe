"""Trial data generation: cluster sizes, arm assignment, binary outcomes.

The auxiliary process generates cluster sizes and (with the model parameters)
the cluster random intercepts; treatment is randomized at the cluster level
in permuted blocks of two so each arm gets half the clusters (within one
when the count is odd).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .numerics import (
    ModelParams,
    QuadratureRule,
    expit,
    sigma_from_icc,
    solve_intercept,
    solve_slope,
)

__all__ = [
    "ZetaProcess",
    "PsiModel",
    "TrialData",
    "ScenarioTable",
    "build_theta_for_scenario",
    "simulate_trial",
    "draw_theta",
]


@dataclass(frozen=True)
class ZetaProcess:
    """Cluster-size law. Allocation is always balanced 1:1 at the cluster level.

    law: "fixed" (size n), "shifted_poisson" (1 + Poisson(lam)), or
    "discrete_uniform" (uniform on lo..hi inclusive). Every size is >= 1.
    """

    law: str = "shifted_poisson"
    n: int = 2
    lam: float = 3.0
    lo: int = 1
    hi: int = 4

    def __post_init__(self):
        if self.law not in ("fixed", "shifted_poisson", "discrete_uniform"):
            raise ValueError(f"unknown cluster-size law {self.law!r}")
        if self.law == "fixed" and self.n < 1:
            raise ValueError("fixed cluster size must be >= 1")
        if self.law == "shifted_poisson" and self.lam < 0:
            raise ValueError("poisson rate must be >= 0")
        if self.law == "discrete_uniform" and not 1 <= self.lo <= self.hi:
            raise ValueError("need 1 <= lo <= hi")

    def draw_sizes(self, c: int, rng: np.random.Generator) -> np.ndarray:
        if self.law == "fixed":
            return np.full(c, self.n, dtype=np.int64)
        if self.law == "shifted_poisson":
            return 1 + rng.poisson(self.lam, size=c).astype(np.int64)
        return rng.integers(self.lo, self.hi + 1, size=c).astype(np.int64)

    @property
    def mean_size(self) -> float:
        if self.law == "fixed":
            return float(self.n)
        if self.law == "shifted_poisson":
            return 1.0 + self.lam
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class PsiModel:
    """How the true parameters are drawn each simulation repetition.

    Degenerate models return the stored parameters every time (classical
    power/type I error); sampler models call a user-supplied function of the
    repetition's generator.
    """

    label: str
    theta: Optional[ModelParams] = None
    sampler: Optional[Callable[[np.random.Generator], ModelParams]] = None

    def __post_init__(self):
        if (self.theta is None) == (self.sampler is None):
            raise ValueError("exactly one of theta / sampler must be given")

    @property
    def degenerate(self) -> bool:
        return self.theta is not None


@dataclass(frozen=True)
class TrialData:
    """One simulated trial, clusters stored contiguously.

    y_flat holds all outcomes; cluster j occupies y_flat[offsets[j]:offsets[j+1]].
    """

    cluster_sizes: np.ndarray  # (c,) int, all >= 1
    arms: np.ndarray  # (c,) int8, cluster-level assignment
    y_flat: np.ndarray  # (N,) int8
    offsets: np.ndarray  # (c+1,) int64 prefix sums of cluster_sizes

    def __post_init__(self):
        sizes = np.asarray(self.cluster_sizes, dtype=np.int64)
        arms = np.asarray(self.arms, dtype=np.int8)
        y = np.asarray(self.y_flat, dtype=np.int8)
        off = np.asarray(self.offsets, dtype=np.int64)
        object.__setattr__(self, "cluster_sizes", sizes)
        object.__setattr__(self, "arms", arms)
        object.__setattr__(self, "y_flat", y)
        object.__setattr__(self, "offsets", off)
        c = len(sizes)
        if len(arms) != c or len(off) != c + 1:
            raise ValueError("inconsistent lengths")
        if c > 0 and sizes.min() < 1:
            raise ValueError("all cluster sizes must be >= 1")
        if not np.array_equal(off, np.concatenate([[0], np.cumsum(sizes)])):
            raise ValueError("offsets must be prefix sums of cluster_sizes")
        if len(y) != off[-1]:
            raise ValueError("y_flat length must equal total size")
        if c > 0 and abs(int(arms.sum()) - (c - int(arms.sum()))) > 1:
            raise ValueError("arm allocation must be balanced within one cluster")

    @property
    def c(self) -> int:
        return len(self.cluster_sizes)

    @property
    def n_total(self) -> int:
        return int(self.offsets[-1])

    @property
    def outcomes(self) -> list:
        """Per-cluster outcome arrays (ragged view)."""
        return [self.y_flat[self.offsets[j]:self.offsets[j + 1]] for j in range(self.c)]

    @classmethod
    def empty(cls) -> "TrialData":
        return cls(
            cluster_sizes=np.zeros(0, dtype=np.int64),
            arms=np.zeros(0, dtype=np.int8),
            y_flat=np.zeros(0, dtype=np.int8),
            offsets=np.zeros(1, dtype=np.int64),
        )


@dataclass(frozen=True)
class ScenarioTable:
    """Marginal AE rates: one reference arm, four experimental settings."""

    reference_rate: float = 0.02
    clearly_acceptable: float = 0.02
    acceptable: float = 0.03
    barely_acceptable: float = 0.05
    unacceptable: float = 0.06

    def __post_init__(self):
        for name in ("reference_rate", "clearly_acceptable", "acceptable",
                     "barely_acceptable", "unacceptable"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0,1), got {v!r}")

    @property
    def treatment_rates(self) -> dict:
        return {
            "clearly_acceptable": self.clearly_acceptable,
            "acceptable": self.acceptable,
            "barely_acceptable": self.barely_acceptable,
            "unacceptable": self.unacceptable,
        }


def build_theta_for_scenario(control_rate: float, treated_rate: float, icc: float,
                             rule: QuadratureRule) -> ModelParams:
    """Parameters hitting the given marginal rates at the given latent ICC.

    beta0 and beta1 are solved by root finding so the marginal estimand equals
    treated_rate - control_rate to root-finder tolerance.
    """
    sigma = sigma_from_icc(icc)
    beta0 = solve_intercept(control_rate, sigma, rule)
    if treated_rate == control_rate:
        beta1 = 0.0
    else:
        beta1 = solve_slope(beta0, treated_rate, sigma, rule)
    return ModelParams(beta0, beta1, sigma)


def simulate_trial(params: ModelParams, zeta: ZetaProcess, c: int,
                   rng: np.random.Generator) -> TrialData:
    """Simulate one trial with c clusters.

    Cluster sizes from zeta, permuted-block (size 2) arm randomization, one
    random intercept per cluster, Bernoulli outcomes through the logistic
    link. Deterministic given the generator state.

    Cluster j draws its size, intercept noise, outcome uniforms, and
    randomization coin from the j-th child stream spawned off the generator,
    so two trials built from the same generator share cluster-level
    realizations wherever they overlap — common random numbers across cluster
    counts and across parameter settings that differ only in
    (beta0, beta1, sigma). The intercept is stored as sigma times a
    standard-normal draw so the draw itself is shared across sigma values
    (including sigma = 0). Arms come from permuted blocks of two consecutive
    clusters (each block flips one coin; an odd trailing cluster flips its
    own), which keeps the allocation balanced within one cluster while making
    the assignment of overlapping clusters identical across cluster counts.
    """
    if c < 2:
        raise ValueError(f"need at least 2 clusters, got {c}")
    sizes = np.empty(c, dtype=np.int64)
    z = np.empty(c)
    coin = np.empty(c)
    u_parts = []
    for j, g in enumerate(rng.spawn(c)):
        sizes[j] = zeta.draw_sizes(1, g)[0]
        z[j] = g.standard_normal()
        u_parts.append(g.random(int(sizes[j])))
        coin[j] = g.random()
    arms = np.empty(c, dtype=np.int8)
    first = (coin[0:c - 1:2] < 0.5).astype(np.int8)
    arms[0:c - 1:2] = first
    arms[1:c:2] = 1 - first
    if c % 2 == 1:
        arms[c - 1] = coin[c - 1] < 0.5
    w = params.sigma * z
    p_cluster = expit(params.beta0 + params.beta1 * arms.astype(float) + w)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    u = np.concatenate(u_parts)
    y = (u < np.repeat(p_cluster, sizes)).astype(np.int8)
    return TrialData(cluster_sizes=sizes, arms=arms, y_flat=y, offsets=offsets)


def draw_theta(psi: PsiModel, rng: np.random.Generator) -> ModelParams:
    """One parameter draw from the scenario model."""
    if psi.degenerate:
        return psi.theta
    return psi.sampler(rng)
