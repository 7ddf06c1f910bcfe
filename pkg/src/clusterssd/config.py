"""Design configuration: parsing, validation, defaults.

Configs are YAML (nested key-value; JSON is valid YAML and accepted as-is).
The raw mapping is kept alongside the parsed dataclasses and echoed verbatim
into every output artifact.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .datagen import ScenarioTable, ZetaProcess
from .engine import GcompConfig
from .inference import McmcConfig, PriorSpec
from .numerics import Hypothesis

__all__ = ["ConfigError", "DesignConfig", "load_config"]

SCENARIO_NAMES = ("clearly_acceptable", "acceptable", "barely_acceptable", "unacceptable")

DEFAULT_ICC = {"low": 0.01, "moderate": 0.05, "high": 0.10}
DEFAULT_CURVE_GRID = [80, 90, 100, 110, 120, 130, 140, 150, 160]


class ConfigError(ValueError):
    """Invalid configuration; message names the offending key."""


def _get(d: dict, key: str, default):
    v = d.get(key, default)
    return default if v is None else v


def _float(d, key, default, lo=None, hi=None, open_lo=False, open_hi=False):
    v = _get(d, key, default)
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {d.get(key)!r}")
    if lo is not None and (v < lo or (open_lo and v == lo)):
        raise ConfigError(f"{key}: must be {'>' if open_lo else '>='} {lo}, got {v}")
    if hi is not None and (v > hi or (open_hi and v == hi)):
        raise ConfigError(f"{key}: must be {'<' if open_hi else '<='} {hi}, got {v}")
    return v


def _int(d, key, default, lo=None):
    v = _get(d, key, default)
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigError(f"{key}: expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{key}: must be >= {lo}, got {v}")
    return v


@dataclass(frozen=True)
class DesignConfig:
    """Everything one design study needs, echoed verbatim into outputs."""

    raw: dict
    scenarios: ScenarioTable
    icc: dict
    icc_setting: str
    zeta: ZetaProcess
    hypothesis: Hypothesis
    alpha: float
    beta: float
    m: int
    c0: int
    c1: int | None
    gamma: float | None
    gamma_grid_step: float
    power_scenario: str
    null_scenario: str
    sensitivity_scenarios: tuple
    mcmc: McmcConfig
    priors: PriorSpec
    gcomp: GcompConfig
    bootstrap_m: int
    bootstrap_level: float
    curve_grid: tuple
    c_min: int
    c_max_mult: int
    subgroups: int
    master_seed: int
    workers: int

    @property
    def icc_value(self) -> float:
        return self.icc[self.icc_setting]

    @property
    def c_max(self) -> int:
        return self.c_max_mult * self.c0

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True, default=str).encode()).hexdigest()


def parse_config(raw: dict, overrides: dict | None = None) -> DesignConfig:
    """Build a validated DesignConfig from a raw mapping.

    overrides (CLI flags) are applied on top of the file values and become
    part of the echoed config.
    """
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a mapping")
    raw = dict(raw)
    if overrides:
        for k, v in overrides.items():
            if v is not None:
                raw[k] = v
    workers = _int(raw, "workers", 1, lo=1)
    # workers affects scheduling only, never results; keep it out of the
    # echoed config so artifacts are identical for any worker count
    raw.pop("workers", None)

    sc = _get(raw, "scenarios", {})
    if not isinstance(sc, dict):
        raise ConfigError("scenarios: expected a mapping")
    try:
        scenarios = ScenarioTable(
            reference_rate=_float(sc, "reference_rate", 0.02, 0, 1, True, True),
            clearly_acceptable=_float(sc, "clearly_acceptable", 0.02, 0, 1, True, True),
            acceptable=_float(sc, "acceptable", 0.03, 0, 1, True, True),
            barely_acceptable=_float(sc, "barely_acceptable", 0.05, 0, 1, True, True),
            unacceptable=_float(sc, "unacceptable", 0.06, 0, 1, True, True),
        )
    except ValueError as e:
        raise ConfigError(f"scenarios: {e}")

    icc = _get(raw, "icc", dict(DEFAULT_ICC))
    if not isinstance(icc, dict) or not icc:
        raise ConfigError("icc: expected a non-empty mapping of setting name -> value")
    icc = {str(k): float(v) for k, v in icc.items()}
    for k, v in icc.items():
        if not 0.0 <= v < 1.0:
            raise ConfigError(f"icc.{k}: must be in [0,1), got {v}")
    icc_setting = str(_get(raw, "icc_setting", next(iter(icc))))
    if icc_setting not in icc:
        raise ConfigError(f"icc_setting: {icc_setting!r} not among {sorted(icc)}")

    z = _get(raw, "zeta", {})
    if not isinstance(z, dict):
        raise ConfigError("zeta: expected a mapping")
    try:
        zeta = ZetaProcess(
            law=str(_get(z, "law", "shifted_poisson")),
            n=int(_get(z, "n", 2)),
            lam=float(_get(z, "lam", 3.0)),
            lo=int(_get(z, "lo", 1)),
            hi=int(_get(z, "hi", 4)),
        )
    except ValueError as e:
        raise ConfigError(f"zeta: {e}")

    h = _get(raw, "hypothesis", {})
    if not isinstance(h, dict):
        raise ConfigError("hypothesis: expected a mapping")

    def _endpoint(key, default):
        v = _get(h, key, default)
        if isinstance(v, str):
            v = v.strip().lower()
            if v in ("-inf", "-infinity"):
                return -math.inf
            if v in ("inf", "+inf", "infinity"):
                return math.inf
            raise ConfigError(f"hypothesis.{key}: bad value {v!r}")
        return float(v)

    try:
        hyp = Hypothesis(_endpoint("delta_l", -math.inf), _endpoint("delta_u", 0.04))
    except ValueError as e:
        raise ConfigError(f"hypothesis: {e}")

    alpha = _float(raw, "alpha", 0.025, 0, 1, True, True)
    beta = _float(raw, "beta", 0.2, 0, 1, True, True)
    m = _int(raw, "m", 10_000, lo=100)
    c0 = _int(raw, "c0", 100, lo=2)
    c1 = raw.get("c1")
    if c1 is not None:
        c1 = _int(raw, "c1", None, lo=2)
        if c1 == c0:
            raise ConfigError("c1: must differ from c0")
    gamma = raw.get("gamma")
    if gamma is not None:
        gamma = _float(raw, "gamma", None, 0, 1, True, True)
    gamma_grid_step = _float(raw, "gamma_grid_step", 0.01, 0, 0.01, True, False)

    power_scenario = str(_get(raw, "power_scenario", "clearly_acceptable"))
    null_scenario = str(_get(raw, "null_scenario", "unacceptable"))
    for key, name in (("power_scenario", power_scenario), ("null_scenario", null_scenario)):
        if name not in SCENARIO_NAMES:
            raise ConfigError(f"{key}: {name!r} not among {SCENARIO_NAMES}")
    sens = _get(raw, "sensitivity_scenarios",
                ["acceptable", "barely_acceptable", "unacceptable"])
    if not isinstance(sens, (list, tuple)):
        raise ConfigError("sensitivity_scenarios: expected a list")
    for name in sens:
        if name not in SCENARIO_NAMES:
            raise ConfigError(f"sensitivity_scenarios: {name!r} not among {SCENARIO_NAMES}")

    mc = _get(raw, "mcmc", {})
    try:
        mcmc = McmcConfig(
            burnin=_int(mc, "burnin", 500, lo=0),
            retained=_int(mc, "retained", 2000, lo=1),
            chains=_int(mc, "chains", 1, lo=1),
            adapt_window=mc.get("adapt_window"),
            target_accept_pair=_float(mc, "target_accept_pair", 0.25, 0, 1, True, True),
            target_accept_scalar=_float(mc, "target_accept_scalar", 0.30, 0, 1, True, True),
            compute_diagnostics=bool(_get(mc, "compute_diagnostics", False)),
        )
    except ValueError as e:
        raise ConfigError(f"mcmc: {e}")

    pr = _get(raw, "priors", {})
    try:
        priors = PriorSpec(
            beta0_mean=_float(pr, "beta0_mean", 0.0),
            beta0_sd=_float(pr, "beta0_sd", 10.0, 0, None, True),
            beta1_mean=_float(pr, "beta1_mean", 0.0),
            beta1_sd=_float(pr, "beta1_sd", 2.5, 0, None, True),
            sigma_scale=_float(pr, "sigma_scale", 1.0, 0, None, True),
        )
    except ValueError as e:
        raise ConfigError(f"priors: {e}")

    gc = _get(raw, "gcomp", {})
    try:
        bw = _get(gc, "bandwidth", "silverman")
        gcomp = GcompConfig(
            method=str(_get(gc, "method", "parametric_quadrature")),
            quad_order=_int(gc, "quad_order", 30, lo=1),
            n_rew=_int(gc, "n_rew", 1, lo=1),
            bandwidth=bw if bw == "silverman" else float(bw),
        )
    except ValueError as e:
        raise ConfigError(f"gcomp: {e}")

    bs = _get(raw, "bootstrap", {})
    bootstrap_m = _int(bs, "M", 10_000, lo=100)
    bootstrap_level = _float(bs, "level", 0.95, 0, 1, True, True)

    grid = _get(raw, "curve_grid", list(DEFAULT_CURVE_GRID))
    if not isinstance(grid, (list, tuple)) or not grid:
        raise ConfigError("curve_grid: expected a non-empty list of integers")
    try:
        curve_grid = tuple(int(c) for c in grid)
    except (TypeError, ValueError):
        raise ConfigError("curve_grid: expected integers")

    se = _get(raw, "search", {})
    c_min = _int(se, "c_min", 10, lo=2)
    c_max_mult = _int(se, "c_max_mult", 10, lo=1)

    subgroups = _int(raw, "subgroups", 1, lo=1)
    master_seed = _int(raw, "master_seed", 20260825, lo=0)

    return DesignConfig(
        raw=raw, scenarios=scenarios, icc=icc, icc_setting=icc_setting, zeta=zeta,
        hypothesis=hyp, alpha=alpha, beta=beta, m=m, c0=c0, c1=c1, gamma=gamma,
        gamma_grid_step=gamma_grid_step, power_scenario=power_scenario,
        null_scenario=null_scenario, sensitivity_scenarios=tuple(sens),
        mcmc=mcmc, priors=priors, gcomp=gcomp, bootstrap_m=bootstrap_m,
        bootstrap_level=bootstrap_level, curve_grid=curve_grid, c_min=c_min,
        c_max_mult=c_max_mult, subgroups=subgroups, master_seed=master_seed,
        workers=workers,
    )


def load_config(path, overrides: dict | None = None) -> DesignConfig:
    """Read a YAML/JSON config file and validate it."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"config parse error: {e}")
    if raw is None:
        raw = {}
    return parse_config(raw, overrides)
