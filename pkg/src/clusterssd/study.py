"""Study orchestration: the end-to-end design procedure and its companions.

run_ssd executes the full two-cluster-count procedure for one ICC setting:
calibrate the threshold on the null scenario at c0, estimate the power
scenario at c0 and c1, join order-statistic logits with lines, scan for the
smallest qualifying cluster count, bootstrap the recommendation, and write the
OC curves for every configured scenario. run_validate re-simulates at chosen
cluster counts to confirm the extrapolated estimates.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from . import artifacts
from .config import DesignConfig
from .datagen import PsiModel, build_theta_for_scenario
from .engine import (
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
from .numerics import QuadratureRule, estimand_delta
from .proxy import estimate_lambda, mle_draw, proxy_tau_logit, theorem1_slope
from .streams import phase_tag, substream

__all__ = ["run_ssd", "run_validate", "run_proxy_check", "run_calibrate_gamma",
           "run_oc_curve_from_artifacts"]


def _scenario_psis(cfg: DesignConfig, rule: QuadratureRule) -> dict:
    """Degenerate scenario models for every scenario named in the config."""
    names = {cfg.power_scenario, cfg.null_scenario, *cfg.sensitivity_scenarios}
    psis = {}
    for name in sorted(names):
        theta = build_theta_for_scenario(
            cfg.scenarios.reference_rate, cfg.scenarios.treatment_rates[name],
            cfg.icc_value, rule)
        psis[name] = PsiModel(label=name, theta=theta)
    return psis


def _sample(cfg: DesignConfig, psi: PsiModel, c: int) -> TauSample:
    return simulate_tau_sample(
        psi, cfg.zeta, c, cfg.m, cfg.priors, cfg.mcmc, cfg.hypothesis, cfg.gcomp,
        cfg.master_seed, workers=cfg.workers)


def run_calibrate_gamma(cfg: DesignConfig, out_dir=None) -> dict:
    """Lines 2-3 only: null sample at c0, threshold calibration."""
    rule = QuadratureRule.gauss_hermite(cfg.gcomp.quad_order)
    psis = _scenario_psis(cfg, rule)
    null_sample = _sample(cfg, psis[cfg.null_scenario], cfg.c0)
    gamma = calibrate_gamma(null_sample, cfg.alpha, cfg.gamma_grid_step)
    out = {"gamma": gamma, "c0": cfg.c0,
           "type_i_at_gamma": estimate_oc(null_sample, gamma),
           "null_scenario": cfg.null_scenario}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        artifacts.write_tau_csv(out_dir / "taus.csv", [null_sample])
        artifacts.write_result_json(out_dir / "gamma.json",
                                    {**out, "config": cfg.raw,
                                     "master_seed": cfg.master_seed})
        artifacts.write_manifest(out_dir, cfg.config_hash(), cfg.master_seed, {},
                                 ["taus.csv", "gamma.json"])
    return out


def run_ssd(cfg: DesignConfig, out_dir) -> dict:
    """Full procedure for one ICC setting; writes all four artifact files.

    Returns the result payload (also written to result.json).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rule = QuadratureRule.gauss_hermite(cfg.gcomp.quad_order)
    psis = _scenario_psis(cfg, rule)
    timings = {}
    samples = {}  # (scenario, c) -> TauSample

    def timed(key, fn):
        t0 = time.perf_counter()
        out = fn()
        timings[key] = round(time.perf_counter() - t0, 3)
        return out

    # Line 2: null sampling distribution at c0
    null_c0 = timed("null_c0",
                    lambda: _sample(cfg, psis[cfg.null_scenario], cfg.c0))
    samples[(cfg.null_scenario, cfg.c0)] = null_c0

    # Line 3: threshold calibration (or the configured fixed threshold)
    if cfg.gamma is not None:
        gamma = cfg.gamma
    else:
        gamma = timed("calibrate_gamma",
                      lambda: calibrate_gamma(null_c0, cfg.alpha, cfg.gamma_grid_step))

    # Line 4: power scenario at c0
    power_c0 = timed("power_c0",
                     lambda: _sample(cfg, psis[cfg.power_scenario], cfg.c0))
    samples[(cfg.power_scenario, cfg.c0)] = power_c0
    power_at_c0 = estimate_oc(power_c0, gamma)

    # Line 5: second cluster count
    if cfg.c1 is not None:
        c1 = cfg.c1
    else:
        lam = timed("lambda", lambda: estimate_lambda(
            psis[cfg.power_scenario].theta, cfg.zeta, 10_000,
            substream(cfg.master_seed, phase_tag("lambda"), 0), rule))
        c1 = timed("choose_c1", lambda: choose_c1(
            power_c0, gamma, cfg.beta, lam, cfg.hypothesis,
            c_min=cfg.c_min, cap_mult=cfg.c_max_mult))

    # Line 6: remaining sampling distributions at c0 and c1
    curve_scenarios = [cfg.power_scenario] + [s for s in cfg.sensitivity_scenarios
                                              if s != cfg.power_scenario]
    for name in curve_scenarios:
        if (name, cfg.c0) not in samples:
            samples[(name, cfg.c0)] = timed(
                f"{name}_c0", lambda n=name: _sample(cfg, psis[n], cfg.c0))
        samples[(name, c1)] = timed(
            f"{name}_c1", lambda n=name: _sample(cfg, psis[n], c1))

    # Lines 7-9: order-statistic line families per scenario
    lines = {name: fit_logit_lines(samples[(name, cfg.c0)], samples[(name, c1)],
                                   cfg.subgroups)
             for name in curve_scenarios}

    # Line 11: smallest qualifying cluster count (may raise TargetUnreachable)
    c2 = timed("find_min_clusters", lambda: find_min_clusters(
        lines[cfg.power_scenario], gamma, cfg.beta, cfg.c_min, cfg.c_max))
    power_at_c2 = predict_power(lines[cfg.power_scenario], c2, gamma)

    # bootstrap interval for the recommendation
    ci_lo, ci_hi, _ = timed("bootstrap", lambda: bootstrap_recommendation(
        samples[(cfg.power_scenario, cfg.c0)], samples[(cfg.power_scenario, c1)],
        gamma, cfg.beta, cfg.bootstrap_m, cfg.bootstrap_level,
        substream(cfg.master_seed, phase_tag("bootstrap"), 0),
        c_min=cfg.c_min, c_max=cfg.c_max, subgroups=cfg.subgroups))
    ci_lo = min(ci_lo, c2)
    ci_hi = max(ci_hi, c2)

    # OC curves with pointwise bootstrap bands, one per scenario
    curve_rows = []
    curves = {}
    for name in curve_scenarios:
        pts = timed(f"curve_{name}", lambda n=name: oc_curve(
            lines[n], gamma, cfg.curve_grid, samples[(n, cfg.c0)],
            samples[(n, c1)], cfg.bootstrap_m,
            substream(cfg.master_seed, phase_tag(f"curve:{n}"), 0),
            level=cfg.bootstrap_level, subgroups=cfg.subgroups))
        curves[name] = pts
        curve_rows.extend((name, c, est, lo, hi, "alg1") for c, est, lo, hi in pts)

    result = {
        "gamma": gamma,
        "c0": cfg.c0,
        "c1": c1,
        "c2": c2,
        "power_at_c0": power_at_c0,
        "power_at_c2": power_at_c2,
        "ci_lower": ci_lo,
        "ci_upper": ci_hi,
        "icc_setting": cfg.icc_setting,
        "icc_value": cfg.icc_value,
        "gcomp_method": cfg.gcomp.method,
        "power_scenario": cfg.power_scenario,
        "null_scenario": cfg.null_scenario,
        "predicted_oc_at_c2": {name: predict_power(lines[name], c2, gamma)
                               for name in curve_scenarios},
        "oc_curve": {name: [list(p) for p in pts] for name, pts in curves.items()},
        "scenario_deltas": {name: estimand_delta(psis[name].theta, rule)
                            for name in psis},
        "master_seed": cfg.master_seed,
        "config": cfg.raw,
    }

    artifacts.write_tau_csv(out_dir / "taus.csv", list(samples.values()))
    artifacts.write_curve_csv(out_dir / "oc_curve.csv", curve_rows)
    artifacts.write_result_json(out_dir / "result.json", result)
    artifacts.write_manifest(out_dir, cfg.config_hash(), cfg.master_seed, timings,
                             ["taus.csv", "oc_curve.csv", "result.json"])
    return result


def run_validate(cfg: DesignConfig, result_dir, at: list | None = None,
                 out_path=None) -> list:
    """Direct confirmatory simulation vs the extrapolated estimates.

    For each archived scenario and each requested cluster count (default: the
    recommended c2), simulates a fresh tau sample and tabulates the direct OC
    estimate next to the line-family prediction.
    """
    result_dir = Path(result_dir)
    result = artifacts.read_result_json(result_dir / "result.json")
    archived = artifacts.read_tau_csv(result_dir / "taus.csv",
                                      master_seed=result["master_seed"])
    gamma = result["gamma"]
    c0, c1 = result["c0"], result["c1"]
    if at is None or len(at) == 0:
        at = [result["c2"]]
    rule = QuadratureRule.gauss_hermite(cfg.gcomp.quad_order)
    psis = _scenario_psis(cfg, rule)

    scenarios = [n for n in ("clearly_acceptable", "acceptable", "barely_acceptable",
                             "unacceptable")
                 if (n, c0) in archived and (n, c1) in archived]
    rows = []
    curve_rows = []
    for name in scenarios:
        lines = fit_logit_lines(archived[(name, c0)], archived[(name, c1)],
                                cfg.subgroups)
        for c in at:
            direct = _sample(cfg, psis[name], int(c))
            d_est = estimate_oc(direct, gamma)
            a_est = predict_power(lines, int(c), gamma)
            rows.append({"scenario": name, "c": int(c), "alg1": a_est,
                         "direct": d_est, "gap": abs(a_est - d_est)})
            curve_rows.append((name, int(c), d_est, None, None, "direct"))
    if out_path is not None:
        out_path = Path(out_path)
        out_path.mkdir(parents=True, exist_ok=True)
        import csv as _csv
        import io as _io

        buf = _io.StringIO()
        buf.write(f"# {artifacts.SCHEMA_VERSION} validation\n")
        w = _csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "c", "alg1_estimate", "direct_estimate", "abs_gap"])
        for r in rows:
            w.writerow([r["scenario"], r["c"], repr(r["alg1"]), repr(r["direct"]),
                        repr(r["gap"])])
        artifacts.atomic_write_text(out_path / "validation.csv", buf.getvalue())
        artifacts.write_curve_csv(out_path / "direct_curve.csv", curve_rows)
    return rows


def run_proxy_check(cfg: DesignConfig, c_values=(10**3, 10**4, 10**5),
                    u_values=(0.1, 0.5, 0.9)) -> list:
    """Numeric vs closed-form limiting slope of logit(tau) in c.

    Emits one row per (scenario theta, u, c): the centered-difference slope of
    the proxy logit, the closed-form limiting slope, and their relative error
    (absolute error where the limit is zero).
    """
    rule = QuadratureRule.gauss_hermite(cfg.gcomp.quad_order)
    psis = _scenario_psis(cfg, rule)
    hyp = cfg.hypothesis
    rows = []
    for name, psi in psis.items():
        lam = estimate_lambda(psi.theta, cfg.zeta, 10_000,
                              substream(cfg.master_seed, phase_tag(f"pc:{name}"), 0),
                              rule).lam
        delta_r = estimand_delta(psi.theta, rule)
        limit = theorem1_slope(delta_r, lam, hyp)
        for u in u_values:
            for c in c_values:
                h = max(1.0, c / 100.0)

                def lt(cc):
                    dhat = mle_draw(delta_r, lam, cc, u)
                    return proxy_tau_logit(dhat, lam, cc, hyp)

                num = (lt(c + h) - lt(c - h)) / (2.0 * h)
                if limit == 0.0:
                    err = abs(num)
                else:
                    err = abs(num - limit) / abs(limit)
                rows.append({"scenario": name, "delta_r": delta_r, "u": u, "c": c,
                             "numeric_slope": num, "theorem_slope": limit,
                             "rel_error": err})
    return rows


def run_oc_curve_from_artifacts(cfg: DesignConfig, result_dir, grid=None,
                                out_path=None) -> list:
    """Recompute OC curves over a (possibly new) grid from archived samples."""
    result_dir = Path(result_dir)
    result = artifacts.read_result_json(result_dir / "result.json")
    archived = artifacts.read_tau_csv(result_dir / "taus.csv",
                                      master_seed=result["master_seed"])
    gamma = result["gamma"]
    c0, c1 = result["c0"], result["c1"]
    grid = list(grid) if grid else list(cfg.curve_grid)
    rows = []
    for (name, c), _s in sorted(archived.items()):
        if c != c0 or (name, c1) not in archived:
            continue
        lines = fit_logit_lines(archived[(name, c0)], archived[(name, c1)],
                                cfg.subgroups)
        pts = oc_curve(lines, gamma, grid, archived[(name, c0)], archived[(name, c1)],
                       cfg.bootstrap_m,
                       substream(cfg.master_seed, phase_tag(f"curve:{name}"), 0),
                       level=cfg.bootstrap_level, subgroups=cfg.subgroups)
        rows.extend((name, c_, est, lo, hi, "alg1") for c_, est, lo, hi in pts)
    if out_path is not None:
        artifacts.write_curve_csv(out_path, rows)
    return rows
