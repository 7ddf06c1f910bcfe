"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 power target unreachable in the allowed cluster-count range.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .config import ConfigError, load_config, parse_config
from .engine import TargetUnreachableError
from .numerics import NumericError
from . import study

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_UNREACHABLE = 4


def _load(config_path, seed, workers, m, c0, icc):
    overrides = {"master_seed": seed, "workers": workers, "m": m, "c0": c0,
                 "icc_setting": icc}
    if config_path is None:
        return parse_config({}, overrides)
    return load_config(config_path, overrides)


def _run(fn):
    """Run fn, mapping domain errors to the documented exit codes."""
    try:
        return fn()
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except NumericError as e:
        click.echo(f"numerical failure: {e}", err=True)
        sys.exit(EXIT_NUMERIC)
    except TargetUnreachableError as e:
        click.echo(f"target unreachable: {e}", err=True)
        sys.exit(EXIT_UNREACHABLE)


def common_options(f):
    f = click.option("--config", "config_path", type=click.Path(), default=None,
                     help="YAML/JSON design configuration.")(f)
    f = click.option("--seed", type=int, default=None,
                     help="Master seed (overrides config).")(f)
    f = click.option("--workers", type=int, default=None,
                     help="Worker processes for simulation repetitions.")(f)
    f = click.option("--out-dir", type=click.Path(), default="out",
                     help="Directory for output artifacts.")(f)
    f = click.option("--m", type=int, default=None,
                     help="Simulation repetitions per sampling distribution.")(f)
    f = click.option("--c0", type=int, default=None,
                     help="Initial cluster count.")(f)
    f = click.option("--icc", type=str, default=None,
                     help="ICC setting name (e.g. low/moderate/high).")(f)
    return f


@click.group()
def main():
    """Simulation-based sample-size determination for cluster-randomized
    trials with a binary safety endpoint."""


@main.command()
@common_options
def ssd(config_path, seed, workers, out_dir, m, c0, icc):
    """Run the full design procedure and write all artifacts."""

    def go():
        cfg = _load(config_path, seed, workers, m, c0, icc)
        res = study.run_ssd(cfg, out_dir)
        click.echo(f"gamma      = {res['gamma']:.4f}")
        click.echo(f"c0, c1     = {res['c0']}, {res['c1']}")
        click.echo(f"recommended c = {res['c2']} "
                   f"(95% CI [{res['ci_lower']}, {res['ci_upper']}])")
        click.echo(f"predicted power at c = {res['power_at_c2']:.4f}")
        click.echo(f"artifacts in {out_dir}")

    _run(go)


@main.command("oc-curve")
@common_options
@click.option("--result-dir", type=click.Path(), default=None,
              help="Directory holding result.json/taus.csv from a prior run "
                   "(defaults to --out-dir).")
@click.option("--grid", type=str, default=None,
              help="Comma-separated cluster counts, e.g. 80,100,120.")
def oc_curve_cmd(config_path, seed, workers, out_dir, m, c0, icc, result_dir, grid):
    """Recompute OC curves from archived tau samples over a grid."""

    def go():
        cfg = _load(config_path, seed, workers, m, c0, icc)
        src = Path(result_dir) if result_dir else Path(out_dir)
        if not (src / "result.json").exists():
            raise ConfigError(f"no result.json in {src}; run `ssd` first")
        g = None
        if grid:
            try:
                g = [int(x) for x in grid.split(",") if x.strip()]
            except ValueError:
                raise ConfigError(f"--grid: expected comma-separated integers, got {grid!r}")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = study.run_oc_curve_from_artifacts(cfg, src, grid=g,
                                                 out_path=out / "oc_curve.csv")
        click.echo(f"wrote {len(rows)} curve rows to {out / 'oc_curve.csv'}")

    _run(go)


@main.command("proxy-check")
@common_options
def proxy_check(config_path, seed, workers, out_dir, m, c0, icc):
    """Compare numeric logit(tau) slopes to their closed-form limits."""

    def go():
        cfg = _load(config_path, seed, workers, m, c0, icc)
        rows = study.run_proxy_check(cfg)
        click.echo(f"{'scenario':<22}{'u':>5}{'c':>9}{'numeric':>14}"
                   f"{'limit':>14}{'rel_err':>10}")
        for r in rows:
            click.echo(f"{r['scenario']:<22}{r['u']:>5.2f}{r['c']:>9d}"
                       f"{r['numeric_slope']:>14.6g}{r['theorem_slope']:>14.6g}"
                       f"{r['rel_error']:>10.3g}")

    _run(go)


@main.command("calibrate-gamma")
@common_options
def calibrate_gamma_cmd(config_path, seed, workers, out_dir, m, c0, icc):
    """Calibrate the decision threshold on the null scenario at c0."""

    def go():
        cfg = _load(config_path, seed, workers, m, c0, icc)
        res = study.run_calibrate_gamma(cfg, out_dir)
        click.echo(f"gamma = {res['gamma']:.4f} "
                   f"(type I at gamma: {res['type_i_at_gamma']:.4f}, "
                   f"null scenario: {res['null_scenario']}, c0 = {res['c0']})")

    _run(go)


@main.command()
@common_options
@click.option("--result-dir", type=click.Path(), default=None,
              help="Directory holding result.json/taus.csv from a prior run "
                   "(defaults to --out-dir).")
@click.option("--at", type=str, default=None,
              help="Comma-separated cluster counts to validate at "
                   "(default: the recommendation).")
def validate(config_path, seed, workers, out_dir, m, c0, icc, result_dir, at):
    """Direct confirmatory simulation at chosen cluster counts."""

    def go():
        cfg = _load(config_path, seed, workers, m, c0, icc)
        src = Path(result_dir) if result_dir else Path(out_dir)
        if not (src / "result.json").exists():
            raise ConfigError(f"no result.json in {src}; run `ssd` first")
        counts = None
        if at:
            try:
                counts = [int(x) for x in at.split(",") if x.strip()]
            except ValueError:
                raise ConfigError(f"--at: expected comma-separated integers, got {at!r}")
        rows = study.run_validate(cfg, src, at=counts, out_path=out_dir)
        click.echo(f"{'scenario':<22}{'c':>6}{'alg1':>10}{'direct':>10}{'gap':>10}")
        for r in rows:
            click.echo(f"{r['scenario']:<22}{r['c']:>6d}{r['alg1']:>10.4f}"
                       f"{r['direct']:>10.4f}{r['gap']:>10.4f}")

    _run(go)


if __name__ == "__main__":
    main()
