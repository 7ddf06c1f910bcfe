"""Render operating-characteristic figures from frozen curve CSV artifacts.

One panel per scenario: solid curve for the line-extrapolated estimates,
dashed pointwise bootstrap bands, overlaid markers for any direct-simulation
rows, and horizontal reference lines at the power target and the type-I
bound. Strictly read-only over the artifacts; no statistic is recomputed.
"""

from __future__ import annotations

import csv
import math
import sys
from pathlib import Path

import click

SCHEMA_HEADER = "# clusterssd-v1 curve"
COLUMNS = ["scenario", "c", "estimate", "band_lo", "band_hi", "source"]

SCENARIO_ORDER = ["clearly_acceptable", "acceptable", "barely_acceptable",
                  "unacceptable"]
SCENARIO_TITLES = {
    "clearly_acceptable": "Clearly acceptable",
    "acceptable": "Acceptable",
    "barely_acceptable": "Barely acceptable",
    "unacceptable": "Unacceptable",
}


class CurveSchemaError(ValueError):
    """Input file does not match the frozen curve schema."""


def read_curve_csv(path):
    """Parse a curve CSV; raises CurveSchemaError naming the offending line."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(SCHEMA_HEADER):
        raise CurveSchemaError(f"{path}: missing schema header {SCHEMA_HEADER!r}")
    rows = list(csv.reader(lines[1:]))
    if not rows or rows[0] != COLUMNS:
        raise CurveSchemaError(f"{path}: unexpected columns at line 2: "
                               f"{rows[0] if rows else None}")
    out = []
    for i, row in enumerate(rows[1:], start=3):
        if not row:
            continue
        if len(row) != len(COLUMNS):
            raise CurveSchemaError(f"{path}: bad row at line {i}")
        scenario, c, est, lo, hi, source = row
        if source not in ("alg1", "direct"):
            raise CurveSchemaError(f"{path}: bad source {source!r} at line {i}")
        try:
            rec = {
                "scenario": scenario,
                "c": int(c),
                "estimate": float(est),
                "band_lo": None if lo == "" else float(lo),
                "band_hi": None if hi == "" else float(hi),
                "source": source,
            }
        except ValueError:
            raise CurveSchemaError(f"{path}: non-numeric value at line {i}")
        if not 0.0 <= rec["estimate"] <= 1.0:
            raise CurveSchemaError(f"{path}: estimate outside [0,1] at line {i}")
        if (rec["source"] == "alg1" and rec["band_lo"] is not None
                and rec["band_hi"] is not None
                and not rec["band_lo"] <= rec["estimate"] <= rec["band_hi"]):
            raise CurveSchemaError(f"{path}: band does not contain estimate "
                                   f"at line {i}")
        out.append(rec)
    return out


def render_oc_figure(curve_csv, out_image, title=None, power_target=0.8,
                     alpha=0.025):
    """Render the multi-panel figure; returns the figure object."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_curve_csv(curve_csv)
    scenarios = [s for s in SCENARIO_ORDER
                 if any(r["scenario"] == s for r in rows)]
    scenarios += sorted({r["scenario"] for r in rows} - set(scenarios))
    if not scenarios:
        raise CurveSchemaError(f"{curve_csv}: no data rows")

    n = len(scenarios)
    ncols = 2 if n > 1 else 1
    nrows = math.ceil(n / ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(5.0 * ncols, 3.6 * nrows),
                             squeeze=False, sharey=True)
    for ax in axes.flat[n:]:
        ax.set_visible(False)

    for ax, scenario in zip(axes.flat, scenarios):
        sub = [r for r in rows if r["scenario"] == scenario]
        alg = sorted((r for r in sub if r["source"] == "alg1"),
                     key=lambda r: r["c"])
        direct = sorted((r for r in sub if r["source"] == "direct"),
                        key=lambda r: r["c"])
        if alg:
            cs = [r["c"] for r in alg]
            ax.plot(cs, [r["estimate"] for r in alg], color="black", lw=1.6,
                    label="extrapolated")
            if all(r["band_lo"] is not None and r["band_hi"] is not None
                   for r in alg):
                ax.plot(cs, [r["band_lo"] for r in alg], color="black",
                        lw=1.0, ls="--", label="95% band")
                ax.plot(cs, [r["band_hi"] for r in alg], color="black",
                        lw=1.0, ls="--")
        if direct:
            ax.plot([r["c"] for r in direct], [r["estimate"] for r in direct],
                    ls="none", marker="o", ms=5, mfc="white", mec="firebrick",
                    label="direct simulation")
        ax.axhline(power_target, color="steelblue", lw=0.8, ls=":",
                   label=f"power target {power_target:g}")
        ax.axhline(alpha, color="darkorange", lw=0.8, ls=":",
                   label=f"type I bound {alpha:g}")
        ax.set_title(SCENARIO_TITLES.get(scenario, scenario))
        ax.set_xlabel("number of clusters")
        ax.set_ylim(-0.02, 1.02)
    for ax in axes[:, 0]:
        ax.set_ylabel("probability of concluding H1")
    handles, labels = axes.flat[0].get_legend_handles_labels()
    fig.legend(handles, labels, loc="lower center", ncol=len(labels),
               frameon=False, fontsize=9)
    if title:
        fig.suptitle(title)
    fig.tight_layout(rect=(0, 0.06, 1, 0.97 if title else 1.0))
    fig.savefig(out_image, dpi=150)
    plt.close(fig)
    return out_image


@click.command()
@click.option("--input", "input_csv", type=click.Path(exists=True), required=True,
              help="Curve CSV produced by the design engine.")
@click.option("--out", "out_image", type=click.Path(), required=True,
              help="Output image path (.png or .svg).")
@click.option("--title", default=None, help="Figure title.")
@click.option("--power-target", type=float, default=0.8, show_default=True,
              help="Horizontal reference line for the power target.")
@click.option("--alpha", type=float, default=0.025, show_default=True,
              help="Horizontal reference line for the type-I bound.")
def main(input_csv, out_image, title, power_target, alpha):
    """Render a multi-panel operating-characteristic figure."""
    try:
        render_oc_figure(input_csv, out_image, title=title,
                         power_target=power_target, alpha=alpha)
    except CurveSchemaError as e:
        click.echo(f"schema error: {e}", err=True)
        sys.exit(2)
    click.echo(f"wrote {out_image}")


if __name__ == "__main__":
    main()
