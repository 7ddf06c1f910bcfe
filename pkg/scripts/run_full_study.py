#!/usr/bin/env python3
"""Run the design study for all three ICC settings and render figures.

Writes one artifact directory per setting under --out-root, then (if the
figure package is installed) one multi-panel OC figure per setting.
"""

import argparse
import sys
from pathlib import Path

from clusterssd.config import load_config, parse_config
from clusterssd.study import run_ssd


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=None, help="base YAML config")
    ap.add_argument("--out-root", default="out/full", help="artifact root")
    ap.add_argument("--m", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--settings", nargs="+", default=["low", "moderate", "high"])
    args = ap.parse_args()

    root = Path(args.out_root)
    for setting in args.settings:
        overrides = {"icc_setting": setting, "m": args.m,
                     "master_seed": args.seed, "workers": args.workers}
        cfg = (load_config(args.config, overrides) if args.config
               else parse_config({}, overrides))
        out = root / setting
        print(f"== {setting} (icc={cfg.icc_value}) -> {out}")
        res = run_ssd(cfg, out)
        print(f"   gamma={res['gamma']:.3f} c1={res['c1']} "
              f"c={res['c2']} CI=[{res['ci_lower']}, {res['ci_upper']}]")
        try:
            from clusterssd_figures.plot_oc import render_oc_figure
        except ImportError:
            continue
        render_oc_figure(out / "oc_curve.csv", out / "oc_figure.png",
                         title=f"operating characteristics ({setting} ICC)")
        print(f"   figure: {out / 'oc_figure.png'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
