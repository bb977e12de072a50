"""Command line entry point ``abandonq``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from ..diffusion import DiffusionError, StabilityError
from .config import ConfigError, load_config
from .experiment import (EXIT_CONFIG, EXIT_GATE, EXIT_PASS, EXIT_STABILITY,
                         ConvergenceReport, build_diffusion, run_experiment, validate)


def _parser():
    p = argparse.ArgumentParser(prog="abandonq", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate the n-grid and compare with the diffusion")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default=None, help="output directory (default out/<scenario>)")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--waive-a5", action="store_true")
    run.add_argument("--no-plots", action="store_true")

    val = sub.add_parser("validate", help="run the assumption checks only")
    val.add_argument("--config", required=True)
    val.add_argument("--waive-a5", action="store_true")

    dif = sub.add_parser("diffusion", help="print diffusion-only tables")
    dif.add_argument("--config", required=True)
    dif.add_argument("--export", default=None, help="write density/CDF as CSV")

    plot = sub.add_parser("plot", help="render SVG figures from report.json")
    plot.add_argument("--report", required=True)
    plot.add_argument("--out", default=None)
    return p


def _load(args):
    cfg = load_config(args.config)
    if getattr(args, "waive_a5", False):
        cfg.waive.add("a5")
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "plot":
            from .plots import emit_plots
            report = ConvergenceReport.load(args.report)
            out = args.out or os.path.dirname(os.path.abspath(args.report))
            for path in emit_plots(report, out):
                print(path)
            return EXIT_PASS

        cfg = _load(args)
        if args.command == "validate":
            rep = validate(cfg)
            print(json.dumps(rep.checks, indent=2, default=str))
            if not rep.ok:
                print(f"validator failures: {rep.failures}", file=sys.stderr)
                return EXIT_CONFIG
            return EXIT_PASS if rep.checks["a4"]["ok"] else EXIT_STABILITY

        if args.command == "diffusion":
            model, stat = build_diffusion(cfg)
            print(f"sigma2\t{model.sigma2!r}\ndrift\t{model.drift!r}")
            print(f"normalizer\t{stat.normalizer!r}\nx_cut\t{stat.x_cut!r}")
            for m in cfg.moment_orders:
                print(f"moment[{m:g}]\t{stat.moment(m)!r}")
            print(f"E[H(V)]\t{stat.expect_H()!r}")
            for q in (0.1, 0.25, 0.5, 0.75, 0.9, 0.99):
                print(f"quantile[{q:g}]\t{stat.quantile(q)!r}")
            if args.export:
                stat.export_csv(args.export)
            return EXIT_PASS

        out = args.out or os.path.join("out", cfg.scenario)
        report, code = run_experiment(cfg, out_dir=out, threads=args.threads)
        if not args.no_plots:
            from .plots import emit_plots
            emit_plots(report, out)
        for r in report.rows:
            print(f"n={r['n']:>6} m={r['m']:g} sim={r['sim_moment']:.5g}"
                  f"±{r['ci_half']:.2g} diff={r['diff_moment']:.5g} rel={r['rel_err']:.3%} "
                  f"ks={r['ks']:.4f} sqrtn_pa={r['sqrtn_pa']:.4g} eh={r['eh']:.4g}")
        for name, ok in report.verdicts.items():
            print(f"{'PASS' if ok else 'FAIL'}  {name}")
        print(f"report written to {out}")
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StabilityError as exc:
        print(f"stability error: {exc}", file=sys.stderr)
        return EXIT_STABILITY
    except DiffusionError as exc:
        print(f"diffusion error: {exc}", file=sys.stderr)
        return EXIT_STABILITY


if __name__ == "__main__":
    sys.exit(main())
