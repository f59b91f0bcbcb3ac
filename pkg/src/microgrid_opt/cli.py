"""Command-line entry point: ``microgrid-opt validate|run``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_scenario, validate
from .dp_dispatch import InfeasibleError
from .network import NumericalBreakdown
from .smoothing import ConvergenceError

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3


def _progress(quiet: bool):
    if quiet:
        return None

    def show(done, total):
        print(f"\r{done}/{total}", end="" if done < total else "\n", file=sys.stderr, flush=True)

    return show


def cmd_validate(args) -> int:
    diags = validate(args.path)
    for d in diags:
        print(f"{args.path}: {d}")
    if not diags:
        print(f"{args.path}: ok")
    return EXIT_OK if not diags else EXIT_CONFIG


def cmd_run(args) -> int:
    from .runner import run_scenario, run_seeds

    try:
        scn = load_scenario(args.config, seed_override=args.seed_override)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"{args.config}: {d}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else scn.output_dir
    try:
        if args.jobs > 1:
            reports = run_seeds(args.config, scn.seed, args.jobs, out)
        else:
            reports = [run_scenario(scn, out, _progress(args.quiet))]
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NumericalBreakdown, ConvergenceError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if not args.quiet:
        for r in reports:
            s = r["summary"]
            print(f"{r['strategy']} seed={r['seed']}: objective={s['objective']:.6g} "
                  f"baseline={s['baseline']:.6g} improvement={s['improvement_pct']:.3f}%")
        print(f"artifacts in {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="microgrid-opt", description="Microgrid energy-management optimizers.")
    sub = ap.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="check a scenario file without running it")
    v.add_argument("path")
    v.set_defaults(func=cmd_validate)
    r = sub.add_parser("run", help="run a scenario and write its report")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.add_argument("--seed-override", type=int)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        print("--jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.ERROR if getattr(args, "quiet", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
