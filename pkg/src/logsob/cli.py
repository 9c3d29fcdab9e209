"""Command-line front end.

Usage:
    logsob <experiment> --config <path> [--out DIR] [--hbar H ...]
           [--r R ...] [--tmax T]

Exit status: 0 if every check in the manifest passed, 1 if some check
failed, 2 on configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import sys
import time

from .errors import ConfigError, SimulationError
from .runio import EXPERIMENTS, load_config, make_run_dir


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logsob",
        description="energy-growth and norm-growth experiments for the "
                    "forced anharmonic oscillator")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True,
                        help="JSON config file (unknown keys rejected)")
    parser.add_argument("--out", default=None,
                        help="override output_dir from the config")
    parser.add_argument("--hbar", type=float, nargs="+", default=None,
                        help="override hbar_list")
    parser.add_argument("--r", type=int, nargs="+", default=None,
                        help="override r_list")
    parser.add_argument("--tmax", type=float, default=None,
                        help="override t_max")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.hbar is not None:
        overrides["hbar_list"] = tuple(args.hbar)
    if args.r is not None:
        overrides["r_list"] = tuple(args.r)
    if args.tmax is not None:
        overrides["t_max"] = args.tmax

    try:
        config = load_config(args.config, experiment=args.experiment,
                             overrides=overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    from . import experiments  # deferred: imports numba-backed modules

    try:
        run_dir = make_run_dir(config)
        t0 = time.perf_counter()
        manifest = experiments.run_experiment(config, run_dir)
        manifest.write(run_dir, wall_time_s=time.perf_counter() - t0)
    except SimulationError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2

    for name, check in manifest.checks.items():
        mark = "PASS" if check["pass"] else "FAIL"
        print(f"[{mark}] {name}: {check['detail']}")
    print(f"results: {run_dir}")
    return 0 if manifest.all_passed() else 1


if __name__ == "__main__":
    sys.exit(main())
