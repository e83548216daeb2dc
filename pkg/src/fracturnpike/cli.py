"""Command-line interface: run experiments, validate configs, print version.

Exit codes: 0 success, 2 invalid configuration, 3 solver failure.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import ConfigError, load_config, validate_config
from .runner import SolverFailure, run_experiment

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracturnpike",
        description="Exterior optimal control of the 1-D fractional heat equation "
        "and turnpike experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the sweep described by a config file")
    run.add_argument("config", help="path to the experiment config (JSON)")
    run.add_argument("--out", default=None, help="output directory (overrides the config)")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for sweep members")

    val = sub.add_parser("validate", help="report every schema violation in a config file")
    val.add_argument("config", help="path to the experiment config (JSON)")

    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "version":
        print(__version__)
        return 0

    if args.command == "validate":
        try:
            diags = validate_config(args.config)
        except OSError as exc:
            print(str(exc), file=sys.stderr)
            return 2
        for diag in diags:
            print(diag)
        return 0 if not diags else 2

    # run
    try:
        config = load_config(args.config)
    except OSError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except ConfigError as exc:
        for diag in exc.diagnostics:
            print(diag, file=sys.stderr)
        return 2
    if args.jobs < 1:
        print("--jobs: must be a positive integer", file=sys.stderr)
        return 2
    try:
        out = run_experiment(config, out_dir=args.out, jobs=args.jobs)
    except SolverFailure as exc:
        print(str(exc), file=sys.stderr)
        return 3
    print(f"wrote artifacts to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
