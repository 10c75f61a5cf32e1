"""Command line entry point.

    ldp-trilemma run <config> [--task ... --out results.csv]
    ldp-trilemma sweep [<config>] --grid n=10000,40000 --grid d=16,64

Exit status: 0 on success, 2 for a bad configuration, 3 when a run breaks
an invariant (budget, accounting, convergence, wire format).
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from pathlib import Path

from .frames import KashinConvergenceError
from .harness.channel import BudgetViolation
from .harness.config import ConfigError, ExperimentConfig, load_config
from .harness.runner import InvariantViolation, run_experiment, write_csv

EXIT_CONFIG = 2
EXIT_INVARIANT = 3

_FLAGS = ("task", "scheme", "d", "n", "eps", "b", "source", "reps", "seed", "out", "coin", "level", "timing", "jobs")


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="key=value configuration file")
    p.add_argument("--task")
    p.add_argument("--scheme")
    p.add_argument("--d")
    p.add_argument("--n")
    p.add_argument("--eps")
    p.add_argument("--b")
    p.add_argument("--source", help="uniform, geometric:<lambda>, file:<path>, atoms:<count>, gaussian_mixture")
    p.add_argument("--reps")
    p.add_argument("--seed")
    p.add_argument("--out", help="CSV destination (stdout summary is always printed)")
    p.add_argument("--coin", help="public or private (SQKR only)")
    p.add_argument("--level", help="Kashin level K0")
    p.add_argument("--timing", action="store_const", const="true", help="record encode/decode wall time")
    p.add_argument("--wire", action="store_const", const="true", help="round-trip every message through its wire format")
    p.add_argument("--jobs", help="worker processes for repetitions")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldp-trilemma", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _add_overrides(sub.add_parser("run", help="run one configuration"))
    sweep = sub.add_parser("sweep", help="run the cartesian product of parameter lists")
    _add_overrides(sweep)
    sweep.add_argument("--grid", action="append", default=[], metavar="PARAM=V1,V2,...",
                       help="repeatable; several params may also be joined with ';'")
    return parser


def parse_grid(items) -> dict:
    grid = {}
    for item in items:
        for part in filter(None, (s.strip() for s in item.split(";"))):
            key, sep, values = part.partition("=")
            key = key.strip()
            if not sep or not values.strip():
                raise ConfigError(f"bad grid entry {part!r}; expected param=v1,v2")
            if key not in ExperimentConfig.field_names():
                raise ConfigError(f"unknown grid parameter {key!r}")
            if key in grid:
                raise ConfigError(f"grid parameter {key!r} given twice")
            grid[key] = [v.strip() for v in values.split(",") if v.strip()]
    return grid


def _base_config(args) -> ExperimentConfig:
    overrides = {k: getattr(args, k) for k in _FLAGS + ("wire",) if getattr(args, k, None) is not None}
    return load_config(args.config, **overrides)


def _emit(reports, out) -> None:
    for report in reports:
        print(report.summary_text())
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            write_csv(reports, fh)
        print(f"wrote {out}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        base = _base_config(args)
        if args.command == "run":
            configs = [base]
        else:
            grid = parse_grid(args.grid)
            if not grid:
                raise ConfigError("sweep needs at least one --grid")
            keys = list(grid)
            configs = [base.replace(**dict(zip(keys, combo))) for combo in itertools.product(*grid.values())]
        reports = [run_experiment(cfg) for cfg in configs]
    except (BudgetViolation, InvariantViolation, KashinConvergenceError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(reports, base.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
