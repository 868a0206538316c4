"""Command line entry point.

Exit codes: 0 all checks pass, 1 bound violation, 2 abort, 3 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .core import ConfigurationError, DomainError
from .runner import (
    ConfigError,
    OutputError,
    RunAborted,
    audit,
    load_config,
    run,
    truncation_study,
)
from .scenarios import CatalogueError, StudyError, convergence_study, manufactured_case

EXIT_OK, EXIT_VIOLATION, EXIT_ABORT, EXIT_USAGE = 0, 1, 2, 3

SLOPE_RANGE = (0.7, 2.3)
TRUNCATION_TOL = 1e-6


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _simulate(args):
    cfg = load_config(args.config)
    out = args.out or cfg.output_dir
    try:
        history = run(cfg, output_dir=out)
    except RunAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        if out:
            print(f"partial history written to {out}", file=sys.stderr)
        return EXIT_ABORT
    print(json.dumps({"verdict": history.summary["verdict"], "checks": history.summary["checks"]}))
    if out:
        print(f"outputs written to {out}")
    return EXIT_OK if history.summary["verdict"] == "pass" else EXIT_VIOLATION


def _mms(args):
    case = manufactured_case(args.case_id)
    grids = [args.base * 2**k for k in range(args.levels)]
    try:
        report = convergence_study(case, grids, t_end=args.t_end)
    except StudyError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    print(report.summary())
    if report.exact:
        return EXIT_OK
    lo, hi = SLOPE_RANGE
    ok = all(lo <= s <= hi for s in report.slopes.values())
    return EXIT_OK if ok else EXIT_VIOLATION


def _truncation(args):
    cfg = load_config(args.config)
    try:
        result = truncation_study(cfg, args.factor)
    except RunAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    for col, rel in result["relative_change"].items():
        print(f"{col:>20} {rel:.3e}")
    worst = result["max_relative_change"]
    print(f"max relative change {worst:.3e} (tolerance {TRUNCATION_TOL:g})")
    return EXIT_OK if worst < TRUNCATION_TOL else EXIT_VIOLATION


def _audit(args):
    result = audit(args.series, energy_rtol=args.energy_rtol)
    print(json.dumps(result))
    return EXIT_OK if result["verdict"] == "pass" else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lagns", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run a configuration and write series/snapshots/summary")
    p.add_argument("config")
    p.add_argument("--out", metavar="DIR")
    p.set_defaults(func=_simulate)

    p = sub.add_parser("mms-study", help="manufactured-solution convergence study")
    p.add_argument("case_id")
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--base", type=int, default=20, help="cells on the coarsest grid")
    p.add_argument("--t-end", type=float, default=0.5)
    p.set_defaults(func=_mms)

    p = sub.add_parser("truncation-study", help="compare a run against a longer truncated domain")
    p.add_argument("config")
    p.add_argument("--factor", type=int, default=2)
    p.set_defaults(func=_truncation)

    p = sub.add_parser("audit", help="re-check monitored bounds from a series.csv file")
    p.add_argument("series")
    p.add_argument("--energy-rtol", type=float, default=0.05)
    p.set_defaults(func=_audit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "mms-study" and args.levels < 3:
        print("error: --levels must be at least 3", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, DomainError, CatalogueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, OutputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
