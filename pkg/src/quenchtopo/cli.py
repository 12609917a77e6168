"""Command-line driver: ``quenchtopo run|scan|catalog|selftest``."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from .catalog import format_catalog
from .errors import ConfigurationError, QuenchError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 2, 3, 4

log = logging.getLogger("quenchtopo")


def _parser():
    p = argparse.ArgumentParser(prog="quenchtopo", description="Quench topology toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "run every task of a scenario"), ("scan", "run only the phase-diagram scan")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config")
        s.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
        s.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
        s.add_argument("--strict", action="store_true", help="unknown keys are errors")
        s.add_argument("--tol-esc", type=float, default=None, help="ESC degeneracy tolerance")
        s.add_argument("--seed", type=int, default=None, help="recorded in the report; the runs are deterministic")
    sub.add_parser("catalog", help="list built-in protocol families")
    sub.add_parser("selftest", help="run the oracle-equivalence checks")
    return p


def _run(args, scan_only):
    from .scenario import parse_scenario, run

    try:
        with warnings.catch_warnings():
            if args.strict:
                warnings.simplefilter("error", UserWarning)
            sc = parse_scenario(args.config, strict=args.strict)
        if args.tol_esc is not None:
            if not args.tol_esc > 0:
                raise ConfigurationError("--tol-esc must be positive")
            sc.tol_esc = args.tol_esc
        if args.threads is not None and args.threads < 1:
            raise ConfigurationError("--threads must be at least 1")
        if scan_only and "phase-diagram" not in sc.tasks:
            if not sc.scan:
                raise ConfigurationError("scan needs a [scan] section")
            sc.tasks = ("phase-diagram",)
        tasks = ("phase-diagram",) if scan_only else None
    except (ConfigurationError, UserWarning) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QuenchError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = run(sc, args.out, args.threads, tasks, args.seed)
    for name, res in report.tasks.items():
        line = f"{name:16s} {res['status']}"
        if res["status"] != "ok":
            line += f"  {res['error']}"
        print(line)
    if not report.ok:
        return EXIT_NUMERICAL
    if report.partial:
        return EXIT_PARTIAL
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "catalog":
        print(format_catalog())
        return EXIT_OK
    if args.command == "selftest":
        from .selftest import run_selftest

        return EXIT_OK if run_selftest() else EXIT_NUMERICAL
    return _run(args, args.command == "scan")


if __name__ == "__main__":
    sys.exit(main())
