"""Command-line front end: certify, run and sweep scenario files.

Exit codes: 0 pass, 1 certificate or constraint failure, 2 configuration error.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import config
from .errors import ContinuumError, SafetyError, ScenarioError
from .models import load_scenario
from .pipeline import resolve_out_dir, run_scenario, certify_scenario, sweep, sweep_table, write_sweep_csv
from .run_db import record_run

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2


def _parse_values(raw: str) -> List[float]:
    values = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            values.append(float(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {part!r}")
    if not values:
        raise argparse.ArgumentTypeError("at least one value is required")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="continuum", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default=None, help="overrides CONTINUUM_LOG_LEVEL")
    parser.add_argument("--no-ledger", action="store_true", help="do not record the run in the SQLite ledger")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="compute margins and certify the planned deformation")
    p.add_argument("scenario", type=Path)

    p = sub.add_parser("run", help="simulate the scenario and write traces and reports")
    p.add_argument("scenario", type=Path)
    p.add_argument("--out", default=None, help="output directory (default: CONTINUUM_OUTPUT_DIR or data/runs/<name>)")
    p.add_argument("--force", action="store_true", help="run even if the plan fails certification")

    p = sub.add_parser("sweep", help="rerun the scenario over a list of parameter values")
    p.add_argument("scenario", type=Path)
    p.add_argument("--param", required=True, choices=["v_max", "drop_probability", "delta"])
    p.add_argument("--values", required=True, type=_parse_values, help="comma separated, e.g. 0,0.25,0.5")
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=1)
    return parser


def cmd_certify(args) -> int:
    scenario = load_scenario(args.scenario)
    _, _, report = certify_scenario(scenario)
    print(report.pretty_message)
    if not args.no_ledger:
        record_run(scenario.name, "certify", scenario.seed, report.passed,
                   report.model_dump(mode="json", exclude={"samples", "pretty_message"}))
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    result = run_scenario(scenario, out=args.out, force=args.force)
    summary = result.summary
    print(summary.pretty_message)
    print(f"\nartifacts in {summary.out_dir}")
    if not args.no_ledger:
        record_run(scenario.name, "run", scenario.seed, summary.passed,
                   summary.model_dump(mode="json", exclude={"pretty_message"}))
    return EXIT_OK if summary.passed else EXIT_FAIL


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    rows = sweep(scenario, args.param, args.values, jobs=args.jobs)
    print(sweep_table(args.param, rows))
    out_dir = resolve_out_dir(scenario, args.out)
    path = write_sweep_csv(out_dir / f"sweep_{args.param}.csv", args.param, rows)
    print(f"\nwrote {path}")
    passed = all(r.constraints_passed for r in rows)
    if not args.no_ledger:
        record_run(scenario.name, "sweep", scenario.seed, passed,
                   {"param": args.param, "rows": [r.model_dump() for r in rows]})
    return EXIT_OK


COMMANDS = {"certify": cmd_certify, "run": cmd_run, "sweep": cmd_sweep}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse usage errors are configuration errors
        return EXIT_CONFIG if exc.code else EXIT_OK
    config.configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as e:
        logger.error("configuration error: %s", e)
        print(f"error [{e.module}]: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SafetyError as e:
        print(f"error [{e.module}]: {e}", file=sys.stderr)
        return EXIT_FAIL
    except ContinuumError as e:
        logging.exception("%s failed", args.command)
        print(f"error [{e.module}]: {e}", file=sys.stderr)
        return EXIT_FAIL
