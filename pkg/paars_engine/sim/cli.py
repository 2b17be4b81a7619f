"""
paars-sim command line.

    paars-sim run --config scenario.json --out report.json
    paars-sim verify report.json
"""

import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from config import configure_logging, get_settings
from ..exceptions import PaarsError
from .harness import SimReport, load_sim_config, run, verify
from .transport import HttpTransport

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="paars-sim", description="Deterministic PAARS simulation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="Run a scenario and write its report")
    run_p.add_argument("--config", required=True, help="Scenario file (.json or flat key = value)")
    run_p.add_argument("--out", required=True, help="Report path")
    run_p.add_argument("--url", help="Drive a running service instead of an in-process one")
    run_p.add_argument("--store", help="Store file of the running service, for the server-side checks")

    verify_p = sub.add_parser("verify", help="Check a report against its ground truth")
    verify_p.add_argument("report", help="Report written by `run`")
    return parser


def cmd_run(args) -> int:
    config = load_sim_config(args.config)
    transport = HttpTransport(args.url, args.store) if args.url else None
    report = run(config, transport)
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    logger.info(f"Report written to {args.out}")
    return 0


def cmd_verify(args) -> int:
    report = SimReport.model_validate_json(Path(args.report).read_text(encoding="utf-8"))
    checks = verify(report)
    for check in checks:
        print(f"{'PASS' if check.passed else 'FAIL'}  {check.name:<14} {check.detail}")
    return 0 if all(c.passed for c in checks) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run" and args.url and not args.store:
        parser.error("--url needs --store for the server-side checks")
    try:
        configure_logging(get_settings())
        if args.command == "run":
            return cmd_run(args)
        return cmd_verify(args)
    except (PaarsError, ValidationError, OSError) as e:
        print(f"paars-sim: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
