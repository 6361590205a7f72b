#!/usr/bin/env python3
"""
CLI - Command-line harness for the lab's demonstrations
Part of the CINF Lab outlier-noise mitigation infrastructure

    python -m cinf_lab caf-chirp --seed 7 --out results/chirp --dump-stages
    python -m cinf_lab suite quick

Exit codes: 0 success, 1 other lab error, 2 config error, 3 invariant violation.
"""

import argparse
import logging
import sys
from typing import List, Optional

from cinf_lab import __version__
from cinf_lab.config import EXPERIMENTS
from cinf_lab.core.experiment_runner import ExperimentRunner
from cinf_lab.errors import CinfError, ConfigError, InvariantViolation
from cinf_lab.lab_logging import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_INVARIANT = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", help="Report directory (default: $CINF_RESULTS_DIR/<experiment>_seed<seed>)")
    parser.add_argument("--seed", type=int, help="Override the scenario's master seed")
    parser.add_argument("--dump-stages", action="store_true", help="Write intermediate signals (CAF stages I-V)")
    parser.add_argument("--results-dir", help="Results root directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cinf_lab", description="CINF Lab outlier-noise experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", help="Logging level (default: $CINF_LOG_LEVEL or INFO)")
    parser.add_argument("--json-logs", action="store_true", help="Emit logs as JSON lines")
    parser.add_argument("--log-file", help="Write logs to this file instead of stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"Run the {name} experiment")
        p.add_argument("--config", help="Scenario file (JSON or YAML); default is the shipped scenario")
        _add_common(p)

    p = sub.add_parser("suite", help="Run a named group of experiments")
    p.add_argument("suite_name", nargs="?", default="acceptance", choices=sorted(ExperimentRunner.SUITES))
    p.add_argument("--seed", type=int, help="Override every scenario's master seed")
    p.add_argument("--dump-stages", action="store_true")
    p.add_argument("--results-dir", help="Results root directory")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.json_logs, args.log_file)

    try:
        runner = ExperimentRunner(args.results_dir)
        if args.command == "suite":
            outcomes = runner.run_experiment_suite(args.suite_name, seed=args.seed, dump_stages=args.dump_stages)
            if any(o.report is None for o in outcomes.values()):
                return EXIT_ERROR
            return EXIT_OK if all(o.passed for o in outcomes.values()) else EXIT_INVARIANT

        runner.run_experiment(args.command, config_path=args.config, seed=args.seed, out_dir=args.out,
                              dump_stages=args.dump_stages)
        return EXIT_OK
    except ConfigError as e:
        print(f"❌ Config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as e:
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except CinfError as e:
        logger.error("%s", e)
        print(f"❌ {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
