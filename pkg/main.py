#!/usr/bin/env python3
"""
MW-operator toolkit - command-line entry point

Examples:
  python main.py validate --config configs/m11_dyadic_line.json
  python main.py iterate --config configs/m21_dyadic_product.json --out results/m21.csv
  python main.py invariance --config configs/invariance_power.json --report results/power.json
"""
import argparse
import sys
from typing import List, Optional

from pydantic import ValidationError

from config import settings
from src.cli.commands import (
    COMMANDS, EXIT_BUDGET, EXIT_CONFIG, RunOptions, run_command
)
from src.cli.builders import load_config
from src.cli.output import companion_path, write_report, write_table
from src.utils.errors import BudgetExceededError, ConfigurationError, MWError
from src.utils.logger import setup_logging
from src.utils.metrics import write_metrics


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mw",
        description="MW-operator calculus over affine iterated function systems",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Exit codes:
  0  success, checked property holds
  1  checked property fails
  2  configuration error
  3  size budget exceeded
        """,
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="Experiment JSON file")
    common.add_argument("--out", help="CSV output path (default: config output.csv, else stdout)")
    common.add_argument("--report", help="JSON report path (default: config output.report, else stdout)")
    common.add_argument(
        "--workers", type=int, default=settings.default_workers,
        help=f"Worker threads for point evaluation (default: {settings.default_workers})"
    )
    common.add_argument("--budget", type=int, help="Override the size budget of the command")
    common.add_argument("--metrics", help="Write Prometheus metrics to this path after the run")
    common.add_argument("--log-level", default=settings.log_level, help="Logging level")

    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "validate": "Check hypotheses H1-H3 of the IFS",
        "iterate": "Tabulate M^p f on a grid with error bounds",
        "limit": "Tabulate the limit operator L f and the fitted lambda",
        "fixed-point": "Test Mf = f and recover lambda",
        "invariance": "Compare the three g_gamma-invariance characterisations",
        "orbit": "Simulate an orbit of g_gamma and count cell visits",
        "admissible": "Emit the admissible point set S_k",
    }
    for name in COMMANDS:
        subparsers.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = create_parser()
    args = parser.parse_args(argv)
    logger = setup_logging(args.log_level, settings.log_format)

    if args.workers < 1:
        logger.error("Invalid worker count", workers=args.workers)
        return EXIT_CONFIG

    try:
        config = load_config(args.config)
        budget = args.budget if args.budget is not None else config.run.budget
        options = RunOptions(workers=args.workers, budget=budget)
        result = run_command(args.command, config, options)
    except (ConfigurationError, ValidationError) as e:
        logger.error("Configuration error", command=args.command, error=str(e))
        return EXIT_CONFIG
    except BudgetExceededError as e:
        logger.error("Budget exceeded", command=args.command, what=e.what,
                     requested=e.requested, allowed=e.allowed)
        return EXIT_BUDGET
    except MWError as e:
        logger.error("Invalid experiment", command=args.command, error=str(e))
        return EXIT_CONFIG

    out = args.out or config.output.csv
    report_path = args.report or config.output.report
    if result.table is not None:
        write_table(result.table, out)
        for name, table in result.extra_tables.items():
            if out is not None:
                write_table(table, companion_path(out, name))
    if result.report is not None:
        # Reports share stdout only when the table went to a file
        if report_path is not None or out is not None or result.table is None:
            write_report(result.report, report_path)
        else:
            write_report(result.report, stream=sys.stderr)

    if args.metrics:
        write_metrics(args.metrics)

    logger.info("Run finished", command=args.command, exit_code=result.exit_code)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
