"""
killing-probe command-line entry point

    python -m killing_probe analyze <config.json> [--out DIR] [--threads N]
    python -m killing_probe sweep <config.json>
    python -m killing_probe crossvalidate <config.json>
    python -m killing_probe catalog --list
    python -m killing_probe rank-formula --n 2 --d 1
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from killing_probe import __version__
from killing_probe.config import EXIT_OK, LOG_LEVEL, THREADS, TOOL_NAME
from killing_probe.components.oracle_suite import rank_formula
from killing_probe.components.runner import run_analyze, run_crossvalidate, run_sweep
from killing_probe.components.summary import (
    create_summary_table,
    create_sweep_csv,
    create_sweep_summary,
    sweep_document,
    write_outputs,
)
from killing_probe.utils.errors import KillingProbeError, UsageError, to_error_object
from killing_probe.utils.metric_model import list_catalog
from killing_probe.utils.validators import load_run_config

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=TOOL_NAME,
        description="Detect polynomial first integrals of geodesic flows from endpoint data.",
    )
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="logging level (default from KILLING_PROBE_LOG_LEVEL)")
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("analyze", "obstruction kernel, deflation and oracles for every (d, seed)"),
        ("sweep", "analyze over the perturbation amplitude grid of the config"),
        ("crossvalidate", "analyze, then certify kernel vectors by a conservation audit"),
    ]:
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("config", help="path to a JSON run config")
        sub.add_argument("--out", default=None, help="output directory (default: the config's output field)")
        sub.add_argument("--threads", type=int, default=THREADS, help="BVP worker processes")

    catalog = commands.add_parser("catalog", help="catalog metrics")
    catalog.add_argument("--list", action="store_true", help="list catalog metrics with default parameters")

    formula = commands.add_parser("rank-formula", help="maximal dimension of degree-d integrals in dimension n")
    formula.add_argument("--n", type=int, required=True)
    formula.add_argument("--d", type=int, required=True)
    return parser


def _run_command(args: argparse.Namespace) -> int:
    config = load_run_config(args.config)
    out_dir = args.out or config.output
    n_jobs = max(1, args.threads)

    if args.command == "sweep":
        reports = [r.to_dict() for r in run_sweep(config, n_jobs)]
        summary = create_sweep_summary(reports)
        write_outputs(out_dir, sweep_document(config.model_dump(), reports), summary, create_sweep_csv(reports))
    else:
        run = run_crossvalidate if args.command == "crossvalidate" else run_analyze
        report = run(config, n_jobs).to_dict()
        summary = create_summary_table(report)
        write_outputs(out_dir, report, summary)
    print(summary)
    return EXIT_OK


def _catalog_command(args: argparse.Namespace) -> int:
    if not args.list:
        raise UsageError("catalog needs --list")
    for entry in list_catalog():
        print(f"{entry['name']:<16} {entry['description']}")
        print(f"{'':<16} defaults: {json.dumps(entry['defaults'])}")
    return EXIT_OK


def _rank_formula_command(args: argparse.Namespace) -> int:
    if args.n < 2 or args.d < 1:
        raise UsageError("rank-formula needs n >= 2 and d >= 1", {"n": args.n, "d": args.d})
    rank, jet_order = rank_formula(args.n, args.d)
    print(json.dumps({"n": args.n, "d": args.d, "rank": rank, "jet_order": jet_order}))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, dispatch, and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        if args.command == "catalog":
            return _catalog_command(args)
        if args.command == "rank-formula":
            return _rank_formula_command(args)
        return _run_command(args)
    except KillingProbeError as e:
        logger.error(f"{args.command} failed: {e.kind}: {e.message}")
        print(json.dumps({"error": to_error_object(e)}, default=str), file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
