"""
Command-line interface.

Usage:
    python run.py run app/experiments/configs/z2.json
    python run.py report output/z2/record.json --format markdown_summary --out output/reports
    python run.py maps list
    python run.py maps check path/to/map.json

Exit codes:
    0 - Success
    2 - Configuration error (bad config, bad map definition, hypothesis violated)
    3 - Stage failure
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from app.core.config import get_settings
from app.core.exceptions import EXIT_OK, AppException
from app.experiments import ReportFormat, emit_report, load_config, load_record, run_experiment
from app.maps import MapService, build_map, list_maps, load_definition
from app.maps.catalog import resolve

logger = logging.getLogger(__name__)


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    updates = {}
    if args.workers:
        updates["workers"] = args.workers
    if args.output_dir:
        updates["output_dir"] = args.output_dir
    if updates:
        config = config.model_copy(update=updates)
    record = run_experiment(config)
    logger.info(f"Record written to {record.run_dir}/record.json")
    if record.passed is not None:
        print(f"{record.map_id}: {'PASS' if record.passed else 'FAIL'} "
              f"(lower {record.verdict['lower']:.4f}, dim {record.verdict['dim_hat']:.4f}, upper {record.verdict['upper']:.4f})")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    records = [load_record(path) for path in args.records]
    for path in emit_report(records, args.format, args.out):
        print(path)
    return EXIT_OK


def cmd_maps_list(_args: argparse.Namespace) -> int:
    for summary in list_maps():
        print(f"{summary.id:22s} {summary.kind.value:24s} k={summary.dimension} d={summary.degree} "
              f"d_t={summary.topological_degree}  {summary.description}")
    return EXIT_OK


def cmd_maps_check(args: argparse.Namespace) -> int:
    definition = load_definition(resolve(args.file))
    fmap = build_map(definition, strict=not args.skip_holomorphy)
    report = MapService.check_degrees(fmap, n_targets=args.targets)
    print(json.dumps(report.model_dump(mode="json"), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME.lower(),
        description="Equilibrium measures, Lyapunov exponents and dimension bounds for holomorphic maps",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("--log-level", default="INFO", help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run an experiment config")
    run.add_argument("config", help="Path to an experiment config JSON")
    run.add_argument("--workers", type=int, help="Worker threads within each stage")
    run.add_argument("--output-dir", help="Override the run directory")
    run.set_defaults(func=cmd_run)

    report = sub.add_parser("report", help="Render reports from record.json files")
    report.add_argument("records", nargs="+", help="One or more record.json files")
    report.add_argument("--format", choices=[f.value for f in ReportFormat], default=ReportFormat.MARKDOWN_SUMMARY.value)
    report.add_argument("--out", default=settings.OUTPUT_ROOT, help="Output directory")
    report.set_defaults(func=cmd_report)

    maps = sub.add_parser("maps", help="Bundled map definitions")
    maps_sub = maps.add_subparsers(dest="maps_command", required=True)
    maps_list = maps_sub.add_parser("list", help="List bundled maps")
    maps_list.set_defaults(func=cmd_maps_list)
    maps_check = maps_sub.add_parser("check", help="Validate a map definition and count preimages")
    maps_check.add_argument("file", help="Map definition JSON or bundled map id")
    maps_check.add_argument("--targets", type=int, default=3, help="Random targets for the degree count")
    maps_check.add_argument("--skip-holomorphy", action="store_true", help="Skip the common-zero check")
    maps_check.set_defaults(func=cmd_maps_check)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.log_level)
    try:
        return args.func(args)
    except AppException as e:
        logger.error(e.detail)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
