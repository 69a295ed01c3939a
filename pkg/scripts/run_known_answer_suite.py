#!/usr/bin/env python3
"""
Known-answer suite: run every bundled experiment config and summarize the verdicts.

Usage:
    # Run all bundled configs
    python -m scripts.run_known_answer_suite

    # Only some maps, with a summary table
    python -m scripts.run_known_answer_suite --maps z2 lattes4 --summary output/summary

Exit codes:
    0 - Success (every verdict passed)
    1 - Partial failure (some verdicts failed, every run completed)
    2 - Configuration or stage error
"""

import argparse
import logging
import os
import sys
import time

# Make app package importable when run from scripts/ or repo root
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.core.exceptions import AppException
from app.experiments import bundled_configs, emit_report, load_config, run_experiment


# Configure logging for cron-friendly output
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s [%(levelname)s] %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)
logger = logging.getLogger(__name__)


def main():
    parser = argparse.ArgumentParser(
        description="Run the bundled known-answer experiments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("--maps", nargs="*", help="Config names to run (default: all bundled)")
    parser.add_argument("--workers", type=int, help="Worker threads within each stage")
    parser.add_argument("--summary", type=str, help="Directory for a markdown bounds table")
    args = parser.parse_args()

    configs = bundled_configs()
    names = args.maps or list(configs)
    unknown = [n for n in names if n not in configs]
    if unknown:
        logger.error(f"Unknown configs: {', '.join(unknown)} (bundled: {', '.join(configs)})")
        sys.exit(2)

    start = time.perf_counter()
    records = []
    for name in names:
        try:
            config = load_config(configs[name])
            if args.workers:
                config = config.model_copy(update={"workers": args.workers})
            records.append(run_experiment(config))
        except AppException as e:
            logger.error(f"{name}: {e.detail}")
            sys.exit(2)

    failed = [r.map_id for r in records if r.passed is False]
    if args.summary:
        emit_report(records, "markdown_summary", args.summary)
    elapsed = time.perf_counter() - start
    logger.info(f"Suite complete: {len(records) - len(failed)} passed, {len(failed)} failed, elapsed {elapsed:.1f}s")
    if failed:
        logger.warning(f"Failed verdicts: {', '.join(failed)}")
        sys.exit(1)
    sys.exit(0)


if __name__ == "__main__":
    main()
