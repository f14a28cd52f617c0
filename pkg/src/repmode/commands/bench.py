"""
Time merged vs branchwise forwards of one MoDE block.

Usage:
    repmode bench
    repmode bench --set bench.repetitions=10
"""

import json
import logging

from ..bench import run_benchmark
from ..fileio import write_text_atomic
from .base import output_dir

logger = logging.getLogger(__name__)

HELP = "Benchmark GatRep merged forwards against explicit branches"


def add_arguments(parser):
    parser.add_argument("--out", type=str, help="Report directory (default: output_dir)")


def run(config, options):
    settings = config.bench
    logger.info(
        f"Benchmarking {settings.experts} block, input {settings.input_shape}, "
        f"{settings.repetitions} repetitions"
    )
    report = run_benchmark(settings, config.seed)
    out = output_dir(config, options) / "bench.json"
    write_text_atomic(out, json.dumps(report.to_mapping(), indent=2) + "\n")
    print(report.render())
    if report.merged.median >= report.branchwise.median:
        logger.warning("Merged forward was not faster than branchwise on this machine")
    print(f"Wrote {out}")
