"""
Run the GatRep equivalence suites.

Usage:
    repmode check-equiv
    repmode check-equiv --cases 20 --perturb 1e-3    # must fail
"""

import logging

from ..equivalence import run_equivalence
from ..fileio import write_text_atomic
from .base import output_dir

logger = logging.getLogger(__name__)

HELP = "Compare branchwise and merged outputs on random configurations"


def add_arguments(parser):
    parser.add_argument(
        "--cases",
        type=int,
        default=100,
        help="Random GatRep configurations per dtype (default: 100)",
    )
    parser.add_argument(
        "--network-cases",
        type=int,
        default=2,
        help="End-to-end network configurations per BN mode (default: 2)",
    )
    parser.add_argument(
        "--perturb",
        type=float,
        default=0.0,
        help="Add this constant to every merged kernel entry to prove sensitivity",
    )
    parser.add_argument("--out", type=str, help="Report directory (default: output_dir)")


def run(config, options):
    report = run_equivalence(
        cases=options["cases"],
        seed=config.seed,
        perturb=options["perturb"],
        network_cases=options["network_cases"],
    )
    text = report.render()
    logger.debug(f"Equivalence report:\n{text}")
    print(text.splitlines()[-1])
    worst = report.worst()
    if worst is not None:
        print(f"worst: {worst.name} rel {worst.max_rel:.3e}")
    write_text_atomic(output_dir(config, options) / "equivalence.txt", text)
    report.check()
    print("All equivalence checks passed")
