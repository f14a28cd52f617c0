"""
Generate the synthetic benchmark.

Usage:
    repmode gen-data
    repmode gen-data --set data.num_classes=4 --set data.dataset_dir=data/s4
"""

import logging
from collections import Counter

from ..synth import generate_dataset

logger = logging.getLogger(__name__)

HELP = "Generate the synthetic multi-scale benchmark (VOL5 volumes + manifest)"


def add_arguments(parser):
    """No options beyond the common ones."""


def run(config, options):
    directory = config.dataset_dir
    logger.info(f"Generating {config.data.num_samples} samples...")
    rows = generate_dataset(config.data, config.seed, directory)
    splits = Counter(row.split for row in rows)
    print(
        f"Wrote {len(rows)} samples to {directory} "
        f"(train {splits['train']}, val {splits['val']}, test {splits['test']})"
    )
