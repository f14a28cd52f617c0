"""
Shared pieces of the repmode subcommands.

Each subcommand is a plain module exposing ``HELP``, ``add_arguments(parser)``
and ``run(config, options)``; ``Subcommand`` states that shape for type
checkers. Progress goes to the module logger, results are printed.
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import Any, Protocol

from ..checkpoint import load_checkpoint
from ..conf import RunConfig
from ..loaders import ManifestSampleLoader
from ..net import Network
from ..volumes import MANIFEST_NAME

logger = logging.getLogger(__name__)


class Subcommand(Protocol):
    HELP: str

    def add_arguments(self, parser: argparse.ArgumentParser) -> None: ...

    def run(self, config: RunConfig, options: dict[str, Any]) -> None: ...


def open_dataset(directory: Path) -> ManifestSampleLoader:
    """
    Raises:
        FileNotFoundError: No manifest in ``directory``
    """
    if not (directory / MANIFEST_NAME).exists():
        raise FileNotFoundError(
            f"No dataset at {directory} (missing {MANIFEST_NAME}); run 'repmode gen-data' first"
        )
    return ManifestSampleLoader(directory)


def load_network(path: str | Path) -> Network:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    network = load_checkpoint(path)
    logger.info(f"Loaded {network.config.variant.value} network from {path}")
    return network


def output_dir(config: RunConfig, options: dict[str, Any]) -> Path:
    """``--out`` if given, else the configured output directory; created on demand."""
    directory = Path(options.get("out") or config.output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    return directory
