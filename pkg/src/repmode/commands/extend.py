"""
Add a new task to a trained network and fine-tune it.

Usage:
    repmode gen-data --set data.num_classes=4
    repmode train --tasks 3
    repmode extend --checkpoint runs/default/best.rpmk

RepMode networks gain one expert and a new gating module per MoDE block;
pre-existing parameters stay frozen and previous tasks replay stored gates,
so their test metrics must not change. Multi-decoder networks gain a
decoder and fine-tune everything.
"""

import json
import logging
from pathlib import Path

import numpy as np

from ..exceptions import ConfigError, ToleranceError
from ..fileio import write_text_atomic
from ..inference import evaluate
from ..net import Variant, extend_for_new_task, extend_multi_decoder, frozen_checksum
from ..train import fine_tune
from .base import load_network, open_dataset, output_dir

logger = logging.getLogger(__name__)

HELP = "Extend a trained network to one more task and fine-tune on it"


def add_arguments(parser):
    parser.add_argument("--checkpoint", required=True, help="Trained checkpoint")
    parser.add_argument(
        "--dataset",
        type=str,
        help="Dataset holding the new task's samples (default: data.dataset_dir)",
    )
    parser.add_argument("--out", type=str, help="Output directory (default: output_dir)")


def run(config, options):
    network = load_network(options["checkpoint"])
    loader = open_dataset(Path(options.get("dataset") or config.dataset_dir))
    out = output_dir(config, options)
    previous = set(range(1, network.num_tasks + 1))
    new_task = network.num_tasks + 1
    rng = np.random.default_rng([config.seed, 2])

    before = evaluate(network, loader, config.eval, tasks=previous)
    if network.config.variant is Variant.REPMODE:
        extended = extend_for_new_task(network, config.extend, rng)
    elif network.config.variant is Variant.MULTI_DECODER:
        extended = extend_multi_decoder(network, rng)
    else:
        raise ConfigError("Plain single-task networks cannot be extended; train a new one")
    checksum = frozen_checksum(extended)

    logger.info(
        f"Fine-tuning task {new_task} for {config.extend.epochs} epochs "
        f"({len(extended.frozen)} frozen parameter groups)"
    )
    result = fine_tune(
        extended,
        loader,
        config.train,
        new_task,
        epochs=config.extend.epochs,
        eval_config=config.eval,
        output_dir=out,
    )
    after = evaluate(extended, loader, config.eval, tasks=previous)
    new = evaluate(extended, loader, config.eval, tasks={new_task})

    unchanged = before.to_mapping()["images"] == after.to_mapping()["images"]
    checksum_ok = frozen_checksum(extended) == checksum
    summary = {
        "new_task": new_task,
        "variant": network.config.variant.value,
        "previous_before": before.overall(),
        "previous_after": after.overall(),
        "previous_unchanged": unchanged,
        "frozen_checksum": checksum,
        "frozen_unchanged": checksum_ok,
        "new_task_metrics": new.overall(),
        "fine_tune_val_mse": [r.val_mse for r in result.history if r.val_mse is not None],
    }
    write_text_atomic(out / "extend.json", json.dumps(summary, indent=2) + "\n")
    print(f"previous tasks before: {before.overall()}")
    print(f"previous tasks after:  {after.overall()}")
    print(f"new task {new_task}:        {new.overall()}")

    if network.config.variant is Variant.REPMODE:
        if not checksum_ok:
            raise ToleranceError("Frozen parameters changed during fine-tuning")
        if not unchanged:
            raise ToleranceError("Previous-task metrics changed after extension")
        print("Previous-task metrics unchanged")
    print(f"Checkpoint: {result.checkpoint}")
