"""
Train a network on the synthetic benchmark.

Usage:
    repmode train
    repmode train --path branchwise --set train.epochs=5
    repmode train --tasks 2                      # first two structures only
    repmode train --set arch.variant=plain       # one plain network per task
    repmode train --resume runs/default/best.rpmk
"""

import logging
from dataclasses import replace

import numpy as np

from ..net import Variant, build_network
from ..train import train
from .base import load_network, open_dataset, output_dir

logger = logging.getLogger(__name__)

HELP = "Train RepMode or a baseline; keeps the best-validation checkpoint"


def add_arguments(parser):
    parser.add_argument(
        "--path",
        choices=["merged", "branchwise"],
        help="Forward path used during training (default: train.path)",
    )
    parser.add_argument(
        "--tasks",
        type=int,
        help="Train on structures 1..N only (default: data.num_classes)",
    )
    parser.add_argument(
        "--resume",
        type=str,
        help="Continue from a checkpoint instead of a fresh initialization",
    )


def run(config, options):
    loader = open_dataset(config.dataset_dir)
    out = output_dir(config, options)
    num_tasks = options.get("tasks") or config.data.num_classes
    arch = replace(config.arch, num_tasks=num_tasks)
    train_config = config.train
    if options.get("path"):
        train_config = replace(train_config, path=options["path"])
    dtype = np.dtype(config.dtype)
    rng = np.random.default_rng([config.seed, 0])

    if arch.variant is Variant.PLAIN:
        # One single-task network per structure
        for task in range(1, num_tasks + 1):
            logger.info(f"Training plain network for task {task}")
            network = build_network(arch, rng, dtype)
            result = train(
                network,
                loader,
                train_config,
                eval_config=config.eval,
                output_dir=out,
                tasks={task},
                checkpoint_name=f"plain_task{task}.rpmk",
                log_name=f"train_task{task}.log",
            )
            report(result)
        return

    if options.get("resume"):
        network = load_network(options["resume"])
    else:
        network = build_network(arch, rng, dtype)
    logger.info(
        f"Training {arch.variant.value} network on {num_tasks} tasks "
        f"({train_config.epochs} epochs, {train_config.path} path)"
    )
    result = train(network, loader, train_config, eval_config=config.eval, output_dir=out)
    report(result)


def report(result):
    if result.best_val_mse is None:
        print(f"Final train loss {result.losses[-1]:.6g}")
    else:
        print(f"Best validation MSE {result.best_val_mse:.6g} at epoch {result.best_epoch}")
    if result.checkpoint is not None:
        print(f"Checkpoint: {result.checkpoint}")
