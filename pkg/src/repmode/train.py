"""
Partial-label training loop.

Each epoch shuffles the training samples, crops one random patch per
sample, applies random flips, and groups every mini-batch by task so each
group runs one forward with its task's merged kernels. A sample is scored
only against its single labeled structure. Validation MSE is measured by
sliding-window inference every ``val_interval`` epochs and after the last
one; the best parameters are checkpointed and restored at the end.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from .checkpoint import save_checkpoint
from .exceptions import ConfigError, DimensionError, DivergenceError, GeometryError
from .fileio import write_text_atomic
from .inference import EvalConfig, evaluate
from .loaders import BaseSampleLoader
from .net import Network
from .optim import Adam
from .tape import Tape
from .volumes import Sample

logger = logging.getLogger(__name__)

PATHS = ("merged", "branchwise")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 4
    patch: tuple[int, int, int] = (16, 32, 32)
    val_interval: int = 10
    seed: int = 0
    flip: bool = True
    flip_axes: tuple[int, ...] = (0, 1, 2)
    lr: float = 1e-4
    path: str = "merged"

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.val_interval < 1:
            raise ConfigError("train.epochs, batch_size and val_interval must be >= 1")
        if len(self.patch) != 3 or min(self.patch) < 1:
            raise ConfigError(f"train.patch must be three positive integers, got {self.patch}")
        if not set(self.flip_axes) <= {0, 1, 2}:
            raise ConfigError(f"train.flip_axes must be drawn from 0, 1, 2, got {self.flip_axes}")
        if self.lr <= 0:
            raise ConfigError(f"train.lr must be positive, got {self.lr}")
        if self.path not in PATHS:
            raise ConfigError(f"train.path must be one of {PATHS}, got {self.path!r}")

    @classmethod
    def from_mapping(cls, mapping: dict[str, Any], seed: int = 0) -> TrainConfig:
        return cls(
            epochs=int(mapping.get("epochs", 200)),
            batch_size=int(mapping.get("batch_size", 4)),
            patch=tuple(int(e) for e in mapping.get("patch", (16, 32, 32))),  # type: ignore[arg-type]
            val_interval=int(mapping.get("val_interval", 10)),
            seed=seed,
            flip=bool(mapping.get("flip", True)),
            flip_axes=tuple(int(a) for a in mapping.get("flip_axes", (0, 1, 2))),
            lr=float(mapping.get("lr", 1e-4)),
            path=str(mapping.get("path", "merged")),
        )


@dataclass
class GradStore:
    """Accumulated gradients by parameter name; frozen names never appear."""

    grads: dict[str, np.ndarray] = field(default_factory=dict)

    def accumulate(self, grads: dict[str, np.ndarray], weight: float = 1.0) -> None:
        for name, value in grads.items():
            if name in self.grads:
                self.grads[name] += weight * value
            else:
                self.grads[name] = weight * value

    def max_abs(self) -> float:
        return max((float(np.abs(g).max()) for g in self.grads.values() if g.size), default=0.0)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.grads[name]

    def __contains__(self, name: str) -> bool:
        return name in self.grads

    def __len__(self) -> int:
        return len(self.grads)


class EpochRecord(NamedTuple):
    epoch: int
    train_loss: float
    val_mse: float | None = None

    def format(self) -> str:
        line = f"epoch={self.epoch} train_loss={self.train_loss:.8g}"
        if self.val_mse is not None:
            line += f" val_mse={self.val_mse:.8g}"
        return line


@dataclass
class TrainResult:
    history: list[EpochRecord]
    best_epoch: int
    best_val_mse: float | None
    checkpoint: Path | None = None
    log: Path | None = None

    @property
    def losses(self) -> list[float]:
        return [record.train_loss for record in self.history]


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """
    Mean squared error over all voxels and its gradient ``2 (f - y) / P``.

    Raises:
        DimensionError: Shapes differ
    """
    if pred.shape != target.shape:
        raise DimensionError(f"Prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred - target.astype(pred.dtype, copy=False)
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    return loss, (2.0 / diff.size) * diff


def crop_origin(
    extents: tuple[int, ...], size: tuple[int, ...], rng: np.random.Generator
) -> tuple[int, ...]:
    """
    Uniformly random corner of a ``size`` crop inside ``extents``.

    Raises:
        GeometryError: Patch larger than the volume
    """
    if any(s > e for s, e in zip(size, extents)):
        raise GeometryError(f"Patch {tuple(size)} exceeds volume extents {tuple(extents)}")
    return tuple(int(rng.integers(0, e - s + 1)) for e, s in zip(extents, size))


def crop_patch(
    volume: np.ndarray,
    size: tuple[int, int, int],
    rng: np.random.Generator,
    target: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Crop ``volume`` (and ``target`` at the same corner) to ``size``."""
    origin = crop_origin(volume.shape, size, rng)
    region = tuple(slice(o, o + s) for o, s in zip(origin, size))
    return volume[region], None if target is None else target[region]


def augment_flip(
    patch: np.ndarray,
    target: np.ndarray,
    rng: np.random.Generator,
    axes: tuple[int, ...] = (0, 1, 2),
) -> tuple[np.ndarray, np.ndarray]:
    """Flip both arrays along each of ``axes`` independently with probability 0.5."""
    for axis in axes:
        if rng.random() < 0.5:
            patch = np.flip(patch, axis=axis)
            target = np.flip(target, axis=axis)
    return np.ascontiguousarray(patch), np.ascontiguousarray(target)


def _crop_pair(
    sample: Sample, size: tuple[int, int, int], rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    origin = crop_origin(sample.input.extents, size, rng)
    region = tuple(slice(o, o + s) for o, s in zip(origin, size))
    return sample.input.data[region], sample.target.data[region]


def backward(network: Network, tape: Tape, dloss: np.ndarray, task: int) -> GradStore:
    """Gradients of every unfrozen parameter for one recorded task forward."""
    return GradStore(network.backward(dloss, tape, task))


def _batch_step(
    network: Network, batch: list[tuple[int, np.ndarray, np.ndarray]], path: str
) -> tuple[float, GradStore]:
    groups: dict[int, list[tuple[np.ndarray, np.ndarray]]] = defaultdict(list)
    for label, x, y in batch:
        groups[label].append((x, y))

    store = GradStore()
    total = 0.0
    for task in sorted(groups):
        members = groups[task]
        weight = len(members) / len(batch)
        x = np.stack([m[0] for m in members])[:, None].astype(network.dtype, copy=False)
        y = np.stack([m[1] for m in members])[:, None].astype(network.dtype, copy=False)
        tape = Tape()
        pred = network.forward(x, task, path=path, mode="train", tape=tape)
        loss, grad = mse_loss(pred, y)
        if not np.isfinite(loss):
            raise DivergenceError(f"Non-finite training loss for task {task}")
        store.accumulate(backward(network, tape, weight * grad, task).grads)
        total += weight * loss
    return total, store


def _snapshot(network: Network) -> dict[str, np.ndarray]:
    return {name: value.copy() for name, value in {**network.parameters(), **network.buffers()}.items()}


def _restore(network: Network, snapshot: dict[str, np.ndarray]) -> None:
    live = {**network.parameters(), **network.buffers()}
    for name, value in snapshot.items():
        np.copyto(live[name], value)
    network.mark_updated()


def validate(
    network: Network,
    loader: BaseSampleLoader,
    config: EvalConfig,
    tasks: set[int] | None = None,
    path: str = "merged",
) -> float | None:
    """Mean sliding-window MSE over validation samples, or None when there are none."""
    report = evaluate(network, loader, config, "val", tasks=tasks, path=path)
    if not report.images:
        return None
    return report.overall()["mse"]


def train(
    network: Network,
    loader: BaseSampleLoader,
    config: TrainConfig,
    *,
    eval_config: EvalConfig | None = None,
    output_dir: str | Path | None = None,
    tasks: set[int] | None = None,
    checkpoint_name: str = "best.rpmk",
    log_name: str = "train.log",
) -> TrainResult:
    """
    Train ``network`` in place on the training split.

    Args:
        network: Network to update; frozen parameters are never touched
        loader: Sample source with train/val splits
        config: Schedule and augmentation settings
        eval_config: Validation windowing (defaults to the training patch)
        output_dir: Receives the best checkpoint and the training log
        tasks: Labels to train on (default: every task the network knows)

    Returns:
        Loss history and best-validation bookkeeping

    Raises:
        ConfigError: No training samples
        GeometryError: Patch larger than a volume
        DivergenceError: Non-finite loss
    """
    tasks = tasks if tasks is not None else set(range(1, network.num_tasks + 1))
    samples: list[Sample] = [s for s in loader.split("train") if s.label in tasks]
    if not samples:
        raise ConfigError(f"No training samples for tasks {sorted(tasks)}")
    eval_config = eval_config or EvalConfig(window=config.patch)
    root = Path(output_dir) if output_dir is not None else None
    checkpoint = root / checkpoint_name if root is not None else None
    log = root / log_name if root is not None else None

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(network.parameters(), lr=config.lr, frozen=network.frozen)
    history: list[EpochRecord] = []
    best_epoch, best_val = 0, None
    best_state: dict[str, np.ndarray] | None = None
    logger.info(
        f"Training on {len(samples)} samples, tasks {sorted(tasks)}, "
        f"{config.epochs} epochs, path {config.path}"
    )

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(samples))
        batch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = []
            for index in order[start : start + config.batch_size]:
                sample = samples[index]
                x, y = _crop_pair(sample, config.patch, rng)
                if config.flip:
                    x, y = augment_flip(x, y, rng, config.flip_axes)
                batch.append((sample.label, x, y))
            loss, store = _batch_step(network, batch, config.path)
            optimizer.step(store.grads)
            network.mark_updated()
            batch_losses.append(loss)
            logger.debug(f"epoch {epoch} batch {start // config.batch_size}: loss {loss:.6g}")

        val_mse = None
        if epoch % config.val_interval == 0 or epoch == config.epochs:
            val_mse = validate(network, loader, eval_config, tasks, config.path)
            if val_mse is not None and (best_val is None or val_mse < best_val):
                best_epoch, best_val = epoch, val_mse
                best_state = _snapshot(network)
                if checkpoint is not None:
                    save_checkpoint(network, checkpoint)
        record = EpochRecord(epoch, float(np.mean(batch_losses)), val_mse)
        history.append(record)
        logger.info(record.format())
        if log is not None:
            write_text_atomic(log, "".join(f"{r.format()}\n" for r in history))

    if best_state is None:
        logger.warning("No validation samples; keeping the final parameters")
        best_epoch = config.epochs
        if checkpoint is not None:
            save_checkpoint(network, checkpoint)
    else:
        _restore(network, best_state)
        logger.info(f"Best validation MSE {best_val:.6g} at epoch {best_epoch}")
    return TrainResult(history, best_epoch, best_val, checkpoint, log)


def fine_tune(
    network: Network,
    loader: BaseSampleLoader,
    config: TrainConfig,
    task: int,
    *,
    epochs: int,
    eval_config: EvalConfig | None = None,
    output_dir: str | Path | None = None,
) -> TrainResult:
    """Train only on samples of ``task`` (the newly added one) for ``epochs``."""
    return train(
        network,
        loader,
        replace(config, epochs=epochs, val_interval=min(config.val_interval, epochs)),
        eval_config=eval_config,
        output_dir=output_dir,
        tasks={task},
        checkpoint_name="extended.rpmk",
        log_name="fine_tune.log",
    )
