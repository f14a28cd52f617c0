"""
Gaussian sliding-window inference over full volumes.

Tiles of the training patch size are placed at ``window * stride_fraction``
steps, with the last tile on every axis shifted inward to end on the
boundary. Tile predictions are averaged voxelwise under a separable
Gaussian importance map centered on each tile.

Usage:
    from repmode.inference import EvalConfig, plan_windows, sliding_window_predict

    plan = plan_windows(volume.shape, (16, 32, 32))
    prediction = sliding_window_predict(volume, network, task=2, plan=plan)
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from typing import Any

import numpy as np

from .exceptions import ConfigError, GeometryError
from .loaders import BaseSampleLoader
from .metrics import MetricsReport
from .net import Network

logger = logging.getLogger(__name__)

Predictor = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class EvalConfig:
    window: tuple[int, int, int]
    stride_fraction: float = 0.5
    sigma_fraction: float = 0.125
    weight_floor: float = 1e-8
    tile_batch: int = 4

    def __post_init__(self) -> None:
        if len(self.window) != 3 or min(self.window) < 1:
            raise ConfigError(f"eval.window must be three positive integers, got {self.window}")
        if not 0 < self.stride_fraction <= 1:
            raise ConfigError(f"eval.stride_fraction must lie in (0, 1], got {self.stride_fraction}")
        if self.sigma_fraction <= 0:
            raise ConfigError("eval.sigma_fraction must be positive")
        if self.weight_floor < 0:
            raise ConfigError("eval.weight_floor must be nonnegative")
        if self.tile_batch < 1:
            raise ConfigError("eval.tile_batch must be >= 1")

    @classmethod
    def from_mapping(cls, mapping: dict[str, Any], patch: tuple[int, int, int]) -> EvalConfig:
        window = mapping.get("window") or patch
        return cls(
            window=tuple(int(e) for e in window),  # type: ignore[arg-type]
            stride_fraction=float(mapping.get("stride_fraction", 0.5)),
            sigma_fraction=float(mapping.get("sigma_fraction", 0.125)),
            weight_floor=float(mapping.get("weight_floor", 1e-8)),
            tile_batch=int(mapping.get("tile_batch", 4)),
        )


@dataclass(frozen=True)
class WindowPlan:
    """Tile origins covering a volume, with the shared importance map."""

    extents: tuple[int, int, int]
    window: tuple[int, int, int]
    stride: tuple[int, int, int]
    weights: np.ndarray
    origins: tuple[tuple[int, int, int], ...]

    def tile(self, origin: tuple[int, int, int]) -> tuple[slice, slice, slice]:
        return tuple(slice(o, o + w) for o, w in zip(origin, self.window))  # type: ignore[return-value]

    def __len__(self) -> int:
        return len(self.origins)


def gaussian_weight_map(
    window: tuple[int, ...], sigma_fraction: float = 0.125, floor: float = 1e-8
) -> np.ndarray:
    """
    Separable Gaussian centered mid-window with sigma ``extent * sigma_fraction``.

    The continuous peak is 1 at ``(extent - 1) / 2`` per axis. An odd window
    has a voxel there, weighted exactly 1; an even window does not, so its
    largest weight is ``exp(-3 * 0.5**2 / (2 * sigma**2))`` and stays below 1.
    The map is not rescaled, since aggregation divides by the summed weights.
    Values below ``floor`` are raised to it.
    """
    if any(e < 1 for e in window):
        raise GeometryError(f"Window extents must be positive, got {window}")
    axes = []
    for extent in window:
        sigma = extent * sigma_fraction
        offsets = np.arange(extent, dtype=np.float64) - (extent - 1) / 2.0
        axes.append(np.exp(-(offsets**2) / (2.0 * sigma**2)))
    weights = axes[0][:, None, None] * axes[1][None, :, None] * axes[2][None, None, :]
    return np.maximum(weights, floor)


def _axis_origins(extent: int, window: int, stride: int) -> list[int]:
    origins = list(range(0, extent - window + 1, stride))
    if origins[-1] != extent - window:
        origins.append(extent - window)
    return origins


def plan_windows(
    extents: tuple[int, ...],
    window: tuple[int, int, int],
    stride_fraction: float = 0.5,
    sigma_fraction: float = 0.125,
    floor: float = 1e-8,
) -> WindowPlan:
    """
    Plan tiles for a volume of ``extents``.

    Raises:
        GeometryError: Window larger than the volume
    """
    extents = tuple(int(e) for e in extents)
    if len(extents) != 3:
        raise GeometryError(f"Expected three volume extents, got {extents}")
    if any(w > e for w, e in zip(window, extents)):
        raise GeometryError(f"Window {window} exceeds volume extents {extents}")
    stride = tuple(max(1, int(w * stride_fraction)) for w in window)
    origins = tuple(
        itertools.product(*(_axis_origins(e, w, s) for e, w, s in zip(extents, window, stride)))
    )
    return WindowPlan(
        extents=extents,  # type: ignore[arg-type]
        window=tuple(window),  # type: ignore[arg-type]
        stride=stride,  # type: ignore[arg-type]
        weights=gaussian_weight_map(window, sigma_fraction, floor),
        origins=origins,  # type: ignore[arg-type]
    )


def predict_tiles(
    volume: np.ndarray, predictor: Predictor, plan: WindowPlan, tile_batch: int = 4
) -> np.ndarray:
    """
    Aggregate ``predictor`` outputs over the planned tiles.

    ``predictor`` maps ``[B, 1, *window]`` to ``[B, 1, *window]``.
    Accumulation runs in float64 in tile order.
    """
    if volume.shape != plan.extents:
        raise GeometryError(f"Volume extents {volume.shape} != planned {plan.extents}")
    numerator = np.zeros(plan.extents, dtype=np.float64)
    denominator = np.zeros(plan.extents, dtype=np.float64)
    for start in range(0, len(plan.origins), tile_batch):
        chunk = plan.origins[start : start + tile_batch]
        tiles = np.stack([volume[plan.tile(origin)] for origin in chunk])[:, None]
        outputs = predictor(tiles)
        for origin, out in zip(chunk, outputs):
            region = plan.tile(origin)
            numerator[region] += plan.weights * out[0]
            denominator[region] += plan.weights
    if not np.all(denominator > 0):
        raise GeometryError("Sliding-window plan leaves voxels uncovered")
    return numerator / denominator


def network_predictor(network: Network, task: int, path: str = "merged") -> Predictor:
    def predict(tiles: np.ndarray) -> np.ndarray:
        return network.forward(tiles.astype(network.dtype, copy=False), task, path=path)

    return predict


def sliding_window_predict(
    volume: np.ndarray,
    network: Network,
    task: int,
    plan: WindowPlan,
    *,
    path: str = "merged",
    tile_batch: int = 4,
) -> np.ndarray:
    """
    Full-volume prediction of ``task`` for a ``[D, H, W]`` volume.

    Returns:
        Prediction in the network's dtype
    """
    predictor = network_predictor(network, task, path)
    prediction = predict_tiles(volume, predictor, plan, tile_batch)
    return prediction.astype(network.dtype)


def evaluate(
    network: Network | Mapping[int, Network],
    loader: BaseSampleLoader,
    config: EvalConfig,
    split: str = "test",
    *,
    tasks: set[int] | None = None,
    path: str = "merged",
) -> MetricsReport:
    """
    Score every sample of ``split`` against its single labeled structure.

    Args:
        network: One network for every task, or a mapping task -> network
            (one single-task network per structure)
        loader: Sample source
        config: Window and weighting settings
        split: "train", "val" or "test"
        tasks: Restrict to samples with these labels

    Returns:
        Metrics report with one row per image
    """
    report = MetricsReport()
    plans: dict[tuple[int, ...], WindowPlan] = {}
    for sample in loader.split(split):
        if tasks is not None and sample.label not in tasks:
            continue
        model = network[sample.label] if isinstance(network, Mapping) else network
        extents = sample.input.extents
        if extents not in plans:
            plans[extents] = plan_windows(
                extents,
                config.window,
                config.stride_fraction,
                config.sigma_fraction,
                config.weight_floor,
            )
        pred = sliding_window_predict(
            sample.input.data,
            model,
            sample.label,
            plans[extents],
            path=path,
            tile_batch=config.tile_batch,
        )
        row = report.add(sample.sample_id, sample.label, pred, sample.target.data)
        logger.debug(f"{sample.sample_id} (task {sample.label}): mse={row.mse:.5f} r2={row.r2:.4f}")
    if not report.images:
        logger.warning(f"No {split} samples to evaluate")
    return report
