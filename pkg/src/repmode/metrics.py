"""
Prediction metrics and reports.

Per-image MSE, MAE and R² are averaged over images for the overall row;
``delta_imp`` gives the direction-corrected relative improvement of a
metric over a baseline, in percent.
"""

from __future__ import annotations

import json
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from .exceptions import DimensionError, FormatError, StatisticsError
from .fileio import write_text_atomic
from .synth import StructureProfile

METRIC_NAMES = ("mse", "mae", "r2")
LOWER_IS_BETTER = {"mse": True, "mae": True, "r2": False}


def metrics(pred: np.ndarray, label: np.ndarray) -> tuple[float, float, float]:
    """
    MSE, MAE and R² of ``pred`` against ``label`` over all voxels.

    Raises:
        DimensionError: Shapes differ
        StatisticsError: Constant label (R² undefined)
    """
    if pred.shape != label.shape:
        raise DimensionError(f"Prediction shape {pred.shape} != label shape {label.shape}")
    y = label.astype(np.float64).ravel()
    f = pred.astype(np.float64).ravel()
    if y.size == 0:
        raise StatisticsError("Cannot score an empty volume")
    residual = y - f
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise StatisticsError("R² is undefined for a constant label")
    mse = float(np.mean(residual**2))
    mae = float(np.mean(np.abs(residual)))
    r2 = 1.0 - float(np.sum(residual**2)) / ss_tot
    return mse, mae, r2


def delta_imp(value: float, baseline: float, lower_is_better: bool) -> float:
    """
    Relative improvement of ``value`` over ``baseline`` in percent.

    Positive means better, whichever direction the metric runs.

    Raises:
        StatisticsError: Zero baseline
    """
    if baseline == 0:
        raise StatisticsError("Δ_Imp is undefined for a zero baseline")
    sign = -1.0 if lower_is_better else 1.0
    return sign * (value - baseline) / baseline * 100.0


class ImageMetrics(NamedTuple):
    sample_id: str
    label: int
    mse: float
    mae: float
    r2: float

    def get(self, metric: str) -> float:
        return float(getattr(self, metric))


def _mean_row(rows: Iterable[ImageMetrics]) -> dict[str, float]:
    rows = list(rows)
    if not rows:
        return {name: float("nan") for name in METRIC_NAMES}
    return {name: float(np.mean([row.get(name) for row in rows])) for name in METRIC_NAMES}


@dataclass
class MetricsReport:
    """Per-image metrics with per-structure and overall means."""

    images: list[ImageMetrics] = field(default_factory=list)

    def add(self, sample_id: str, label: int, pred: np.ndarray, target: np.ndarray) -> ImageMetrics:
        row = ImageMetrics(sample_id, label, *metrics(pred, target))
        self.images.append(row)
        return row

    @property
    def labels(self) -> list[int]:
        return sorted({row.label for row in self.images})

    def per_structure(self) -> dict[int, dict[str, float]]:
        return {
            label: _mean_row(row for row in self.images if row.label == label)
            for label in self.labels
        }

    def overall(self) -> dict[str, float]:
        """Arithmetic mean over all images."""
        return _mean_row(self.images)

    def delta_imp(self, baseline: MetricsReport) -> dict[str, float]:
        """Overall Δ_Imp of this report against ``baseline``, per metric."""
        ours, theirs = self.overall(), baseline.overall()
        return {
            name: delta_imp(ours[name], theirs[name], LOWER_IS_BETTER[name])
            for name in METRIC_NAMES
        }

    def render_table(self, baseline: MetricsReport | None = None) -> str:
        """
        Plain-text table: one row per structure, the overall row, and a
        Δ_Imp row when ``baseline`` is given.
        """
        header = f"{'structure':<16}{'MSE':>12}{'MAE':>12}{'R2':>12}"
        lines = [header, "-" * len(header)]

        def row(title: str, values: dict[str, float], fmt: str = ".4f") -> str:
            cells = "".join(f"{values[name]:>12{fmt}}" for name in METRIC_NAMES)
            return f"{title:<16}{cells}"

        for label, values in self.per_structure().items():
            kind = StructureProfile.for_class(label - 1).kind.value
            lines.append(row(f"{label} ({kind})", values))
        lines.append(row("overall", self.overall()))
        if baseline is not None:
            lines.append(row("delta_imp %", self.delta_imp(baseline), ".3f"))
        return "\n".join(lines) + "\n"

    def to_mapping(self) -> dict[str, Any]:
        return {
            "images": [row._asdict() for row in self.images],
            "per_structure": {str(k): v for k, v in self.per_structure().items()},
            "overall": self.overall(),
        }

    @classmethod
    def from_mapping(cls, mapping: dict[str, Any]) -> MetricsReport:
        try:
            images = [
                ImageMetrics(
                    str(item["sample_id"]),
                    int(item["label"]),
                    float(item["mse"]),
                    float(item["mae"]),
                    float(item["r2"]),
                )
                for item in mapping["images"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"Malformed metrics report: {exc}") from exc
        return cls(images)

    def write(self, directory: str | Path, baseline: MetricsReport | None = None) -> Path:
        """Write ``metrics.txt`` and ``metrics.json`` into ``directory``."""
        root = Path(directory)
        root.mkdir(parents=True, exist_ok=True)
        mapping = self.to_mapping()
        if baseline is not None:
            mapping["delta_imp"] = self.delta_imp(baseline)
        write_text_atomic(root / "metrics.txt", self.render_table(baseline))
        write_text_atomic(root / "metrics.json", json.dumps(mapping, indent=2) + "\n")
        return root / "metrics.json"

    @classmethod
    def read(cls, path: str | Path) -> MetricsReport:
        try:
            with open(path, encoding="utf-8") as handle:
                mapping = json.load(handle)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc
        return cls.from_mapping(mapping)
