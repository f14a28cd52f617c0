"""
Merged vs branchwise forward cost of one MoDE block.

Wall time comes from ``time.perf_counter`` over repeated forwards after
warmup; memory is the ``tracemalloc`` peak of one extra forward, a proxy
for allocation volume (numpy reports its buffers to tracemalloc).
"""

from __future__ import annotations

import logging
import time
import tracemalloc
from collections.abc import Callable
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from .equivalence import deviation
from .exceptions import ConfigError, ToleranceError
from .mode import GatingConfig, TaskEmbedder, init_mode_block, mode_forward
from .registry import experts

logger = logging.getLogger(__name__)

AGREEMENT_TOLERANCE = 1e-4


@dataclass(frozen=True)
class BenchConfig:
    channels: int = 64
    input_shape: tuple[int, int, int, int, int] = (1, 64, 16, 32, 32)
    repetitions: int = 50
    warmup: int = 3
    experts: str = "default"

    def __post_init__(self) -> None:
        if len(self.input_shape) != 5:
            raise ConfigError(f"bench.input_shape needs five extents, got {self.input_shape}")
        if self.input_shape[1] != self.channels:
            raise ConfigError(
                f"bench.input_shape channel extent {self.input_shape[1]} != channels {self.channels}"
            )
        if self.repetitions < 1 or self.warmup < 0:
            raise ConfigError("bench.repetitions must be >= 1 and bench.warmup >= 0")

    @classmethod
    def from_mapping(cls, mapping: dict[str, Any]) -> BenchConfig:
        return cls(
            channels=int(mapping.get("channels", 64)),
            input_shape=tuple(int(e) for e in mapping.get("input_shape", (1, 64, 16, 32, 32))),  # type: ignore[arg-type]
            repetitions=int(mapping.get("repetitions", 50)),
            warmup=int(mapping.get("warmup", 3)),
            experts=str(mapping.get("experts", "default")),
        )


@dataclass(frozen=True)
class StrategyTiming:
    strategy: str
    median: float
    iqr: float
    peak_bytes: int
    times: tuple[float, ...]


@dataclass(frozen=True)
class BenchReport:
    merged: StrategyTiming
    branchwise: StrategyTiming
    max_abs: float
    max_rel: float
    config: BenchConfig

    @property
    def time_saving(self) -> float:
        """Fraction of branchwise median time saved by merging."""
        return 1.0 - self.merged.median / self.branchwise.median

    @property
    def memory_saving(self) -> float:
        return 1.0 - self.merged.peak_bytes / self.branchwise.peak_bytes

    def to_mapping(self) -> dict[str, Any]:
        mapping = asdict(self)
        mapping["time_saving"] = self.time_saving
        mapping["memory_saving"] = self.memory_saving
        return mapping

    def render(self) -> str:
        lines = [f"{'strategy':<12}{'median ms':>12}{'iqr ms':>10}{'peak MiB':>10}"]
        for timing in (self.merged, self.branchwise):
            lines.append(
                f"{timing.strategy:<12}{timing.median * 1e3:>12.2f}{timing.iqr * 1e3:>10.2f}"
                f"{timing.peak_bytes / 2**20:>10.2f}"
            )
        lines.append(
            f"time saving {self.time_saving:.1%}, memory saving {self.memory_saving:.1%}, "
            f"max rel deviation {self.max_rel:.2e}"
        )
        return "\n".join(lines) + "\n"


def _time(fn: Callable[[], np.ndarray], repetitions: int, warmup: int) -> tuple[float, ...]:
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repetitions):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return tuple(times)


def _peak_bytes(fn: Callable[[], np.ndarray]) -> int:
    tracemalloc.start()
    try:
        fn()
        return tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()


def _summarize(strategy: str, times: tuple[float, ...], peak: int) -> StrategyTiming:
    q1, median, q3 = np.percentile(times, [25, 50, 75])
    return StrategyTiming(strategy, float(median), float(q3 - q1), peak, times)


def run_benchmark(config: BenchConfig, seed: int = 0) -> BenchReport:
    """
    Time both forward strategies of one float32 MoDE block.

    The merged strategy includes gating and kernel merging in every call.

    Raises:
        ToleranceError: Outputs disagree beyond ``AGREEMENT_TOLERANCE``
    """
    rng = np.random.default_rng(seed)
    specs = experts.get(config.experts)
    gating = GatingConfig()
    block = init_mode_block(
        config.channels, config.channels, specs, gating, 1, rng, np.float32, bn=False, relu=False
    )
    if block.gating is not None:
        for weight in block.gating.weights:
            weight[...] = rng.standard_normal(weight.shape)
    task = TaskEmbedder.create(1, gating.embedding, seed, np.float32).embed(1)
    x = rng.standard_normal(config.input_shape).astype(np.float32)

    def merged() -> np.ndarray:
        return mode_forward(x, block, task, "merged", "infer")

    def branchwise() -> np.ndarray:
        return mode_forward(x, block, task, "branchwise", "infer")

    max_abs, max_rel = deviation(merged(), branchwise())
    if max_rel > AGREEMENT_TOLERANCE:
        raise ToleranceError(
            f"Merged and branchwise outputs disagree: rel {max_rel:.3e} > {AGREEMENT_TOLERANCE}"
        )

    timings = {}
    for name, fn in (("merged", merged), ("branchwise", branchwise)):
        logger.info(f"Timing {name}: {config.repetitions} repetitions after {config.warmup} warmup")
        times = _time(fn, config.repetitions, config.warmup)
        timings[name] = _summarize(name, times, _peak_bytes(fn))
    return BenchReport(timings["merged"], timings["branchwise"], max_abs, max_rel, config)
