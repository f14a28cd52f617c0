"""In-memory sample loader for tests and in-process data."""

from __future__ import annotations

from collections.abc import Iterable

from ..volumes import Sample
from .base import BaseSampleLoader


class InMemorySampleLoader(BaseSampleLoader):
    """Serve samples held in a dict, in insertion order."""

    def __init__(self, samples: Iterable[Sample] = ()) -> None:
        self._samples: dict[str, Sample] = {}
        for sample in samples:
            self.add(sample)

    def add(self, sample: Sample) -> None:
        self._samples[sample.sample_id] = sample

    def load(self, sample_id: str) -> Sample | None:
        return self._samples.get(sample_id)

    def list(self) -> list[str]:
        return list(self._samples)

    def __len__(self) -> int:
        return len(self._samples)

    def __repr__(self) -> str:
        return f"InMemorySampleLoader({len(self._samples)} samples)"
