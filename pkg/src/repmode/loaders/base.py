"""
Base sample loader abstract class.

Loaders provide lazy access to samples from various sources.
Implement this class to serve samples from a custom store.

Example:
    class NpzLoader(BaseSampleLoader):
        def load(self, sample_id: str) -> Sample | None:
            ...

        def list(self) -> list[str]:
            ...
"""

from __future__ import annotations

from abc import ABC, abstractmethod

from ..volumes import Sample


class BaseSampleLoader(ABC):
    """
    Abstract base class for sample loaders.

    Loaders provide samples from various sources:
    - A manifest plus VOL5 files on disk
    - Samples held in memory
    """

    @abstractmethod
    def load(self, sample_id: str) -> Sample | None:
        """
        Load a sample by id.

        Returns:
            The sample, or None if not found
        """

    @abstractmethod
    def list(self) -> list[str]:
        """
        List all available sample ids.

        Returns:
            Sample ids in a stable order
        """

    def split(self, name: str) -> list[Sample]:
        """Load every sample of split ``name``, in ``list()`` order."""
        samples = []
        for sample_id in self.list():
            sample = self.load(sample_id)
            if sample is not None and sample.split == name:
                samples.append(sample)
        return samples

    def __contains__(self, sample_id: str) -> bool:
        """Check if sample exists (for 'in' operator)."""
        return sample_id in self.list()
