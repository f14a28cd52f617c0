"""
Manifest sample loader - Load samples listed in a dataset manifest.

Usage:
    from repmode.loaders import ManifestSampleLoader

    loader = ManifestSampleLoader("data/synthetic")
    train = loader.split("train")
"""

from __future__ import annotations

import logging
from pathlib import Path

from ..exceptions import FormatError
from ..volumes import MANIFEST_NAME, ManifestRow, Sample, read_manifest, read_vol
from .base import BaseSampleLoader

logger = logging.getLogger(__name__)


class ManifestSampleLoader(BaseSampleLoader):
    """
    Load samples from ``manifest.tsv`` and the VOL5 files it references.

    Expected structure:
        dataset/
        ├── manifest.tsv
        └── volumes/
            ├── s0000_input.vol
            ├── s0000_target.vol
            └── ...

    Volumes are read lazily on first access and memoized.
    """

    def __init__(self, directory: str | Path) -> None:
        """
        Initialize manifest loader.

        Args:
            directory: Dataset directory containing ``manifest.tsv``
        """
        self.directory = Path(directory)
        self._cache: dict[str, Sample] = {}
        self._rows: dict[str, ManifestRow] | None = None

    def _read_rows(self) -> dict[str, ManifestRow]:
        if self._rows is not None:
            return self._rows
        manifest = self.directory / MANIFEST_NAME
        if not manifest.exists():
            raise FileNotFoundError(f"No manifest at {manifest}")
        rows: dict[str, ManifestRow] = {}
        for row in read_manifest(manifest):
            if row.sample_id in rows:
                raise FormatError(f"{manifest}: duplicate sample id '{row.sample_id}'")
            rows[row.sample_id] = row
        self._rows = rows
        return rows

    def load(self, sample_id: str) -> Sample | None:
        if sample_id in self._cache:
            return self._cache[sample_id]
        row = self._read_rows().get(sample_id)
        if row is None:
            return None
        sample = Sample(
            sample_id=row.sample_id,
            input=read_vol(self.directory / row.input),
            target=read_vol(self.directory / row.target),
            label=row.label,
            split=row.split,
        )
        self._cache[sample_id] = sample
        logger.debug(f"Loaded sample {sample_id}")
        return sample

    def list(self) -> list[str]:
        return list(self._read_rows())

    def rows(self) -> list[ManifestRow]:
        return list(self._read_rows().values())

    def clear_cache(self) -> None:
        """Clear the internal cache."""
        self._cache.clear()
        self._rows = None

    def __repr__(self) -> str:
        return f"ManifestSampleLoader({str(self.directory)!r})"
