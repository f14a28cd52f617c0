"""Forward-pass record consumed by the backward pass."""

from __future__ import annotations

from typing import Any

import numpy as np

from .exceptions import CacheError


class Tape:
    """
    Per-layer activation caches keyed by layer name, in forward order.

    Layers record whatever their backward needs; ``fetch`` raises
    CacheError when a layer never ran forward under this tape.
    """

    def __init__(self) -> None:
        self._records: dict[str, Any] = {}

    def record(self, name: str, cache: Any) -> None:
        self._records[name] = cache

    def fetch(self, name: str) -> Any:
        try:
            return self._records[name]
        except KeyError:
            raise CacheError(f"No forward record for '{name}'; run forward with a tape") from None

    def names(self) -> list[str]:
        return list(self._records)

    def activation_pattern(self) -> bytes:
        """Packed ReLU on/off signature of every recorded layer."""
        parts = []
        for cache in self._records.values():
            relu_input = getattr(cache, "relu_input", None)
            if relu_input is not None:
                parts.append(np.packbits(relu_input > 0).tobytes())
        return b"".join(parts)

    def clear(self) -> None:
        self._records.clear()

    def __contains__(self, name: str) -> bool:
        return name in self._records

    def __len__(self) -> int:
        return len(self._records)
