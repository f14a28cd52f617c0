"""
Merged-kernel cache for repmode.

At inference a MoDE block's merged kernel depends only on its parameters
and the task, so it is computed once per (block, task, parameter version)
and reused for every tile of a sliding-window pass.

Usage:
    from repmode.cache import kernel_cache

    merged = kernel_cache.get("enc0.block0", embedding.digest, version=net.version)
    if merged is None:
        merged = effective_kernel(block, embedding)
        kernel_cache.set("enc0.block0", embedding.digest, merged, version=net.version)
"""

from __future__ import annotations

import logging
from collections import OrderedDict

from .gatrep import MergedKernel

logger = logging.getLogger(__name__)


class KernelCache:
    """
    LRU in-memory cache of merged kernels.

    Cache keys format: "{block}:{embedding_digest}:{version}". A parameter
    update bumps the network version, so stale kernels are never served;
    they simply age out.
    """

    def __init__(self, maxsize: int = 256) -> None:
        self._maxsize = maxsize
        self._entries: OrderedDict[str, MergedKernel] = OrderedDict()
        self._hits = 0
        self._misses = 0

    @staticmethod
    def _make_key(block: str, digest: str, version: int) -> str:
        return f"{block}:{digest}:{version}"

    def get(self, block: str, digest: str, version: int = 0) -> MergedKernel | None:
        """
        Get a cached merged kernel.

        Args:
            block: Block name, e.g. "dec0.stage1.block0"
            digest: Task embedding digest
            version: Network parameter version

        Returns:
            Cached kernel or None
        """
        key = self._make_key(block, digest, version)
        if key in self._entries:
            self._entries.move_to_end(key)
            self._hits += 1
            return self._entries[key]
        self._misses += 1
        return None

    def set(self, block: str, digest: str, merged: MergedKernel, version: int = 0) -> None:
        """Cache a merged kernel with LRU eviction."""
        key = self._make_key(block, digest, version)
        while len(self._entries) >= self._maxsize:
            evicted, _ = self._entries.popitem(last=False)
            logger.debug(f"Evicted merged kernel {evicted}")
        self._entries[key] = merged
        self._entries.move_to_end(key)

    def clear(self, block: str | None = None) -> None:
        """
        Clear cache.

        Args:
            block: Clear only this block's kernels (None for all)
        """
        if block is None:
            self._entries.clear()
            return
        prefix = f"{block}:"
        for key in [k for k in self._entries if k.startswith(prefix)]:
            del self._entries[key]

    def stats(self) -> dict[str, int]:
        return {
            "size": len(self._entries),
            "maxsize": self._maxsize,
            "hits": self._hits,
            "misses": self._misses,
        }

    def __len__(self) -> int:
        return len(self._entries)


# Global cache instance
kernel_cache = KernelCache()
