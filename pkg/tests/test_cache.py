"""Tests for KernelCache."""

import numpy as np

from repmode.cache import KernelCache
from repmode.gatrep import MergedKernel


def kernel(value=0.0):
    return MergedKernel(np.full((1, 1, 1, 1, 1), value))


class TestKernelCache:
    """Test KernelCache functionality."""

    def test_miss_then_hit(self):
        """Should return None until a kernel is set."""
        cache = KernelCache()
        assert cache.get("enc0.block0", "abc", 1) is None
        merged = kernel()
        cache.set("enc0.block0", "abc", merged, 1)
        assert cache.get("enc0.block0", "abc", 1) is merged
        assert cache.stats()["hits"] == 1
        assert cache.stats()["misses"] == 1

    def test_version_isolates(self):
        """A newer version should not see older kernels."""
        cache = KernelCache()
        cache.set("b", "abc", kernel(), 1)
        assert cache.get("b", "abc", 2) is None

    def test_lru_eviction(self):
        """Least recently used kernels should be evicted first."""
        cache = KernelCache(maxsize=2)
        cache.set("a", "d", kernel(1), 0)
        cache.set("b", "d", kernel(2), 0)
        cache.get("a", "d", 0)
        cache.set("c", "d", kernel(3), 0)
        assert cache.get("b", "d", 0) is None
        assert cache.get("a", "d", 0) is not None
        assert len(cache) == 2

    def test_clear_block(self):
        """clear(block) should drop only that block's kernels."""
        cache = KernelCache()
        cache.set("enc0.block0", "d", kernel(), 0)
        cache.set("enc0.block1", "d", kernel(), 0)
        cache.clear("enc0.block0")
        assert cache.get("enc0.block0", "d", 0) is None
        assert cache.get("enc0.block1", "d", 0) is not None
        cache.clear()
        assert len(cache) == 0
