"""Tests for ExpertRegistry."""

import threading

import pytest

from repmode.exceptions import ConfigError
from repmode.gatrep import ExpertSpec
from repmode.registry import BUILTIN_INVENTORIES, ExpertRegistry


class TestExpertRegistry:
    """Test ExpertRegistry functionality."""

    def test_singleton_pattern(self, fresh_registry):
        """Registry should be a singleton."""
        registry1 = ExpertRegistry()
        registry2 = ExpertRegistry()
        assert registry1 is registry2

    def test_builtin_default(self, fresh_registry):
        """The default inventory should hold the five expert pairs in order."""
        labels = [spec.label for spec in fresh_registry.get("default")]
        assert labels == ["conv1", "conv3", "avgp3", "conv5", "avgp5"]

    def test_all_builtins_registered(self, fresh_registry):
        """Every built-in inventory should be listed."""
        assert set(BUILTIN_INVENTORIES) <= set(fresh_registry.list_inventories())
        assert len(fresh_registry) == len(BUILTIN_INVENTORIES)

    def test_wo_avgp_drops_pooling(self, fresh_registry):
        """Without pooling, Avgp-Conv experts should become Conv 1 experts."""
        labels = [spec.label for spec in fresh_registry.get("wo_avgp")]
        assert labels == ["conv1", "conv3", "conv1", "conv5", "conv1"]

    def test_register_custom(self, fresh_registry):
        """Should register a custom inventory."""
        specs = fresh_registry.register("wide", ["conv3", "conv5", "avgp5"])
        assert all(isinstance(s, ExpertSpec) for s in specs)
        assert fresh_registry.get("wide") == specs

    def test_alias(self, fresh_registry):
        """Aliases should resolve to their target."""
        assert fresh_registry.get("full") == fresh_registry.get("default")
        fresh_registry.register_alias("mine", "wo_conv")
        assert fresh_registry.get("mine") == fresh_registry.get("wo_conv")

    def test_inline_list(self, fresh_registry):
        """Comma lists should parse without registration."""
        specs = fresh_registry.get("conv1, avgp3")
        assert [s.label for s in specs] == ["conv1", "avgp3"]

    def test_unknown_inventory(self, fresh_registry):
        """Should raise ConfigError for unknown names and bad inline experts."""
        with pytest.raises(ConfigError):
            fresh_registry.get("nonexistent")
        with pytest.raises(ConfigError):
            fresh_registry.get("conv1,avgp1")

    def test_invalid_name(self, fresh_registry):
        """Should reject empty names and names with commas."""
        with pytest.raises(ConfigError):
            fresh_registry.register("a,b", ["conv1"])
        with pytest.raises(ConfigError):
            fresh_registry.register("empty", [])

    def test_has_and_contains(self, fresh_registry):
        """Should support has() and the 'in' operator."""
        assert fresh_registry.has("default")
        assert "conv3,conv5" in fresh_registry
        assert "nonexistent" not in fresh_registry

    def test_clear_restores_builtins(self, fresh_registry):
        """clear() should drop custom inventories and keep built-ins."""
        fresh_registry.register("wide", ["conv5"])
        fresh_registry.clear()
        assert "wide" not in fresh_registry.list_inventories()
        assert fresh_registry.has("default")
        assert fresh_registry.has("full")

    def test_concurrent_registration(self, fresh_registry):
        """Concurrent registrations should all land."""

        def worker(index):
            fresh_registry.register(f"custom{index}", ["conv1", "conv3"])

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(16)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        assert all(fresh_registry.has(f"custom{i}") for i in range(16))
