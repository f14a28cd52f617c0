"""
Expert registry - Thread-safe singleton for expert inventories.

An inventory is the ordered list of experts every MoDE block of a network
is built with. Order matters: stored gate vectors and checkpoints index
experts by position.

Usage:
    from repmode.registry import experts

    # Resolve a named inventory
    specs = experts.get("default")

    # Comma lists work too
    specs = experts.get("conv1,conv3,avgp3")

    # Register a custom inventory
    experts.register("wide", ["conv3", "conv5", "avgp5"])
"""

from __future__ import annotations

import logging
import threading
from collections.abc import Iterable

from .exceptions import ConfigError, GeometryError
from .gatrep import ExpertSpec

logger = logging.getLogger(__name__)

BUILTIN_INVENTORIES: dict[str, tuple[str, ...]] = {
    "default": ("conv1", "conv3", "avgp3", "conv5", "avgp5"),
    "wo_1x1_pair": ("conv3", "avgp3", "conv5", "avgp5"),
    "wo_3x3_pair": ("conv1", "conv5", "avgp5"),
    "wo_5x5_pair": ("conv1", "conv3", "avgp3"),
    # Avgp-Conv experts only
    "wo_conv": ("conv1", "avgp3", "avgp5"),
    # Conv experts only
    "wo_avgp_conv": ("conv1", "conv3", "conv5"),
    # Avgp-Conv experts lose their pooling and become Conv 1 experts
    "wo_avgp": ("conv1", "conv3", "conv1", "conv5", "conv1"),
    "all_avgp3": ("conv1", "conv3", "avgp3", "conv5", "avgp3"),
    "all_avgp5": ("conv1", "conv3", "avgp5", "conv5", "avgp5"),
    # Single Conv 3 expert, used by the plain baselines
    "plain": ("conv3",),
}

BUILTIN_ALIASES: dict[str, str] = {
    "full": "default",
    "conv_only": "wo_avgp_conv",
    "avgp_only": "wo_conv",
}


class ExpertRegistry:
    """
    Thread-safe singleton registry of expert inventories.

    The registry supports:
    - Named inventories (the built-in ablation subsets and custom ones)
    - Aliases for alternative names
    - Inline comma lists such as ``"conv1,conv3"``
    """

    _instance: ExpertRegistry | None = None
    _lock = threading.RLock()

    def __new__(cls) -> ExpertRegistry:
        """Create singleton instance."""
        if cls._instance is None:
            with cls._lock:
                # Double-check locking pattern
                if cls._instance is None:
                    cls._instance = super().__new__(cls)
                    cls._instance._initialize()
        return cls._instance

    def _initialize(self) -> None:
        """Initialize registry state."""
        self._inventories: dict[str, tuple[ExpertSpec, ...]] = {}
        self._aliases: dict[str, str] = {}
        for name, tokens in BUILTIN_INVENTORIES.items():
            self.register(name, tokens)
        for alias, target in BUILTIN_ALIASES.items():
            self.register_alias(alias, target)

    def register(self, name: str, tokens: Iterable[str | ExpertSpec]) -> tuple[ExpertSpec, ...]:
        """
        Register a named inventory.

        Args:
            name: Inventory name (no commas)
            tokens: Expert labels or specs in block order

        Returns:
            The registered expert specs
        """
        if not name or "," in name:
            raise ConfigError(f"Invalid inventory name '{name}'")
        specs = tuple(t if isinstance(t, ExpertSpec) else ExpertSpec.parse(t) for t in tokens)
        if not specs:
            raise ConfigError(f"Inventory '{name}' has no experts")
        with self._lock:
            if name in self._inventories:
                logger.debug(f"Replacing expert inventory '{name}'")
            self._inventories[name] = specs
        return specs

    def register_alias(self, alias: str, target: str) -> None:
        """Create an alias for a registered inventory."""
        self._aliases[alias] = target

    def get(self, name: str) -> tuple[ExpertSpec, ...]:
        """
        Resolve an inventory.

        Supports multiple formats:
        - "default" -> registered inventory
        - "full" -> alias of a registered inventory
        - "conv1,conv3,avgp5" -> inline list

        Raises:
            ConfigError: Unknown name or invalid inline expert
        """
        name = name.strip()
        name = self._aliases.get(name, name)
        if name in self._inventories:
            return self._inventories[name]
        if "," in name or name.startswith(("conv", "avgp")):
            try:
                return tuple(ExpertSpec.parse(token) for token in name.split(",") if token.strip())
            except GeometryError as exc:
                raise ConfigError(str(exc)) from exc
        raise ConfigError(
            f"Unknown expert inventory '{name}'. Available: {', '.join(self.list_inventories())}"
        )

    def has(self, name: str) -> bool:
        try:
            self.get(name)
        except ConfigError:
            return False
        return True

    def list_inventories(self) -> list[str]:
        return sorted(self._inventories)

    def clear(self) -> None:
        """Drop custom inventories and restore the built-in ones."""
        with self._lock:
            self._inventories.clear()
            self._aliases.clear()
        for name, tokens in BUILTIN_INVENTORIES.items():
            self.register(name, tokens)
        for alias, target in BUILTIN_ALIASES.items():
            self.register_alias(alias, target)

    def __contains__(self, name: str) -> bool:
        return self.has(name)

    def __len__(self) -> int:
        return len(self._inventories)


# Global registry instance
experts = ExpertRegistry()
