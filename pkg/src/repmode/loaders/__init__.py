"""
Sample loaders for repmode.

Available loaders:
    - ManifestSampleLoader: Load samples listed in a dataset manifest
    - InMemorySampleLoader: Serve samples held in memory
    - BaseSampleLoader: Abstract base class for custom loaders
"""

from .base import BaseSampleLoader
from .manifest import ManifestSampleLoader
from .memory import InMemorySampleLoader

__all__ = [
    "BaseSampleLoader",
    "InMemorySampleLoader",
    "ManifestSampleLoader",
]
