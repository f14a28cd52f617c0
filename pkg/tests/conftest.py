"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from repmode.cache import kernel_cache
from repmode.loaders import InMemorySampleLoader
from repmode.mode import GatingConfig
from repmode.net import ArchConfig, build_network
from repmode.synth import BenchmarkSpec, generate_dataset, generate_sample
from repmode.volumes import Sample, Volume


@pytest.fixture(autouse=True)
def clean_kernel_cache():
    """Start every test with an empty merged-kernel cache."""
    kernel_cache.clear()
    yield
    kernel_cache.clear()


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def fresh_registry():
    """Get a fresh registry instance for testing."""
    from repmode.registry import ExpertRegistry

    # Reset singleton for testing
    original = ExpertRegistry._instance
    ExpertRegistry._instance = None
    registry = ExpertRegistry()

    yield registry

    # Restore the process-wide instance
    ExpertRegistry._instance = original


@pytest.fixture
def tiny_config():
    """Depth-1 backbone with two channels and two tasks."""
    return ArchConfig(depth=1, base_channels=2, num_tasks=2, gating=GatingConfig())


@pytest.fixture
def tiny_network(tiny_config, rng):
    """Float64 network built from ``tiny_config``."""
    return build_network(tiny_config, rng, np.float64)


@pytest.fixture
def tiny_spec():
    """Two-class synthetic benchmark with small volumes."""
    return BenchmarkSpec(num_classes=2, samples_per_class=4, extents=(8, 16, 16))


@pytest.fixture
def dataset_dir(tmp_path, tiny_spec):
    """Generated dataset on disk."""
    root = tmp_path / "data"
    generate_dataset(tiny_spec, seed=0, output_dir=root)
    return root


@pytest.fixture
def memory_loader(tiny_spec):
    """Per class: two train, one val and one test sample held in memory."""
    splits = ("train", "train", "val", "test")
    samples = []
    for label in (1, 2):
        for index, split in enumerate(splits):
            x, y = generate_sample(tiny_spec, label, np.random.default_rng([label, index]))
            samples.append(Sample(f"c{label}s{index}", Volume(x), Volume(y), label, split))
    return InMemorySampleLoader(samples)
