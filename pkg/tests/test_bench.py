"""Tests for the forward-cost benchmark."""

import pytest

from repmode.bench import BenchConfig, BenchReport, StrategyTiming, run_benchmark
from repmode.exceptions import ConfigError


class TestBenchConfig:
    """Test BenchConfig validation."""

    def test_channel_mismatch(self):
        """Should raise ConfigError when the input channels differ."""
        with pytest.raises(ConfigError):
            BenchConfig(channels=4, input_shape=(1, 8, 4, 4, 4))

    def test_rank(self):
        """Should raise ConfigError for a non rank-5 shape."""
        with pytest.raises(ConfigError):
            BenchConfig(channels=4, input_shape=(4, 4, 4, 4))

    def test_from_mapping(self):
        """Should read every key."""
        config = BenchConfig.from_mapping(
            {"channels": 2, "input_shape": [1, 2, 4, 4, 4], "repetitions": 3, "experts": "plain"}
        )
        assert config.input_shape == (1, 2, 4, 4, 4)
        assert config.experts == "plain"


class TestRunBenchmark:
    """Test run_benchmark."""

    def test_small_block(self):
        """Should time both strategies and report agreement."""
        config = BenchConfig(channels=2, input_shape=(1, 2, 4, 4, 4), repetitions=2, warmup=0)
        report = run_benchmark(config, seed=1)
        assert report.merged.strategy == "merged"
        assert len(report.branchwise.times) == 2
        assert report.max_rel <= 1e-4
        assert report.merged.peak_bytes > 0
        assert "time saving" in report.render()
        assert {"time_saving", "memory_saving", "merged"} <= set(report.to_mapping())


class TestBenchReport:
    """Test derived savings."""

    def test_savings(self):
        """Savings should be one minus the merged/branchwise ratio."""
        config = BenchConfig(channels=2, input_shape=(1, 2, 4, 4, 4))
        report = BenchReport(
            StrategyTiming("merged", 1.0, 0.0, 100, (1.0,)),
            StrategyTiming("branchwise", 4.0, 0.0, 400, (4.0,)),
            0.0,
            0.0,
            config,
        )
        assert report.time_saving == pytest.approx(0.75)
        assert report.memory_saving == pytest.approx(0.75)
