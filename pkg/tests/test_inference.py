"""Tests for sliding-window inference."""

import math

import numpy as np
import pytest

from repmode.exceptions import ConfigError, GeometryError
from repmode.inference import (
    EvalConfig,
    evaluate,
    gaussian_weight_map,
    plan_windows,
    predict_tiles,
    sliding_window_predict,
)


def brute_force(volume, predictor, window, origins, weights):
    """Weighted average written out voxel by voxel over tiles."""
    numerator = np.zeros(volume.shape)
    denominator = np.zeros(volume.shape)
    for origin in origins:
        d, h, w = origin
        tile = volume[d : d + window[0], h : h + window[1], w : w + window[2]]
        out = predictor(tile[None, None])[0, 0]
        for i in range(window[0]):
            for j in range(window[1]):
                for k in range(window[2]):
                    numerator[d + i, h + j, w + k] += weights[i, j, k] * out[i, j, k]
                    denominator[d + i, h + j, w + k] += weights[i, j, k]
    return numerator / denominator


class TestGaussianWeightMap:
    """Test the importance map."""

    def test_odd_center_is_one(self):
        """An odd window's center voxel should weigh exactly 1."""
        weights = gaussian_weight_map((5, 7, 9))
        assert weights[2, 3, 4] == 1.0
        assert weights.max() == 1.0

    def test_corner_value(self):
        """With sigma 2 the corner of a 16³ window should be exp(-3 * 7.5² / 8)."""
        weights = gaussian_weight_map((16, 16, 16), 0.125, 0.0)
        assert weights[0, 0, 0] == pytest.approx(math.exp(-3 * 7.5**2 / 8), rel=1e-9)

    def test_even_window_peak_below_one(self):
        """An even window should peak between voxels, so its largest weight is below 1."""
        weights = gaussian_weight_map((16, 16, 16), 0.125, 0.0)
        peak = math.exp(-3 * 0.5**2 / 8)
        assert weights.max() == pytest.approx(peak, rel=1e-12)
        assert weights.max() < 1.0
        np.testing.assert_allclose(weights[7:9, 7:9, 7:9], peak, rtol=1e-12)
        assert np.argwhere(weights == weights.max()).shape == (8, 3)

    def test_floor(self):
        """Weights should never drop below the floor."""
        weights = gaussian_weight_map((32, 32, 32), 0.05, 1e-3)
        assert weights.min() == pytest.approx(1e-3)

    def test_symmetric(self):
        """The map should be symmetric along every axis."""
        weights = gaussian_weight_map((4, 6, 8))
        np.testing.assert_array_equal(weights, weights[::-1, ::-1, ::-1])


class TestPlanWindows:
    """Test tile placement."""

    def test_exact_fit(self):
        """Origins should step by half a window."""
        plan = plan_windows((10, 8, 8), (4, 8, 8))
        assert [o[0] for o in plan.origins] == [0, 2, 4, 6]
        assert plan.stride == (2, 4, 4)

    def test_last_tile_shifted_inward(self):
        """The last tile should end on the boundary."""
        plan = plan_windows((9, 4, 4), (4, 4, 4))
        assert sorted({o[0] for o in plan.origins}) == [0, 2, 4, 5]

    def test_window_too_large(self):
        """Should raise GeometryError when the window exceeds the volume."""
        with pytest.raises(GeometryError):
            plan_windows((4, 4, 4), (8, 4, 4))

    def test_eval_config_validation(self):
        """Should raise ConfigError for bad settings."""
        with pytest.raises(ConfigError):
            EvalConfig(window=(4, 4, 4), stride_fraction=0.0)
        with pytest.raises(ConfigError):
            EvalConfig(window=(4, 4))


class TestPredictTiles:
    """Test tile aggregation."""

    def test_constant_predictor(self, rng):
        """A constant predictor should give a constant volume."""
        volume = rng.standard_normal((9, 10, 11))
        plan = plan_windows(volume.shape, (4, 4, 6))
        out = predict_tiles(volume, np.ones_like, plan)
        np.testing.assert_allclose(out, 1.0, rtol=1e-12)

    def test_matches_brute_force(self, rng):
        """Aggregation should match an explicit voxel loop."""
        volume = rng.standard_normal((7, 6, 9))
        plan = plan_windows(volume.shape, (4, 4, 4))

        def predictor(tiles):
            return tiles**2 + np.arange(tiles.shape[-1])

        expected = brute_force(volume, predictor, plan.window, plan.origins, plan.weights)
        actual = predict_tiles(volume, predictor, plan, tile_batch=3)
        np.testing.assert_allclose(actual, expected, rtol=1e-12)

    def test_identity_predictor(self, rng):
        """The identity predictor should reproduce the volume."""
        volume = rng.standard_normal((8, 8, 8))
        plan = plan_windows(volume.shape, (4, 4, 4))
        np.testing.assert_allclose(predict_tiles(volume, lambda t: t, plan), volume, rtol=1e-12)

    def test_extent_mismatch(self, rng):
        """Should raise GeometryError for a volume the plan was not made for."""
        plan = plan_windows((8, 8, 8), (4, 4, 4))
        with pytest.raises(GeometryError):
            predict_tiles(np.zeros((8, 8, 9)), lambda t: t, plan)


class TestSlidingWindowPredict:
    """Test network inference over full volumes."""

    def test_single_tile_is_direct_forward(self, tiny_network, rng):
        """A window covering the volume should equal one forward pass."""
        volume = rng.standard_normal((4, 8, 8))
        plan = plan_windows(volume.shape, (4, 8, 8))
        assert len(plan) == 1
        direct = tiny_network.forward(volume[None, None], 1)[0, 0]
        out = sliding_window_predict(volume, tiny_network, 1, plan)
        np.testing.assert_allclose(out, direct, rtol=1e-10, atol=1e-12)

    def test_output_shape_and_dtype(self, tiny_network, rng):
        """Output should match the volume extents in the network dtype."""
        volume = rng.standard_normal((6, 10, 12)).astype(np.float32)
        plan = plan_windows(volume.shape, (2, 4, 4))
        out = sliding_window_predict(volume, tiny_network, 2, plan, tile_batch=7)
        assert out.shape == volume.shape
        assert out.dtype == np.float64


class TestEvaluate:
    """Test split evaluation."""

    def test_scores_test_split(self, tiny_network, memory_loader):
        """Should score every test image once."""
        report = evaluate(tiny_network, memory_loader, EvalConfig(window=(4, 8, 8)))
        assert [row.sample_id for row in report.images] == ["c1s3", "c2s3"]
        assert all(np.isfinite(row.mse) for row in report.images)

    def test_task_filter(self, tiny_network, memory_loader):
        """Should restrict scoring to the given labels."""
        report = evaluate(tiny_network, memory_loader, EvalConfig(window=(4, 8, 8)), tasks={2})
        assert report.labels == [2]

    def test_network_per_task(self, tiny_network, memory_loader):
        """A task -> network mapping should route samples by label."""
        config = EvalConfig(window=(4, 8, 8))
        single = evaluate(tiny_network, memory_loader, config, split="val")
        mapped = evaluate({1: tiny_network, 2: tiny_network}, memory_loader, config, split="val")
        assert single.images == mapped.images
