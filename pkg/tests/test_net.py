"""Tests for the backbone, baselines and task-incremental extension."""

import numpy as np
import pytest

from repmode.equivalence import randomize_network
from repmode.exceptions import ConfigError, FormatError, GeometryError
from repmode.mode import GateSource, GatingConfig
from repmode.net import (
    ArchConfig,
    ExtensionSpec,
    ModeScope,
    Variant,
    build_multi_decoder_network,
    build_network,
    build_plain_network,
    count_parameters,
    extend_for_new_task,
    extend_multi_decoder,
    frozen_checksum,
    gate_mass_by_size,
    gating_summary,
    read_gating_summary,
    write_gating_summary,
)


class TestArchConfig:
    """Test ArchConfig validation."""

    def test_invalid_depth(self):
        """Should reject depth 0."""
        with pytest.raises(ConfigError):
            ArchConfig(depth=0)

    def test_unknown_inventory(self):
        """Should reject unknown expert inventories at construction."""
        with pytest.raises(ConfigError):
            ArchConfig(experts="nonexistent")

    def test_descriptor_round_trip(self):
        """to_mapping/from_descriptor should reproduce the config."""
        config = ArchConfig(depth=3, base_channels=4, num_tasks=5, mode_scope=ModeScope.DECODER)
        assert ArchConfig.from_descriptor(config.to_mapping()) == config

    def test_extension_spec_rejects_bad_expert(self):
        """Should raise ConfigError for an invalid extension expert."""
        with pytest.raises(ConfigError):
            ExtensionSpec.from_mapping({"expert": "conv4"})


class TestBuildNetwork:
    """Test backbone construction and forward."""

    def test_channel_trace(self, rng):
        """depth=2, base=8 should trace 1->8->16 and mirror back to 1."""
        network = build_network(ArchConfig(depth=2, base_channels=8), rng)
        assert [s.blocks[0].out_channels for s in network.encoder] == [8, 16]
        assert network.bottleneck[0].out_channels == 32
        decoder = network.decoders[0]
        assert [s.blocks[0].in_channels for s in decoder.stages] == [32, 16]
        assert [s.blocks[-1].out_channels for s in decoder.stages] == [16, 8]
        assert decoder.head.out_channels == 1

    def test_shape_preserved(self, tiny_network, rng):
        """Output extents should equal input extents."""
        x = rng.standard_normal((2, 1, 4, 6, 8))
        assert tiny_network.forward(x, 1).shape == (2, 1, 4, 6, 8)

    def test_indivisible_extents(self, tiny_network):
        """Should raise GeometryError when extents are not divisible by 2**depth."""
        with pytest.raises(GeometryError):
            tiny_network.forward(np.zeros((1, 1, 3, 4, 4)), 1)

    def test_zero_input_finite(self, tiny_network):
        """A zero input should give a finite output."""
        assert np.all(np.isfinite(tiny_network.forward(np.zeros((1, 1, 2, 2, 2)), 2)))

    def test_parameter_count_reproducible(self, tiny_config):
        """Parameter count should depend only on the configuration."""
        a = build_network(tiny_config, np.random.default_rng(0))
        b = build_network(tiny_config, np.random.default_rng(1))
        assert count_parameters(a) == count_parameters(b) > 0

    def test_head_has_bias_no_bn(self, tiny_network):
        """The head block should carry biases and no BN or ReLU."""
        head = tiny_network.decoders[0].head
        assert head.has_bias
        assert head.bn is None
        assert not head.relu

    def test_mode_scope_encoder(self, rng):
        """Encoder scope should gate only encoder blocks."""
        config = ArchConfig(depth=1, base_channels=2, mode_scope=ModeScope.ENCODER)
        network = build_network(config, rng)
        gated = [name for name, _ in network.mode_blocks()]
        assert gated and all(name.startswith("enc") for name in gated)

    def test_plain_network_single_expert(self, tiny_config, rng):
        """The plain baseline should use one Conv 3 expert per block."""
        network = build_plain_network(tiny_config, rng)
        assert network.config.variant is Variant.PLAIN
        assert all(block.num_experts == 1 for _, block in network.named_blocks())
        assert not list(network.mode_blocks())

    def test_multi_decoder(self, tiny_config, rng):
        """The multi-decoder baseline should hold one decoder per task."""
        network = build_multi_decoder_network(tiny_config, rng, np.float64)
        assert len(network.decoders) == tiny_config.num_tasks
        x = rng.standard_normal((1, 1, 2, 4, 4))
        assert not np.allclose(network.forward(x, 1), network.forward(x, 2))


class TestPaths:
    """Test end-to-end merged/branchwise agreement."""

    @pytest.mark.parametrize("mode", ["infer", "train"])
    def test_paths_agree(self, tiny_network, rng, mode):
        """Both paths should agree to 1e-8 on a randomized network."""
        randomize_network(tiny_network, rng)
        x = rng.standard_normal((2, 1, 4, 4, 6))
        merged = tiny_network.forward(x, 2, path="merged", mode=mode)
        branch = tiny_network.forward(x, 2, path="branchwise", mode=mode)
        np.testing.assert_allclose(merged, branch, rtol=1e-8, atol=1e-10)

    def test_cached_inference_matches_uncached(self, tiny_network, rng):
        """Cached merged kernels should reproduce an uncached forward."""
        randomize_network(tiny_network, rng)
        x = rng.standard_normal((1, 1, 2, 4, 4))
        first = tiny_network.forward(x, 1)
        second = tiny_network.forward(x, 1)
        np.testing.assert_array_equal(first, second)
        tiny_network.mark_updated()
        np.testing.assert_array_equal(tiny_network.forward(x, 1), first)

    def test_cache_not_shared_between_networks(self, tiny_config, rng):
        """Networks with equal block names should not reuse each other's kernels."""
        a = build_network(tiny_config, np.random.default_rng(0), np.float64)
        b = build_network(tiny_config, np.random.default_rng(1), np.float64)
        x = rng.standard_normal((1, 1, 2, 4, 4))
        out_a = a.forward(x, 1)
        assert not np.allclose(b.forward(x, 1), out_a)


class TestExtension:
    """Test task-incremental extension."""

    def test_previous_tasks_preserved(self, tiny_network, rng):
        """Replayed gates should reproduce pre-extension outputs bit-for-bit."""
        randomize_network(tiny_network, rng)
        x = rng.standard_normal((1, 1, 2, 4, 4))
        before = {t: tiny_network.forward(x, t) for t in (1, 2)}
        extended = extend_for_new_task(tiny_network, ExtensionSpec(), rng)
        assert extended.num_tasks == 3
        for task, expected in before.items():
            np.testing.assert_array_equal(extended.forward(x, task), expected)

    def test_original_untouched(self, tiny_network, rng):
        """The source network should keep its experts and task count."""
        experts_before = {n: b.num_experts for n, b in tiny_network.named_blocks()}
        extend_for_new_task(tiny_network, ExtensionSpec(), rng)
        assert {n: b.num_experts for n, b in tiny_network.named_blocks()} == experts_before
        assert tiny_network.num_tasks == 2

    def test_freeze_mask(self, tiny_network, rng):
        """Pre-existing experts, BN and resampling weights should be frozen."""
        extended = extend_for_new_task(tiny_network, ExtensionSpec(), rng)
        names = set(extended.parameters())
        original = set(tiny_network.parameters())
        for name in original:
            if ".gating." not in name:
                assert name in extended.frozen
        new_experts = {n for n in names - original if ".expert5." in n}
        assert new_experts
        assert not new_experts & extended.frozen
        assert all(".gating." not in name for name in extended.frozen)

    def test_new_expert_size(self, tiny_network, rng):
        """Each new Conv 3 expert should hold C_O*C_I*27 weights (plus head bias)."""
        extended = extend_for_new_task(tiny_network, ExtensionSpec(), rng)
        for _, block in extended.mode_blocks():
            expert = block.experts[-1]
            assert expert.weight.size == block.out_channels * block.in_channels * 27
            assert (expert.bias is not None) == block.has_bias

    def test_frozen_checksum_stable(self, tiny_network, rng):
        """Checksum of frozen parameters should not change with gating edits."""
        extended = extend_for_new_task(tiny_network, ExtensionSpec(), rng)
        before = frozen_checksum(extended)
        for name, value in extended.parameters().items():
            if name not in extended.frozen:
                value += 1.0
        assert frozen_checksum(extended) == before

    def test_rejects_plain_and_input_gating(self, tiny_config, rng):
        """Extension should need a repmode network with task gating."""
        with pytest.raises(ConfigError):
            extend_for_new_task(build_plain_network(tiny_config, rng), ExtensionSpec(), rng)
        config = ArchConfig(depth=1, base_channels=2, gating=GatingConfig(source=GateSource.INPUT))
        with pytest.raises(ConfigError):
            extend_for_new_task(build_network(config, rng), ExtensionSpec(), rng)

    def test_multi_decoder_extension(self, tiny_config, rng):
        """Multi-decoder extension should add a decoder and freeze nothing."""
        network = build_multi_decoder_network(tiny_config, rng)
        extended = extend_multi_decoder(network, rng)
        assert len(extended.decoders) == 3
        assert extended.num_tasks == 3
        assert not extended.frozen


class TestGatingSummary:
    """Test gate summaries."""

    def test_uniform_untrained(self, tiny_network):
        """Untrained gates should be uniform 1/T everywhere."""
        for values in gating_summary(tiny_network, 1).values():
            np.testing.assert_allclose(values, 0.2)

    def test_softmax_sums_to_one(self, tiny_network, rng):
        """Each summary vector should sum to 1."""
        randomize_network(tiny_network, rng)
        for values in gating_summary(tiny_network, 2).values():
            assert values.sum() == pytest.approx(1.0, abs=1e-6)

    def test_file_rows(self, tiny_network, tmp_path):
        """The file should hold one row per gated block and task."""
        path = tmp_path / "gates.tsv"
        count = write_gating_summary(tiny_network, path)
        blocks = len(list(tiny_network.mode_blocks()))
        assert count == blocks * tiny_network.num_tasks
        summary = read_gating_summary(path)
        assert len(summary) == count

    def test_file_round_trip(self, tiny_network, tmp_path, rng):
        """Read-back rows should equal the in-memory summary for every task."""
        randomize_network(tiny_network, rng)
        path = tmp_path / "gates.tsv"
        write_gating_summary(tiny_network, path)
        summary = read_gating_summary(path)
        for task in (1, 2):
            for name, values in gating_summary(tiny_network, task).items():
                np.testing.assert_array_equal(summary[(task, name)], values)

    def test_malformed_file(self, tmp_path):
        """Should raise FormatError for rows with missing fields or bad numbers."""
        path = tmp_path / "gates.tsv"
        path.write_text("# task\tblock\tgates\n1\tenc0.block0\n")
        with pytest.raises(FormatError):
            read_gating_summary(path)
        path.write_text("1\tenc0.block0\t0.5 x\n")
        with pytest.raises(FormatError):
            read_gating_summary(path)

    def test_gate_mass_by_size(self, tiny_network):
        """Untrained mass should be 2/5 for sizes 3 and 5, 1/5 for size 1."""
        mass = gate_mass_by_size(tiny_network, 1)
        assert mass[1] == pytest.approx(0.2)
        assert mass[3] == pytest.approx(0.4)
        assert mass[5] == pytest.approx(0.4)
