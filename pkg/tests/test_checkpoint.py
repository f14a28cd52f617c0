"""Tests for the RPMK checkpoint format."""

import numpy as np
import pytest

from repmode.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from repmode.equivalence import randomize_network
from repmode.exceptions import FormatError
from repmode.mode import EmbeddingOrigin, GatingConfig
from repmode.net import (
    ArchConfig,
    ExtensionSpec,
    build_multi_decoder_network,
    build_network,
    extend_for_new_task,
)


def assert_same_state(a, b):
    pa, pb = a.parameters(), b.parameters()
    assert pa.keys() == pb.keys()
    for name in pa:
        assert pa[name].dtype == pb[name].dtype, name
        np.testing.assert_array_equal(pa[name], pb[name], err_msg=name)
    ba, bb = a.buffers(), b.buffers()
    assert ba.keys() == bb.keys()
    for name in ba:
        np.testing.assert_array_equal(ba[name], bb[name], err_msg=name)


class TestCheckpoint:
    """Test checkpoint save and load."""

    def test_round_trip_bit_exact(self, tiny_network, rng, tmp_path):
        """Loading should restore every parameter and buffer bit-for-bit."""
        randomize_network(tiny_network, rng)
        path = tmp_path / "net.rpmk"
        save_checkpoint(tiny_network, path)
        assert path.read_bytes()[:4] == MAGIC
        restored = load_checkpoint(path)
        assert restored.config == tiny_network.config
        assert_same_state(tiny_network, restored)
        assert restored.version == tiny_network.version

    def test_float32_round_trip(self, tiny_config, tmp_path):
        """Float32 networks should load as float32."""
        network = build_network(tiny_config, np.random.default_rng(0), np.float32)
        save_checkpoint(network, tmp_path / "f32.rpmk")
        restored = load_checkpoint(tmp_path / "f32.rpmk")
        assert restored.dtype == np.float32
        assert_same_state(network, restored)

    def test_gaussian_embedding_restored(self, tmp_path):
        """Gaussian task embeddings should travel with the checkpoint."""
        config = ArchConfig(
            depth=1, base_channels=2, num_tasks=3, gating=GatingConfig(embedding=EmbeddingOrigin.GAUSSIAN)
        )
        network = build_network(config, np.random.default_rng(5), np.float64)
        save_checkpoint(network, tmp_path / "g.rpmk")
        restored = load_checkpoint(tmp_path / "g.rpmk")
        np.testing.assert_array_equal(restored.embedder.table, network.embedder.table)

    def test_extended_network_round_trip(self, tiny_network, rng, tmp_path):
        """Extended networks should restore experts, stored gates and the freeze mask."""
        randomize_network(tiny_network, rng)
        extended = extend_for_new_task(tiny_network, ExtensionSpec(), rng)
        save_checkpoint(extended, tmp_path / "ext.rpmk")
        restored = load_checkpoint(tmp_path / "ext.rpmk")
        assert restored.num_tasks == 3
        assert restored.frozen == extended.frozen
        assert_same_state(extended, restored)
        x = rng.standard_normal((1, 1, 2, 4, 4))
        for task in (1, 2, 3):
            np.testing.assert_array_equal(restored.forward(x, task), extended.forward(x, task))

    def test_multi_decoder_round_trip(self, tiny_config, rng, tmp_path):
        """Multi-decoder networks should keep one decoder per task."""
        network = build_multi_decoder_network(tiny_config, rng, np.float64)
        save_checkpoint(network, tmp_path / "md.rpmk")
        restored = load_checkpoint(tmp_path / "md.rpmk")
        assert len(restored.decoders) == 2
        assert_same_state(network, restored)

    def test_bad_magic(self, tmp_path):
        """Should raise FormatError for a foreign file."""
        path = tmp_path / "bad.rpmk"
        path.write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_truncated(self, tiny_network, tmp_path):
        """Should raise FormatError for a truncated file."""
        path = tmp_path / "net.rpmk"
        save_checkpoint(tiny_network, path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_trailing_bytes(self, tiny_network, tmp_path):
        """Should raise FormatError for trailing garbage."""
        path = tmp_path / "net.rpmk"
        save_checkpoint(tiny_network, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_unsupported_version(self, tiny_network, tmp_path):
        """Should raise FormatError for an unknown format version."""
        path = tmp_path / "net.rpmk"
        save_checkpoint(tiny_network, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_checkpoint(path)
