"""Tests for VOL5 volumes and manifests."""

import struct

import numpy as np
import pytest

from repmode.exceptions import DimensionError, FormatError, StatisticsError
from repmode.volumes import (
    ManifestRow,
    Sample,
    Volume,
    decode_vol,
    encode_vol,
    read_manifest,
    read_vol,
    write_manifest,
    write_vol,
)


class TestVolume:
    """Test Volume and Sample validation."""

    def test_rank_checked(self):
        """Should reject non-3D data."""
        with pytest.raises(DimensionError):
            Volume(np.zeros((2, 2)))

    def test_non_finite_rejected(self):
        """Should reject NaN intensities."""
        data = np.zeros((2, 2, 2))
        data[0, 0, 0] = np.nan
        with pytest.raises(StatisticsError):
            Volume(data)

    def test_sample_extents_must_match(self):
        """Input and target should share extents."""
        with pytest.raises(DimensionError):
            Sample("s", Volume(np.zeros((2, 2, 2))), Volume(np.zeros((2, 2, 3))), 1)

    def test_sample_split_checked(self):
        """Should reject unknown splits."""
        with pytest.raises(FormatError):
            Sample("s", Volume(np.zeros((2, 2, 2))), Volume(np.zeros((2, 2, 2))), 1, "holdout")


class TestVol5:
    """Test the VOL5 file format."""

    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_file_round_trip(self, tmp_path, rng, dtype):
        """Written volumes should read back bit-exactly."""
        volume = Volume(rng.standard_normal((3, 4, 5)).astype(dtype))
        write_vol(tmp_path / "v.vol", volume)
        restored = read_vol(tmp_path / "v.vol")
        assert restored.data.dtype == dtype
        np.testing.assert_array_equal(restored.data, volume.data)

    def test_header_layout(self):
        """Header should be magic, version, dtype code and three u32 extents."""
        raw = encode_vol(Volume(np.zeros((2, 3, 4), dtype=np.float32)))
        assert raw[:4] == b"VOL5"
        assert struct.unpack("<BB3I", raw[4:18]) == (1, 1, 2, 3, 4)
        assert len(raw) == 18 + 2 * 3 * 4 * 4

    def test_bad_magic(self):
        """Should raise FormatError for a foreign header."""
        raw = encode_vol(Volume(np.zeros((1, 1, 1), dtype=np.float32)))
        with pytest.raises(FormatError):
            decode_vol(b"XXXX" + raw[4:])

    def test_truncated_payload(self):
        """Should raise FormatError when the payload is short."""
        raw = encode_vol(Volume(np.zeros((2, 2, 2), dtype=np.float32)))
        with pytest.raises(FormatError):
            decode_vol(raw[:-1])

    def test_dtype_mismatch(self):
        """Should raise FormatError when the stored dtype is unexpected."""
        raw = encode_vol(Volume(np.zeros((1, 1, 1), dtype=np.float32)))
        with pytest.raises(FormatError):
            decode_vol(raw, dtype=np.float64)

    def test_unsupported_dtype(self):
        """Should refuse to encode integer volumes."""
        with pytest.raises(FormatError):
            encode_vol(Volume(np.zeros((1, 1, 1), dtype=np.int32)))


class TestManifest:
    """Test manifest files."""

    def test_round_trip(self, tmp_path):
        """Rows should survive write and read."""
        rows = [
            ManifestRow("s0000", "volumes/a.vol", "volumes/b.vol", 1, "train"),
            ManifestRow("s0001", "volumes/c.vol", "volumes/d.vol", 2, "test"),
        ]
        write_manifest(tmp_path / "manifest.tsv", rows)
        assert read_manifest(tmp_path / "manifest.tsv") == rows

    def test_bad_header(self, tmp_path):
        """Should raise FormatError for a wrong header."""
        path = tmp_path / "manifest.tsv"
        path.write_text("id\tinput\n")
        with pytest.raises(FormatError):
            read_manifest(path)

    @pytest.mark.parametrize("row", ["s0\ta\tb\tone\ttrain", "s0\ta\tb\t1\tholdout", "s0\ta\tb"])
    def test_bad_rows(self, tmp_path, row):
        """Should raise FormatError for bad labels, splits or field counts."""
        path = tmp_path / "manifest.tsv"
        path.write_text("sample_id\tinput\ttarget\tlabel\tsplit\n" + row + "\n")
        with pytest.raises(FormatError):
            read_manifest(path)
