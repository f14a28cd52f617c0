"""Tests for sample loaders."""

import pytest

from repmode.exceptions import FormatError
from repmode.loaders import BaseSampleLoader, InMemorySampleLoader, ManifestSampleLoader


class TestManifestSampleLoader:
    """Test ManifestSampleLoader."""

    def test_list_samples(self, dataset_dir, tiny_spec):
        """Should list every manifest sample in order."""
        loader = ManifestSampleLoader(dataset_dir)
        ids = loader.list()
        assert len(ids) == tiny_spec.num_samples
        assert ids == sorted(ids)

    def test_load_sample(self, dataset_dir):
        """Should load a sample with its volumes and label."""
        loader = ManifestSampleLoader(dataset_dir)
        sample = loader.load("s0000")
        assert sample is not None
        assert sample.label == 1
        assert sample.input.extents == sample.target.extents

    def test_load_memoized(self, dataset_dir):
        """Repeated loads should return the cached sample."""
        loader = ManifestSampleLoader(dataset_dir)
        assert loader.load("s0001") is loader.load("s0001")
        loader.clear_cache()
        assert loader.load("s0001") is not None

    def test_load_nonexistent(self, dataset_dir):
        """Should return None for unknown ids."""
        assert ManifestSampleLoader(dataset_dir).load("nope") is None

    def test_splits_partition(self, dataset_dir, tiny_spec):
        """train, val and test splits should partition the samples."""
        loader = ManifestSampleLoader(dataset_dir)
        total = sum(len(loader.split(name)) for name in ("train", "val", "test"))
        assert total == tiny_spec.num_samples
        assert all(s.split == "test" for s in loader.split("test"))

    def test_contains(self, dataset_dir):
        """Should support the 'in' operator."""
        loader = ManifestSampleLoader(dataset_dir)
        assert "s0000" in loader
        assert "nope" not in loader

    def test_missing_manifest(self, tmp_path):
        """Should raise FileNotFoundError without a manifest."""
        with pytest.raises(FileNotFoundError):
            ManifestSampleLoader(tmp_path).list()

    def test_duplicate_ids(self, tmp_path):
        """Should raise FormatError for duplicate sample ids."""
        row = "s0\ta.vol\tb.vol\t1\ttrain\n"
        (tmp_path / "manifest.tsv").write_text("sample_id\tinput\ttarget\tlabel\tsplit\n" + row * 2)
        with pytest.raises(FormatError):
            ManifestSampleLoader(tmp_path).list()


class TestInMemorySampleLoader:
    """Test InMemorySampleLoader."""

    def test_serves_samples(self, memory_loader):
        """Should serve samples in insertion order."""
        assert len(memory_loader) == 8
        assert memory_loader.list()[0] == "c1s0"
        assert memory_loader.load("c2s3").split == "test"
        assert memory_loader.load("missing") is None

    def test_split(self, memory_loader):
        """Should filter by split."""
        assert [s.sample_id for s in memory_loader.split("val")] == ["c1s2", "c2s2"]


class TestBaseSampleLoader:
    """Test the abstract base."""

    def test_cannot_instantiate(self):
        """BaseSampleLoader should be abstract."""
        with pytest.raises(TypeError):
            BaseSampleLoader()

    def test_custom_loader(self):
        """A subclass implementing load and list should work."""

        class EmptyLoader(BaseSampleLoader):
            def load(self, sample_id):
                return None

            def list(self):
                return []

        assert EmptyLoader().split("train") == []
        assert InMemorySampleLoader().list() == []
