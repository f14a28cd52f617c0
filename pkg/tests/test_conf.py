"""Tests for repmode settings."""

from pathlib import Path

import pytest

from repmode import conf
from repmode.conf import (
    DEFAULTS,
    load_config,
    parse_override,
    resolve_settings,
)
from repmode.exceptions import ConfigError
from repmode.net import Variant


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    """Clear repmode environment variables."""
    for key in ("SEED", "DTYPE", "OUTPUT_DIR"):
        monkeypatch.delenv(f"REPMODE_{key}", raising=False)


class TestParseOverride:
    """Test --set parsing."""

    def test_integer(self):
        """Values should parse as TOML."""
        assert parse_override("train.epochs=5") == {"train": {"epochs": 5}}

    def test_list(self):
        """TOML arrays should become lists."""
        assert parse_override("train.patch=[8, 16, 16]") == {"train": {"patch": [8, 16, 16]}}

    def test_bare_word(self):
        """Bare words should fall back to strings."""
        assert parse_override("arch.experts=wo_avgp") == {"arch": {"experts": "wo_avgp"}}

    def test_missing_equals(self):
        """Should raise ConfigError without '='."""
        with pytest.raises(ConfigError):
            parse_override("train.epochs")


class TestResolveSettings:
    """Test layered settings."""

    def test_defaults(self):
        """Should start from the desk preset defaults."""
        settings = resolve_settings()
        assert settings["preset"] == "desk"
        assert settings["train"]["epochs"] == DEFAULTS["train"]["epochs"]

    def test_preset(self):
        """Presets should override defaults."""
        settings = resolve_settings(preset="smoke")
        assert settings["arch"]["depth"] == 1
        assert settings["data"]["num_classes"] == 3

    def test_file_and_override_order(self, tmp_path):
        """Overrides should win over the file, the file over the preset."""
        path = tmp_path / "run.toml"
        path.write_text('preset = "smoke"\nseed = 3\n[train]\nepochs = 7\nbatch_size = 1\n')
        settings = resolve_settings(path, ["train.epochs=9"])
        assert settings["preset"] == "smoke"
        assert settings["seed"] == 3
        assert settings["train"]["epochs"] == 9
        assert settings["train"]["batch_size"] == 1

    def test_environment(self, monkeypatch):
        """REPMODE_* variables should set top-level scalars."""
        monkeypatch.setenv("REPMODE_SEED", "11")
        monkeypatch.setenv("REPMODE_OUTPUT_DIR", "runs/env")
        settings = resolve_settings()
        assert settings["seed"] == 11
        assert settings["output_dir"] == "runs/env"

    def test_unknown_key(self):
        """Should raise ConfigError for unknown keys."""
        with pytest.raises(ConfigError, match="train.epoch"):
            resolve_settings(overrides=["train.epoch=5"])

    def test_type_mismatch(self):
        """Should raise ConfigError for values of the wrong type."""
        with pytest.raises(ConfigError):
            resolve_settings(overrides=["train.epochs=fast"])

    def test_int_accepted_for_float(self):
        """Integers should be accepted where floats are expected."""
        assert resolve_settings(overrides=["train.lr=1"])["train"]["lr"] == 1

    def test_unknown_preset(self):
        """Should raise ConfigError for unknown presets."""
        with pytest.raises(ConfigError):
            resolve_settings(preset="huge")

    def test_malformed_file(self, tmp_path):
        """Should raise ConfigError for malformed TOML."""
        path = tmp_path / "run.toml"
        path.write_text("[train\n")
        with pytest.raises(ConfigError):
            resolve_settings(path)


class TestLoadConfig:
    """Test the typed run configuration."""

    def test_typed_view(self):
        """Should build typed sections with tasks from the class count."""
        config = load_config(overrides=["data.num_classes=4", "arch.variant=multi_decoder"])
        assert config.arch.num_tasks == 4
        assert config.arch.variant is Variant.MULTI_DECODER
        assert config.eval.window == config.train.patch
        assert config.dataset_dir == Path("data/synthetic")

    def test_default_learning_rate(self):
        """Desk and large presets should train with lr 1e-4; smoke with 1e-3."""
        assert load_config().train.lr == pytest.approx(1e-4)
        assert load_config(preset="smoke").train.lr == pytest.approx(1e-3)

    def test_no_global_settings(self):
        """Each call should return its own config and leave no module-level state."""
        first = load_config(overrides=["seed=1"])
        second = load_config(overrides=["seed=2"])
        assert (first.seed, second.seed) == (1, 2)
        for name in ("configure", "get_setting", "_active"):
            assert not hasattr(conf, name)

    def test_large_preset(self):
        """The large preset should use twelve classes and the default lr."""
        config = load_config(preset="large")
        assert config.data.num_classes == 12
        assert config.train.epochs == 1000
        assert config.train.lr == pytest.approx(1e-4)

    def test_patch_divisibility(self):
        """Should raise ConfigError when the patch is not divisible by 2**depth."""
        with pytest.raises(ConfigError):
            load_config(overrides=["train.patch=[6, 32, 32]"])

    def test_bad_dtype(self):
        """Should raise ConfigError for unsupported dtypes."""
        with pytest.raises(ConfigError):
            load_config(overrides=["dtype=float16"])

    def test_zero_classes(self):
        """Should raise ConfigError for zero structure classes."""
        with pytest.raises(ConfigError):
            load_config(overrides=["data.num_classes=0"])
