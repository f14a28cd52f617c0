"""Tests for the command line."""

import argparse
import json

import numpy as np
import pytest

from repmode.checkpoint import save_checkpoint
from repmode.cli import EXIT_FAILURE, EXIT_IO, EXIT_OK, EXIT_USAGE, build_parser, load_command, main
from repmode.commands import COMMANDS, base
from repmode.inference import plan_windows, sliding_window_predict
from repmode.volumes import MANIFEST_NAME, Volume, read_manifest, read_vol, write_vol


def run(*args):
    return main([*args, "--verbosity", "0"])


class TestSubcommands:
    """Test the subcommand modules and parser wiring."""

    @pytest.mark.parametrize("name", sorted(COMMANDS))
    def test_module_shape(self, name):
        """Each subcommand should be a module with HELP, add_arguments and run."""
        command = load_command(name)
        assert isinstance(command.HELP, str) and command.HELP
        assert callable(command.add_arguments)
        assert callable(command.run)
        assert not hasattr(command, "Command")

    def test_base_has_only_helpers(self):
        """The shared module should hold the protocol and helpers, no output wrappers."""
        for name in ("Style", "OutputWrapper", "BaseCommand"):
            assert not hasattr(base, name)
        assert callable(base.open_dataset)
        assert callable(base.load_network)
        assert callable(base.output_dir)

    def test_parser_lists_every_command(self):
        """Every subcommand should parse with the common options."""
        parser = build_parser({name: load_command(name) for name in COMMANDS})
        options = parser.parse_args(["bench", "--preset", "smoke", "--set", "bench.warmup=0"])
        assert options.command == "bench"
        assert options.preset == "smoke"
        assert options.overrides == ["bench.warmup=0"]
        assert isinstance(parser, argparse.ArgumentParser)

    def test_missing_dataset_message(self, tmp_path):
        """open_dataset should point at gen-data when the manifest is missing."""
        with pytest.raises(FileNotFoundError, match="gen-data"):
            base.open_dataset(tmp_path)

    def test_results_printed_at_verbosity_zero(self, tmp_path, capsys):
        """Result lines should reach stdout even when logging is quiet."""
        code = run(
            "bench",
            "--set",
            "bench.channels=2",
            "--set",
            "bench.input_shape=[1, 2, 4, 4, 4]",
            "--set",
            "bench.repetitions=2",
            "--set",
            "bench.warmup=0",
            "--out",
            str(tmp_path),
        )
        assert code == EXIT_OK
        assert f"Wrote {tmp_path / 'bench.json'}" in capsys.readouterr().out


class TestGenData:
    """Test the gen-data command."""

    def test_generates_dataset(self, tmp_path, capsys):
        """Should write the manifest and report the split sizes."""
        target = tmp_path / "data"
        code = run(
            "gen-data",
            "--preset",
            "smoke",
            "--set",
            "data.extents=[4, 8, 8]",
            "--set",
            f"data.dataset_dir={target}",
        )
        assert code == EXIT_OK
        assert len(read_manifest(target / MANIFEST_NAME)) == 12
        assert "Wrote 12 samples" in capsys.readouterr().out


class TestExitCodes:
    """Test exception to exit code mapping."""

    def test_config_error(self, tmp_path):
        """Zero classes should be a usage error."""
        code = run("gen-data", "--set", "data.num_classes=0", "--set", f"output_dir={tmp_path}")
        assert code == EXIT_USAGE

    def test_unknown_key(self):
        """Unknown settings should be a usage error."""
        assert run("bench", "--set", "bench.speed=1") == EXIT_USAGE

    def test_missing_dataset(self, tmp_path):
        """A missing dataset should be an I/O error."""
        code = run(
            "eval",
            "--checkpoint",
            str(tmp_path / "best.rpmk"),
            "--set",
            f"data.dataset_dir={tmp_path / 'nowhere'}",
        )
        assert code == EXIT_IO

    def test_corrupt_checkpoint(self, tmp_path):
        """A corrupt checkpoint should be an I/O error."""
        path = tmp_path / "bad.rpmk"
        path.write_bytes(b"NOPE" + bytes(16))
        assert run("gates", "--checkpoint", str(path), "--out", str(tmp_path)) == EXIT_IO

    def test_tolerance_failure(self, tmp_path):
        """A perturbed equivalence run should exit with a failure."""
        code = run(
            "check-equiv",
            "--cases",
            "2",
            "--network-cases",
            "1",
            "--perturb",
            "1e-3",
            "--out",
            str(tmp_path),
        )
        assert code == EXIT_FAILURE
        assert "FAIL" in (tmp_path / "equivalence.txt").read_text()

    def test_missing_command(self):
        """argparse should reject a missing subcommand."""
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == EXIT_USAGE


class TestCheckEquiv:
    """Test the check-equiv command."""

    def test_passes(self, tmp_path, capsys):
        """An unperturbed run should pass."""
        code = run("check-equiv", "--cases", "2", "--network-cases", "1", "--out", str(tmp_path))
        assert code == EXIT_OK
        assert "All equivalence checks passed" in capsys.readouterr().out


class TestBench:
    """Test the bench command."""

    def test_writes_report(self, tmp_path):
        """Should write bench.json."""
        code = run(
            "bench",
            "--set",
            "bench.channels=2",
            "--set",
            "bench.input_shape=[1, 2, 4, 4, 4]",
            "--set",
            "bench.repetitions=2",
            "--set",
            "bench.warmup=0",
            "--set",
            f"output_dir={tmp_path}",
        )
        assert code == EXIT_OK
        report = json.loads((tmp_path / "bench.json").read_text())
        assert report["merged"]["strategy"] == "merged"


@pytest.mark.slow
class TestPipeline:
    """Test gen-data, train, eval, gates and extend end to end."""

    def test_smoke_pipeline(self, tmp_path):
        """Every stage should succeed and extension should keep old metrics."""
        common = [
            "--preset",
            "smoke",
            "--set",
            f"data.dataset_dir={tmp_path / 'data'}",
            "--set",
            f"output_dir={tmp_path / 'run'}",
            "--set",
            "data.extents=[8, 16, 16]",
            "--set",
            "train.epochs=2",
            "--set",
            "train.val_interval=1",
            "--set",
            "extend.epochs=1",
        ]
        checkpoint = str(tmp_path / "run" / "best.rpmk")
        assert run("gen-data", *common) == EXIT_OK
        assert run("train", "--tasks", "2", *common) == EXIT_OK
        assert run("eval", "--checkpoint", checkpoint, *common) == EXIT_OK
        assert run("gates", "--checkpoint", checkpoint, *common) == EXIT_OK
        assert run("extend", "--checkpoint", checkpoint, *common) == EXIT_OK
        summary = json.loads((tmp_path / "run" / "extend.json").read_text())
        assert summary["previous_unchanged"] is True
        assert summary["frozen_unchanged"] is True


class TestCheckpointCommands:
    """Test gates and predict on a saved checkpoint."""

    @pytest.fixture
    def checkpoint(self, tmp_path, tiny_network):
        path = tmp_path / "tiny.rpmk"
        save_checkpoint(tiny_network, path)
        return path

    def test_gates(self, tmp_path, checkpoint, capsys):
        """Should write one gate row per task and gated block."""
        assert run("gates", "--checkpoint", str(checkpoint), "--out", str(tmp_path)) == EXIT_OK
        lines = (tmp_path / "gates.tsv").read_text().splitlines()
        assert len(lines) > 1
        assert "task 2:" in capsys.readouterr().out

    def test_predict(self, tmp_path, checkpoint, tiny_network, rng):
        """Should write a prediction matching sliding-window inference."""
        volume = Volume(rng.standard_normal((4, 8, 12)))
        write_vol(tmp_path / "in.vol", volume)
        code = run(
            "predict",
            "--checkpoint",
            str(checkpoint),
            "--input",
            str(tmp_path / "in.vol"),
            "--task",
            "1",
            "--output",
            str(tmp_path / "out.vol"),
            "--set",
            "eval.window=[4, 8, 8]",
        )
        assert code == EXIT_OK
        expected = sliding_window_predict(
            volume.data, tiny_network, 1, plan_windows(volume.extents, (4, 8, 8))
        )
        np.testing.assert_allclose(read_vol(tmp_path / "out.vol").data, expected, rtol=1e-10)

    def test_predict_missing_input(self, tmp_path, checkpoint):
        """A missing input volume should be an I/O error."""
        code = run(
            "predict",
            "--checkpoint",
            str(checkpoint),
            "--input",
            str(tmp_path / "none.vol"),
            "--task",
            "1",
            "--output",
            str(tmp_path / "out.vol"),
        )
        assert code == EXIT_IO
