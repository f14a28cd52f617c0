"""Configuration settings for repmode.

Settings come from a TOML run configuration, optionally on top of a named
preset, with ``--set section.key=value`` overrides from the command line:

    seed = 0
    output_dir = "runs/desk"

    [arch]
    depth = 2
    base_channels = 8

    [train]
    epochs = 200

Every key has a documented default in ``DEFAULTS`` below; unknown keys are
rejected.
"""

from __future__ import annotations

import copy
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

from .exceptions import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

if TYPE_CHECKING:
    from .bench import BenchConfig
    from .inference import EvalConfig
    from .net import ArchConfig, ExtensionSpec
    from .synth import BenchmarkSpec
    from .train import TrainConfig

# Default settings
DEFAULTS: dict[str, Any] = {
    # Single source of randomness for every subcommand
    "seed": 0,
    # Compute dtype: "float32" (default) or "float64" (oracle/gradient checks)
    "dtype": "float32",
    # Directory receiving checkpoints, logs and reports
    "output_dir": "runs/default",
    # Preset applied before the file: "desk", "smoke" or "large"
    "preset": "desk",
    "data": {
        # Directory holding manifest.tsv and the VOL5 volumes
        "dataset_dir": "data/synthetic",
        # Number of structure classes S (kinds cycle blob, lump, shell)
        "num_classes": 3,
        "samples_per_class": 24,
        # Volume extents D, H, W in voxels
        "extents": [32, 64, 64],
        # Standard deviation of additive Gaussian noise on the input
        "noise": 0.1,
        # Gaussian blur sigma (voxels) applied to the input scene
        "blur": 1.0,
        # Fraction of each class held out for testing
        "test_fraction": 0.25,
        # Fraction of the remainder held out for validation
        "val_fraction": 0.10,
    },
    "arch": {
        # Number of down/up sampling stages
        "depth": 2,
        # Channel width of the first stage (doubles per stage)
        "base_channels": 8,
        "in_channels": 1,
        "out_channels": 1,
        # Expert inventory preset or comma list, e.g. "conv1,conv3,avgp3"
        "experts": "default",
        # Where MoDE blocks are used: "all", "encoder" or "decoder"
        "mode_scope": "all",
        # "repmode", "plain" (single-task) or "multi_decoder"
        "variant": "repmode",
        "bn_momentum": 0.1,
        "bn_eps": 1e-5,
    },
    "gating": {
        # "single" (one FC layer) or "two_layer"
        "fcn": "single",
        # Hidden units of the two-layer FCN
        "hidden": 6,
        # "softmax" (across experts) or "sigmoid"
        "activation": "softmax",
        # "task" (task embedding) or "input" (pooled block input)
        "source": "task",
        # "one_hot" or "gaussian" task embedding
        "embedding": "one_hot",
    },
    "train": {
        "epochs": 200,
        "batch_size": 4,
        # Patch extents D, H, W (divisible by 2**depth)
        "patch": [16, 32, 32],
        # Validate every N epochs (and after the last one)
        "val_interval": 10,
        "flip": True,
        # Axes (0=D, 1=H, 2=W) eligible for random flips
        "flip_axes": [0, 1, 2],
        # Adam learning rate
        "lr": 1e-4,
        # "merged" or "branchwise" forward during training
        "path": "merged",
    },
    "eval": {
        # Sliding-window extents; None means the training patch
        "window": None,
        # Stride as a fraction of the window
        "stride_fraction": 0.5,
        # Gaussian sigma as a fraction of the window extent per axis
        "sigma_fraction": 0.125,
        # Lower bound on importance weights
        "weight_floor": 1e-8,
        # Tiles evaluated per forward call
        "tile_batch": 4,
    },
    "extend": {
        # Expert added to every MoDE block for the new task
        "expert": "conv3",
        "epochs": 50,
    },
    "bench": {
        "channels": 64,
        # Input shape N, C, D, H, W
        "input_shape": [1, 64, 16, 32, 32],
        "repetitions": 50,
        "warmup": 3,
    },
}

PRESETS: dict[str, dict[str, Any]] = {
    "desk": {},
    "smoke": {
        "data": {"samples_per_class": 4, "extents": [16, 32, 32]},
        "arch": {"depth": 1, "base_channels": 4},
        "train": {
            "epochs": 5,
            "batch_size": 2,
            "patch": [8, 16, 16],
            "val_interval": 5,
            "lr": 1e-3,
        },
        "extend": {"epochs": 3},
        "bench": {"channels": 8, "input_shape": [1, 8, 8, 16, 16], "repetitions": 5},
    },
    "large": {
        "data": {"num_classes": 12},
        "train": {
            "epochs": 1000,
            "batch_size": 8,
            "patch": [32, 128, 128],
            "val_interval": 20,
        },
    },
}

# Top-level scalars that may come from REPMODE_<NAME> environment variables
ENV_KEYS = ("seed", "dtype", "output_dir")


def _merge(base: dict[str, Any], update: dict[str, Any], where: str = "") -> None:
    """Merge ``update`` into ``base`` in place, rejecting unknown keys and bad types."""
    for key, value in update.items():
        path = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"Unknown configuration key '{path}'")
        current = base[key]
        if isinstance(current, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{path}' must be a table")
            _merge(current, value, f"{path}.")
            continue
        if current is not None and not _type_compatible(current, value):
            raise ConfigError(
                f"'{path}' expects {type(current).__name__}, got {type(value).__name__}"
            )
        base[key] = value


def _type_compatible(default: Any, value: Any) -> bool:
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, type(default))


def parse_override(text: str) -> dict[str, Any]:
    """
    Parse a ``section.key=value`` override into a nested mapping.

    The value is parsed as a TOML value; bare words fall back to strings.

    Args:
        text: Override such as ``train.epochs=5`` or ``arch.experts=wo_avgp``

    Returns:
        Nested mapping suitable for merging
    """
    if "=" not in text:
        raise ConfigError(f"Invalid override '{text}'. Use section.key=value")
    dotted, raw = text.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    mapping: dict[str, Any] = {}
    node = mapping
    parts = dotted.strip().split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
    return mapping


def resolve_settings(
    path: str | Path | None = None,
    overrides: list[str] | tuple[str, ...] = (),
    preset: str | None = None,
) -> dict[str, Any]:
    """
    Build the merged settings mapping.

    Order: DEFAULTS, preset, environment, file, overrides.

    Args:
        path: Optional TOML configuration file
        overrides: ``section.key=value`` strings
        preset: Preset name; defaults to the file's ``preset`` key or "desk"

    Returns:
        Fully merged settings mapping
    """
    file_data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "rb") as handle:
                file_data = tomllib.load(handle)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"Malformed configuration file {path}: {exc}") from exc

    override_maps = [parse_override(item) for item in overrides]
    for item in override_maps:
        if "preset" in item:
            preset = item["preset"]
    preset = preset or file_data.get("preset") or DEFAULTS["preset"]
    if preset not in PRESETS:
        raise ConfigError(f"Unknown preset '{preset}'. Available: {sorted(PRESETS)}")

    settings = copy.deepcopy(DEFAULTS)
    _merge(settings, copy.deepcopy(PRESETS[preset]))
    settings["preset"] = preset

    for key in ENV_KEYS:
        env_value = os.environ.get(f"REPMODE_{key.upper()}")
        if env_value is not None:
            _merge(settings, parse_override(f"{key}={env_value}"))

    _merge(settings, file_data)
    for item in override_maps:
        _merge(settings, item)
    return settings


@dataclass(frozen=True)
class RunConfig:
    """Typed view over a merged settings mapping."""

    seed: int
    dtype: str
    output_dir: Path
    preset: str
    data: BenchmarkSpec
    arch: ArchConfig
    train: TrainConfig
    eval: EvalConfig
    extend: ExtensionSpec
    bench: BenchConfig
    dataset_dir: Path

    @classmethod
    def from_settings(cls, settings: dict[str, Any]) -> RunConfig:
        from .bench import BenchConfig
        from .inference import EvalConfig
        from .mode import GatingConfig
        from .net import ArchConfig, ExtensionSpec
        from .synth import BenchmarkSpec
        from .train import TrainConfig

        if settings["dtype"] not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {settings['dtype']!r}")

        data = dict(settings["data"])
        dataset_dir = Path(data.pop("dataset_dir"))
        gating = GatingConfig.from_mapping(settings["gating"])
        spec = BenchmarkSpec.from_mapping(data)
        arch = ArchConfig.from_mapping(
            settings["arch"], gating=gating, num_tasks=spec.num_classes
        )
        train = TrainConfig.from_mapping(settings["train"], seed=settings["seed"])
        if any(extent % (2**arch.depth) for extent in train.patch):
            raise ConfigError(
                f"train.patch {train.patch} must be divisible by 2**depth = {2**arch.depth}"
            )
        return cls(
            seed=settings["seed"],
            dtype=settings["dtype"],
            output_dir=Path(settings["output_dir"]),
            preset=settings["preset"],
            data=spec,
            arch=arch,
            train=train,
            eval=EvalConfig.from_mapping(settings["eval"], patch=train.patch),
            extend=ExtensionSpec.from_mapping(settings["extend"]),
            bench=BenchConfig.from_mapping(settings["bench"]),
            dataset_dir=dataset_dir,
        )


def load_config(
    path: str | Path | None = None,
    overrides: list[str] | tuple[str, ...] = (),
    preset: str | None = None,
) -> RunConfig:
    """
    Load and validate a run configuration.

    Args:
        path: Optional TOML configuration file
        overrides: ``section.key=value`` strings
        preset: Optional preset name

    Returns:
        Typed run configuration
    """
    settings = resolve_settings(path, overrides, preset)
    return RunConfig.from_settings(settings)
