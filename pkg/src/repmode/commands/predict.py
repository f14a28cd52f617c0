"""
Predict one structure for a single VOL5 volume.

Usage:
    repmode predict --checkpoint best.rpmk --input scan.vol --task 2 --output pred.vol
"""

from pathlib import Path

from ..inference import plan_windows, sliding_window_predict
from ..volumes import Volume, read_vol, write_vol
from .base import load_network

HELP = "Run sliding-window inference on one volume and write the prediction"


def add_arguments(parser):
    parser.add_argument("--checkpoint", required=True, help="Trained checkpoint")
    parser.add_argument("--input", required=True, help="Input VOL5 volume")
    parser.add_argument("--task", type=int, required=True, help="Structure index (1-based)")
    parser.add_argument("--output", required=True, help="Destination VOL5 file")


def run(config, options):
    network = load_network(options["checkpoint"])
    source = Path(options["input"])
    if not source.exists():
        raise FileNotFoundError(f"Input volume not found: {source}")
    volume = read_vol(source)
    settings = config.eval
    plan = plan_windows(
        volume.extents,
        settings.window,
        settings.stride_fraction,
        settings.sigma_fraction,
        settings.weight_floor,
    )
    prediction = sliding_window_predict(
        volume.data, network, options["task"], plan, tile_batch=settings.tile_batch
    )
    write_vol(options["output"], Volume(prediction, volume.voxel_size))
    print(f"Wrote {options['output']} ({len(plan)} tiles, task {options['task']})")
