"""
Export channel-averaged gates of every task and MoDE block.

Usage:
    repmode gates --checkpoint runs/default/best.rpmk
"""

from ..net import gate_mass_by_size, write_gating_summary
from .base import load_network, output_dir

HELP = "Write the gate summary (task, block, gates) of a checkpoint"


def add_arguments(parser):
    parser.add_argument("--checkpoint", required=True, help="Trained checkpoint")
    parser.add_argument("--out", type=str, help="Output directory (default: output_dir)")


def run(config, options):
    network = load_network(options["checkpoint"])
    path = output_dir(config, options) / "gates.tsv"
    rows = write_gating_summary(network, path)
    for task in range(1, network.num_tasks + 1):
        mass = gate_mass_by_size(network, task)
        cells = "  ".join(f"K={size}: {value:.3f}" for size, value in mass.items())
        print(f"task {task}: {cells}")
    print(f"Wrote {rows} rows to {path}")
