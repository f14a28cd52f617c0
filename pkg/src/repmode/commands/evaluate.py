"""
Evaluate checkpoints on a split with sliding-window inference.

Usage:
    repmode eval --checkpoint runs/default/best.rpmk
    repmode eval --checkpoint plain_task1.rpmk --checkpoint plain_task2.rpmk ...
    repmode eval --checkpoint best.rpmk --baseline runs/plain/metrics.json
"""

from ..inference import evaluate
from ..metrics import MetricsReport
from .base import load_network, open_dataset, output_dir

HELP = "Score a checkpoint (or one plain checkpoint per task) and write metrics files"


def add_arguments(parser):
    parser.add_argument(
        "--checkpoint",
        action="append",
        required=True,
        help="Checkpoint to evaluate. Repeat to give one single-task network per task, in task order",
    )
    parser.add_argument(
        "--split",
        choices=["train", "val", "test"],
        default="test",
        help="Split to evaluate (default: test)",
    )
    parser.add_argument(
        "--baseline",
        type=str,
        help="metrics.json of a baseline run; adds a delta_imp row",
    )
    parser.add_argument("--out", type=str, help="Report directory (default: output_dir)")
    parser.add_argument(
        "--path",
        choices=["merged", "branchwise"],
        default="merged",
        help="Forward path (default: merged)",
    )


def run(config, options):
    loader = open_dataset(config.dataset_dir)
    paths = options["checkpoint"]
    if len(paths) == 1:
        model = load_network(paths[0])
        tasks = set(range(1, model.num_tasks + 1))
    else:
        model = {task: load_network(p) for task, p in enumerate(paths, start=1)}
        tasks = set(model)

    baseline = MetricsReport.read(options["baseline"]) if options.get("baseline") else None
    report = evaluate(
        model, loader, config.eval, options["split"], tasks=tasks, path=options["path"]
    )
    out = output_dir(config, options)
    written = report.write(out, baseline)
    print(report.render_table(baseline))
    print(f"Wrote {written} and {out / 'metrics.txt'}")
