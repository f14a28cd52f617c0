#!/usr/bin/env python3
"""
Directional comparison of RepMode against its baselines.

Trains, under one settings file and one budget:

- a RepMode network on every structure
- the multi-decoder baseline (shared encoder, one decoder per task)
- one plain single-task network per structure

then checks that RepMode's overall test MSE is no worse than either
baseline, that every structure has positive R², and that the shell class
puts more gate mass on 5x5x5 experts than the blob class. A second stage
trains on all but the last structure, extends to it, and checks that old
outputs are unchanged and the new task beats a plain network trained from
scratch on the same budget.

Usage:
    python scripts/directional_benchmark.py                      # desk preset
    python scripts/directional_benchmark.py --preset smoke       # quick sanity run
    python scripts/directional_benchmark.py --set train.epochs=50 --out runs/directional

Requirements:
    pip install -e .
"""

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from repmode.conf import load_config
from repmode.inference import evaluate
from repmode.loaders import ManifestSampleLoader
from repmode.net import (
    Variant,
    build_network,
    extend_for_new_task,
    frozen_checksum,
    gate_mass_by_size,
)
from repmode.synth import StructureKind, StructureProfile, generate_dataset
from repmode.train import fine_tune, train


def train_variant(config, loader, variant, out, tasks, seed_offset):
    """Train one shared network of ``variant`` on ``tasks``."""
    arch = replace(config.arch, variant=variant, num_tasks=max(tasks))
    rng = np.random.default_rng([config.seed, seed_offset])
    network = build_network(arch, rng, np.dtype(config.dtype))
    train(
        network,
        loader,
        config.train,
        eval_config=config.eval,
        output_dir=out,
        tasks=set(tasks),
        checkpoint_name=f"{variant.value}.rpmk",
        log_name=f"{variant.value}.log",
    )
    return network


def train_plain(config, loader, tasks, out, epochs=None):
    """One plain network per task; returns task -> network."""
    train_config = config.train if epochs is None else replace(config.train, epochs=epochs)
    arch = replace(config.arch, variant=Variant.PLAIN, num_tasks=max(tasks))
    networks = {}
    for task in tasks:
        rng = np.random.default_rng([config.seed, 100 + task])
        network = build_network(arch, rng, np.dtype(config.dtype))
        train(
            network,
            loader,
            train_config,
            eval_config=config.eval,
            output_dir=out,
            tasks={task},
            checkpoint_name=f"plain_task{task}.rpmk",
            log_name=f"plain_task{task}.log",
        )
        networks[task] = network
    return networks


def collect_outputs(network, loader, tasks):
    """Raw full-patch predictions of every test sample of ``tasks``."""
    outputs = {}
    for sample in loader.split("test"):
        if sample.label in tasks:
            x = sample.input.data[None, None].astype(network.dtype)
            outputs[sample.sample_id] = network.forward(x, sample.label)
    return outputs


def check(results, name, passed, detail):
    status = "PASS" if passed else "FAIL"
    print(f"  [{status}] {name}: {detail}")
    results[name] = {"passed": bool(passed), "detail": detail}


def compare_baselines(config, loader, out, results):
    tasks = list(range(1, config.data.num_classes + 1))

    print("Training RepMode...")
    repmode = train_variant(config, loader, Variant.REPMODE, out, tasks, 1)
    print("Training multi-decoder baseline...")
    multi = train_variant(config, loader, Variant.MULTI_DECODER, out, tasks, 2)
    print("Training plain per-task networks...")
    plain = train_plain(config, loader, tasks, out)

    reports = {
        "repmode": evaluate(repmode, loader, config.eval),
        "multi_decoder": evaluate(multi, loader, config.eval),
        "plain": evaluate(plain, loader, config.eval),
    }
    for name, report in reports.items():
        report.write(out / name)
        print(f"\n{name}\n{report.render_table(reports['plain'])}")

    ours = reports["repmode"].overall()["mse"]
    for baseline in ("multi_decoder", "plain"):
        theirs = reports[baseline].overall()["mse"]
        check(results, f"mse <= {baseline}", ours <= theirs, f"{ours:.5f} vs {theirs:.5f}")

    r2 = {label: row["r2"] for label, row in reports["repmode"].per_structure().items()}
    check(
        results,
        "r2 > 0 per structure",
        all(value > 0 for value in r2.values()),
        ", ".join(f"{label}: {value:.3f}" for label, value in r2.items()),
    )

    kinds = {t: StructureProfile.for_class(t - 1).kind for t in tasks}
    blob = next((t for t, k in kinds.items() if k is StructureKind.BLOB), None)
    shell = next((t for t, k in kinds.items() if k is StructureKind.SHELL), None)
    if blob is None or shell is None:
        print("  [SKIP] gate preference needs a blob and a shell class")
        return
    shell_mass = gate_mass_by_size(repmode, shell).get(5, 0.0)
    blob_mass = gate_mass_by_size(repmode, blob).get(5, 0.0)
    check(
        results,
        "shell prefers K=5",
        shell_mass > blob_mass,
        f"shell {shell_mass:.4f} vs blob {blob_mass:.4f}",
    )


def check_incremental(config, loader, out, results):
    num_classes = config.data.num_classes
    if num_classes < 2:
        print("  [SKIP] incremental check needs at least two structures")
        return
    previous = list(range(1, num_classes))
    new_task = num_classes
    print(f"\nTraining RepMode on tasks {previous}, then extending to task {new_task}...")
    base = train_variant(config, loader, Variant.REPMODE, out / "incremental", previous, 3)
    before = collect_outputs(base, loader, set(previous))

    rng = np.random.default_rng([config.seed, 4])
    extended = extend_for_new_task(base, config.extend, rng)
    checksum = frozen_checksum(extended)
    fine_tune(
        extended,
        loader,
        config.train,
        new_task,
        epochs=config.extend.epochs,
        eval_config=config.eval,
        output_dir=out / "incremental",
    )
    after = collect_outputs(extended, loader, set(previous))
    identical = all(np.array_equal(before[key], after[key]) for key in before)
    check(results, "previous outputs bit-identical", identical, f"{len(before)} test samples")
    check(
        results,
        "frozen parameters unchanged",
        frozen_checksum(extended) == checksum,
        checksum[:16],
    )

    scratch = train_plain(
        config, loader, [new_task], out / "incremental", epochs=config.extend.epochs
    )
    ours = evaluate(extended, loader, config.eval, tasks={new_task}).overall()["mse"]
    theirs = evaluate(scratch, loader, config.eval, tasks={new_task}).overall()["mse"]
    check(results, "new task mse <= scratch plain", ours <= theirs, f"{ours:.5f} vs {theirs:.5f}")


def main() -> None:
    """Main entry point."""
    parser = argparse.ArgumentParser(
        description="Directional comparison of RepMode against its baselines",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--config", "-c", help="TOML run configuration")
    parser.add_argument("--preset", choices=["desk", "smoke", "large"], help="Settings preset")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override one setting; repeatable",
    )
    parser.add_argument("--out", default="runs/directional", help="Output directory")
    parser.add_argument("--skip-incremental", action="store_true", help="Skip the extension stage")
    args = parser.parse_args()

    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    config = load_config(args.config, args.overrides, args.preset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    data_dir = out / "data"
    print(f"Generating benchmark ({config.data.num_samples} samples) in {data_dir}...")
    generate_dataset(config.data, config.seed, data_dir)
    loader = ManifestSampleLoader(data_dir)

    results: dict = {}
    compare_baselines(config, loader, out, results)
    if not args.skip_incremental:
        check_incremental(config, loader, out, results)

    (out / "directional.json").write_text(json.dumps(results, indent=2) + "\n")
    failed = [name for name, result in results.items() if not result["passed"]]
    print(f"\n{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        raise SystemExit(1)


if __name__ == "__main__":
    sys.exit(main())
