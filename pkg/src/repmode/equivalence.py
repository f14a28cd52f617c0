"""
Randomized equivalence checks for GatRep.

Three suites:

- GatRep: random MoDE configurations, branchwise vs merged outputs
- A-Conv: every serial-merged Avgp-Conv kernel is spatially constant
- Network: a tiny network with random gates and BN statistics, both
  forward paths in train and infer mode

Usage:
    from repmode.equivalence import run_equivalence

    report = run_equivalence(cases=100, seed=0)
    report.check()
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import expit, softmax

from .exceptions import ToleranceError
from .gatrep import ExpertKind, ExpertKernel, ExpertSpec, branchwise_forward, merge_experts
from .mode import FCNKind, GatingConfig
from .net import ArchConfig, Network, build_network
from .ops import Padding3, conv3d
from .registry import experts

logger = logging.getLogger(__name__)

TOLERANCES = {"float64": 1e-10, "float32": 1e-4}
NETWORK_TOLERANCE = 1e-8


class EquivalenceCase(NamedTuple):
    name: str
    max_abs: float
    max_rel: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel <= self.tolerance


@dataclass
class EquivalenceReport:
    cases: list[EquivalenceCase] = field(default_factory=list)

    @property
    def failures(self) -> list[EquivalenceCase]:
        return [case for case in self.cases if not case.passed]

    @property
    def passed(self) -> bool:
        return not self.failures

    def worst(self) -> EquivalenceCase | None:
        return max(self.cases, key=lambda c: c.max_rel, default=None)

    def render(self) -> str:
        lines = [f"{'case':<44}{'max_abs':>14}{'max_rel':>14}{'tol':>10}  status"]
        for case in self.cases:
            status = "ok" if case.passed else "FAIL"
            lines.append(
                f"{case.name:<44}{case.max_abs:>14.3e}{case.max_rel:>14.3e}"
                f"{case.tolerance:>10.0e}  {status}"
            )
        lines.append(f"{len(self.cases) - len(self.failures)}/{len(self.cases)} cases passed")
        return "\n".join(lines) + "\n"

    def check(self) -> None:
        """
        Raises:
            ToleranceError: Any case exceeded its tolerance
        """
        if self.failures:
            worst = max(self.failures, key=lambda c: c.max_rel)
            raise ToleranceError(
                f"{len(self.failures)} equivalence case(s) failed; worst {worst.name}: "
                f"rel {worst.max_rel:.3e} > {worst.tolerance:.0e}"
            )


def deviation(actual: np.ndarray, expected: np.ndarray) -> tuple[float, float]:
    """Max absolute deviation and that deviation relative to ``max |expected|``."""
    diff = np.abs(actual.astype(np.float64) - expected.astype(np.float64))
    max_abs = float(diff.max()) if diff.size else 0.0
    scale = float(np.abs(expected).max()) if expected.size else 0.0
    return max_abs, max_abs / max(scale, np.finfo(np.float64).tiny)


def random_experts(
    specs: tuple[ExpertSpec, ...],
    in_channels: int,
    out_channels: int,
    rng: np.random.Generator,
    dtype: np.dtype | type,
    bias: bool,
) -> list[ExpertKernel]:
    kernels = []
    for spec in specs:
        k = spec.weight_extent
        weight = rng.standard_normal((out_channels, in_channels, k, k, k)).astype(dtype)
        b = rng.standard_normal(out_channels).astype(dtype) if bias else None
        kernels.append(ExpertKernel(spec, weight, b))
    return kernels


def gatrep_case(
    index: int, rng: np.random.Generator, dtype: str, perturb: float = 0.0
) -> EquivalenceCase:
    """One random MoDE configuration, branchwise vs merged."""
    inventory = str(rng.choice(experts.list_inventories()))
    specs = experts.get(inventory)
    c_in, c_out = (int(c) for c in rng.integers(1, 9, size=2))
    batch = int(rng.integers(1, 3))
    extents = tuple(int(e) for e in rng.integers(5, 10, size=3))
    bias = bool(rng.random() < 0.5)
    kernels = random_experts(specs, c_in, c_out, rng, dtype, bias)
    logits = rng.standard_normal((len(specs), c_out))
    gates = (softmax(logits, axis=0) if rng.random() < 0.5 else expit(logits)).astype(dtype)
    x = rng.standard_normal((batch, c_in, *extents)).astype(dtype)

    expected = branchwise_forward(x, kernels, gates)
    merged = merge_experts(kernels, gates)
    weight = merged.weight + perturb if perturb else merged.weight
    actual = conv3d(x, weight, merged.bias, Padding3.same(merged.size))
    max_abs, max_rel = deviation(actual, expected)
    name = f"gatrep[{index}] {dtype} {inventory} {c_in}->{c_out} {extents}"
    return EquivalenceCase(name, max_abs, max_rel, TOLERANCES[dtype])


def aconv_case(size: int, rng: np.random.Generator) -> EquivalenceCase:
    """Spatial constancy of a serial-merged Avgp ``size`` expert (exact)."""
    c_in, c_out = (int(c) for c in rng.integers(1, 9, size=2))
    spec = ExpertSpec(ExpertKind.AVGP_CONV, size)
    kernel = random_experts((spec,), c_in, c_out, rng, np.float64, False)[0].merged()
    corner = kernel[:, :, :1, :1, :1]
    max_abs = float(np.abs(kernel - corner).max())
    return EquivalenceCase(f"aconv avgp{size} {c_in}->{c_out}", max_abs, max_abs, 0.0)


def randomize_network(network: Network, rng: np.random.Generator, scale: float = 1.0) -> None:
    """
    Give gating weights, biases and BN statistics random values in place so
    gates differ across experts and channels.
    """
    params = network.parameters()
    for name, value in params.items():
        if ".gating." in name or name.endswith(".bias") or name.endswith("bn.beta"):
            value[...] = scale * rng.standard_normal(value.shape)
        elif name.endswith("bn.gamma"):
            value[...] = rng.uniform(0.5, 1.5, value.shape)
    for name, value in network.buffers().items():
        if name.endswith("running_mean"):
            value[...] = 0.1 * rng.standard_normal(value.shape)
        elif name.endswith("running_var"):
            value[...] = rng.uniform(0.5, 1.5, value.shape)
    network.mark_updated()


def network_case(index: int, rng: np.random.Generator, mode: str) -> EquivalenceCase:
    """Both forward paths through a tiny float64 network."""
    gating = GatingConfig(fcn=FCNKind.TWO_LAYER if index % 2 else FCNKind.SINGLE)
    config = ArchConfig(depth=1, base_channels=2, num_tasks=3, gating=gating)
    network = build_network(config, rng, np.float64)
    randomize_network(network, rng)
    x = rng.standard_normal((2, 1, 4, 6, 6))
    task = int(rng.integers(1, config.num_tasks + 1))
    expected = network.forward(x, task, path="branchwise", mode=mode)
    actual = network.forward(x, task, path="merged", mode=mode)
    max_abs, max_rel = deviation(actual, expected)
    return EquivalenceCase(f"network[{index}] {mode} task {task}", max_abs, max_rel, NETWORK_TOLERANCE)


def run_equivalence(
    cases: int = 100,
    seed: int = 0,
    dtypes: tuple[str, ...] = ("float64", "float32"),
    perturb: float = 0.0,
    network_cases: int = 2,
) -> EquivalenceReport:
    """
    Run every suite.

    Args:
        cases: Random GatRep configurations per dtype
        seed: Seed of all random draws
        dtypes: Compute dtypes for the GatRep suite
        perturb: Constant added to every merged kernel entry (sensitivity check)
        network_cases: End-to-end network configurations per BN mode

    Returns:
        Report with one row per case; call ``check()`` to enforce tolerances
    """
    rng = np.random.default_rng(seed)
    report = EquivalenceReport()
    for dtype in dtypes:
        for i in range(cases):
            report.cases.append(gatrep_case(i, rng, dtype, perturb))
    for size in (3, 5):
        report.cases.append(aconv_case(size, rng))
    for mode in ("infer", "train"):
        for i in range(network_cases):
            report.cases.append(network_case(i, rng, mode))
    worst = report.worst()
    if worst is not None:
        logger.info(f"Equivalence: {len(report.failures)} failure(s); worst {worst.name} rel {worst.max_rel:.3e}")
    return report
