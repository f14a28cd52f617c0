"""
Gating re-parameterization kernel algebra.

An expert is either a plain ``Conv K`` or an ``Avgp K - Conv 1`` pair. The
pooling kernel is fixed, so an Avgp-Conv expert collapses into one
spatially constant ``K x K x K`` kernel (serial merge). All experts of a
block are then zero-padded to a common extent and summed channel-wise with
their gates (parallel merge), leaving a single convolution:

    merged = parallel_merge([e.merged() for e in experts], gates, biases)
    out = conv3d(x, merged.weight, merged.bias, Padding3.same(merged.size))

``branchwise_forward`` evaluates every expert explicitly and is the
reference the merged path is checked against.
"""

from __future__ import annotations

import re
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .exceptions import DimensionError, GeometryError
from .ops import Padding3, Tensor5, avgpool3d, check_tensor5, conv3d

# Gate values per expert and output channel, shape [T, C_O]
GateVector = NDArray[np.floating[Any]]

EXPERT_SIZES = (1, 3, 5)

# Extent every gated mixture is padded to, whatever its inventory
MERGED_KERNEL_SIZE = 5

_SPEC_PATTERN = re.compile(r"^(conv|avgp)([135])$")


class ExpertKind(str, Enum):
    CONV = "conv"
    AVGP_CONV = "avgp"


@dataclass(frozen=True)
class ExpertSpec:
    """Kind and receptive field of one expert, e.g. ``conv3`` or ``avgp5``."""

    kind: ExpertKind
    size: int

    def __post_init__(self) -> None:
        if self.size not in EXPERT_SIZES:
            raise GeometryError(f"Expert size must be one of {EXPERT_SIZES}, got {self.size}")
        if self.kind is ExpertKind.AVGP_CONV and self.size == 1:
            # Avgp 1 - Conv 1 is the Conv 1 expert
            raise GeometryError("avgp1 duplicates conv1; use conv1")

    @classmethod
    def parse(cls, token: str) -> ExpertSpec:
        match = _SPEC_PATTERN.match(token.strip().lower())
        if not match:
            raise GeometryError(f"Invalid expert '{token}'. Use conv1/3/5 or avgp3/5")
        return cls(ExpertKind(match.group(1)), int(match.group(2)))

    @property
    def label(self) -> str:
        return f"{self.kind.value}{self.size}"

    @property
    def weight_extent(self) -> int:
        """Spatial extent of the learnable weight."""
        return self.size if self.kind is ExpertKind.CONV else 1

    def __str__(self) -> str:
        return self.label


@dataclass
class ExpertKernel:
    """
    Learnable weights of one expert.

    Attributes:
        spec: Expert kind and receptive field
        weight: ``[C_O, C_I, K, K, K]`` for Conv K, ``[C_O, C_I, 1, 1, 1]`` for Avgp K
        bias: Optional ``[C_O]`` bias
    """

    spec: ExpertSpec
    weight: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self) -> None:
        check_tensor5(self.weight, f"{self.spec} weight")
        k = self.spec.weight_extent
        if self.weight.shape[2:] != (k, k, k):
            raise GeometryError(
                f"{self.spec} expects a {k}x{k}x{k} weight, got {self.weight.shape[2:]}"
            )
        if self.bias is not None and self.bias.shape != (self.weight.shape[0],):
            raise DimensionError(f"{self.spec} bias shape {self.bias.shape} mismatches weight")

    @property
    def out_channels(self) -> int:
        return int(self.weight.shape[0])

    @property
    def in_channels(self) -> int:
        return int(self.weight.shape[1])

    def merged(self) -> Tensor5:
        """Serial-merged kernel ``[C_O, C_I, K, K, K]``."""
        if self.spec.kind is ExpertKind.CONV:
            return self.weight
        avgp = build_avgp_kernel(self.in_channels, self.spec.size, self.weight.dtype)
        return serial_merge(self.weight, avgp)

    def forward(self, x: Tensor5) -> Tensor5:
        """Apply the expert explicitly (no bias)."""
        if self.spec.kind is ExpertKind.CONV:
            return conv3d(x, self.weight, padding=Padding3.same(self.spec.size))
        return conv3d(avgpool3d(x, self.spec.size), self.weight)


@dataclass
class MergedKernel:
    """Task-specific single kernel produced by GatRep."""

    weight: Tensor5
    bias: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(self.weight.shape[2])


def build_avgp_kernel(
    channels: int,
    kernel_size: int,
    dtype: np.dtype | type = np.float64,
    allow_even: bool = False,
) -> Tensor5:
    """
    Fixed average-pooling kernel ``[C_I, C_I, K, K, K]``.

    Diagonal channel blocks hold ``1/K**3``; everything else is zero.
    The returned array is read-only and shared between callers.

    Args:
        channels: C_I
        kernel_size: K (odd unless ``allow_even``)
        dtype: Element dtype
        allow_even: Permit even K (test-only geometry)
    """
    if channels < 1:
        raise DimensionError(f"channels must be positive, got {channels}")
    if kernel_size < 1 or (kernel_size % 2 == 0 and not allow_even):
        raise GeometryError(f"Average pooling kernel needs odd K, got {kernel_size}")
    return _avgp_kernel(channels, kernel_size, np.dtype(dtype).str)


@lru_cache(maxsize=64)
def _avgp_kernel(channels: int, kernel_size: int, dtype: str) -> Tensor5:
    kernel = np.zeros((channels, channels, kernel_size, kernel_size, kernel_size), dtype=dtype)
    idx = np.arange(channels)
    kernel[idx, idx] = 1.0 / kernel_size**3
    kernel.setflags(write=False)
    return kernel


def serial_merge(conv1x1: Tensor5, avgp: Tensor5) -> Tensor5:
    """
    Compose an average pooling followed by a 1x1x1 convolution.

    ``W_e[o, c, ...] = sum_i W[o, i] * W_a[i, c, ...]``

    Returns:
        Kernel ``[C_O, C_I, K, K, K]`` with ``conv(conv(M, avgp), conv1x1) == conv(M, W_e)``
    """
    check_tensor5(conv1x1, "conv1x1")
    check_tensor5(avgp, "avgp")
    if conv1x1.shape[2:] != (1, 1, 1):
        raise GeometryError(f"Expected a 1x1x1 kernel, got {conv1x1.shape[2:]}")
    if conv1x1.shape[1] != avgp.shape[0]:
        raise DimensionError(
            f"conv1x1 has {conv1x1.shape[1]} input channels, avgp produces {avgp.shape[0]}"
        )
    return np.einsum("oi,icdhw->ocdhw", conv1x1[:, :, 0, 0, 0], avgp)


def serial_merge_backward(d_merged: Tensor5, avgp: Tensor5) -> Tensor5:
    """Gradient of ``serial_merge`` with respect to the 1x1x1 weight."""
    d_w = np.einsum("ocdhw,icdhw->oi", d_merged, avgp)
    return d_w[:, :, None, None, None]


def pad_kernel(kernel: Tensor5, size: int) -> Tensor5:
    """
    Zero-pad a ``K x K x K`` kernel to ``size`` (centered).

    Convolving with the result under ``(size-1)/2`` padding equals
    convolving with the original under ``(K-1)/2`` padding.
    """
    check_tensor5(kernel, "kernel")
    k = kernel.shape[2]
    if kernel.shape[2:] != (k, k, k):
        raise GeometryError(f"Expected a cubic kernel, got {kernel.shape[2:]}")
    if k > size:
        raise GeometryError(f"Cannot pad a {k}^3 kernel down to {size}^3")
    if k % 2 == 0 or size % 2 == 0:
        raise GeometryError(f"Kernel extents must be odd, got {k} -> {size}")
    if k == size:
        return kernel.copy()
    off = (size - k) // 2
    return np.pad(kernel, ((0, 0), (0, 0), (off, off), (off, off), (off, off)))


def merged_kernel_size(specs: Sequence[ExpertSpec]) -> int:
    """
    Extent of the merged kernel for an expert inventory.

    A mixture of two or more experts always merges to ``MERGED_KERNEL_SIZE``,
    so inventories without a K=5 expert still yield a 5x5x5 kernel. A lone
    expert has nothing to merge and keeps its own extent.
    """
    if not specs:
        raise DimensionError("At least one expert is required")
    largest = max(spec.size for spec in specs)
    if len(specs) == 1:
        return largest
    if largest > MERGED_KERNEL_SIZE:
        raise GeometryError(
            f"Expert size {largest} exceeds the merged extent {MERGED_KERNEL_SIZE}"
        )
    return MERGED_KERNEL_SIZE


def _center(size: int, k: int) -> tuple[slice, ...]:
    off = (size - k) // 2
    return (slice(None), slice(None), *(slice(off, off + k),) * 3)


def _check_merge_inputs(kernels: Sequence[Tensor5], gates: GateVector) -> tuple[int, int]:
    if not kernels:
        raise DimensionError("At least one expert kernel is required")
    if gates.ndim != 2 or gates.shape[0] != len(kernels):
        raise DimensionError(f"Expected gates of shape [{len(kernels)}, C_O], got {gates.shape}")
    c_out, c_in = kernels[0].shape[:2]
    for t, kernel in enumerate(kernels):
        if kernel.shape[:2] != (c_out, c_in):
            raise DimensionError(
                f"Expert {t} has channels {kernel.shape[:2]}, expected {(c_out, c_in)}"
            )
    if gates.shape[1] != c_out:
        raise DimensionError(f"Gates cover {gates.shape[1]} channels, kernels have {c_out}")
    return c_out, c_in


def parallel_merge(
    kernels: Sequence[Tensor5],
    gates: GateVector,
    biases: Sequence[np.ndarray | None] | None = None,
    size: int = MERGED_KERNEL_SIZE,
) -> MergedKernel:
    """
    Gate-weighted sum of zero-padded expert kernels.

    ``W = sum_t g_t (.) Pad(W_t, size)`` where ``g_t`` scales each output
    channel slice of expert ``t``; biases merge the same way.

    Args:
        kernels: T serial-merged kernels sharing ``C_O, C_I``
        gates: ``[T, C_O]`` gate values
        biases: Optional per-expert biases (None entries count as zero)
        size: Merged kernel extent

    Returns:
        MergedKernel of extent ``size``
    """
    c_out, c_in = _check_merge_inputs(kernels, gates)
    dtype = np.result_type(gates, *kernels)
    weight = np.zeros((c_out, c_in, size, size, size), dtype=dtype)
    for t, kernel in enumerate(kernels):
        k = kernel.shape[2]
        if k > size or k % 2 == 0:
            raise GeometryError(f"Cannot place a {k}^3 kernel into a {size}^3 merged kernel")
        weight[_center(size, k)] += gates[t][:, None, None, None, None] * kernel

    bias = None
    if biases is not None and any(b is not None for b in biases):
        if len(biases) != len(kernels):
            raise DimensionError(f"Expected {len(kernels)} biases, got {len(biases)}")
        bias = np.zeros(c_out, dtype=dtype)
        for t, b in enumerate(biases):
            if b is not None:
                bias += gates[t] * b
    return MergedKernel(weight, bias)


def parallel_merge_backward(
    d_weight: Tensor5,
    d_bias: np.ndarray | None,
    kernels: Sequence[Tensor5],
    gates: GateVector,
    biases: Sequence[np.ndarray | None] | None = None,
) -> tuple[list[Tensor5], GateVector, list[np.ndarray | None]]:
    """
    Adjoint of ``parallel_merge``.

    Returns:
        ``(d_kernels, d_gates, d_biases)``
    """
    size = d_weight.shape[2]
    d_gates = np.zeros_like(gates, dtype=np.result_type(gates, d_weight))
    d_kernels: list[Tensor5] = []
    d_biases: list[np.ndarray | None] = []
    for t, kernel in enumerate(kernels):
        center = d_weight[_center(size, kernel.shape[2])]
        d_gates[t] = np.sum(center * kernel, axis=(1, 2, 3, 4))
        d_kernels.append(gates[t][:, None, None, None, None] * center)
        b = biases[t] if biases is not None else None
        if b is not None and d_bias is not None:
            d_gates[t] += d_bias * b
            d_biases.append(gates[t] * d_bias)
        else:
            d_biases.append(None)
    return d_kernels, d_gates, d_biases


def merge_experts(experts: Sequence[ExpertKernel], gates: GateVector) -> MergedKernel:
    """Serial-merge every expert, then parallel-merge them with ``gates``."""
    size = merged_kernel_size([e.spec for e in experts])
    biases = [e.bias for e in experts]
    return parallel_merge([e.merged() for e in experts], gates, biases, size)


def branchwise_forward(
    x: Tensor5, experts: Sequence[ExpertKernel], gates: GateVector
) -> Tensor5:
    """
    Evaluate every expert explicitly and sum the gated outputs.

    Avgp-Conv experts run as average pooling followed by a 1x1x1 conv.
    """
    _check_merge_inputs([e.weight for e in experts], gates)
    out: Tensor5 | None = None
    for t, expert in enumerate(experts):
        g = gates[t][None, :, None, None, None]
        branch = g * expert.forward(x)
        if expert.bias is not None:
            branch = branch + (gates[t] * expert.bias)[None, :, None, None, None]
        out = branch if out is None else out + branch
    assert out is not None
    return out


def merged_forward(
    x: Tensor5, experts: Sequence[ExpertKernel], gates: GateVector
) -> Tensor5:
    """One convolution with the GatRep-merged kernel."""
    merged = merge_experts(experts, gates)
    return conv3d(x, merged.weight, merged.bias, Padding3.same(merged.size))
