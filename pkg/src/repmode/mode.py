"""
MoDE block: task embedding, gating module and the block forward/backward.

A block owns T experts sharing ``C_I`` and ``C_O``. For a task the gating
module maps the task embedding (or the pooled block input) to a ``[T, C_O]``
gate matrix; GatRep folds the experts and gates into one kernel, followed by
optional BN and ReLU.

Usage:
    from repmode.mode import GatingConfig, TaskEmbedder, init_mode_block, mode_forward

    block = init_mode_block(8, 16, experts.get("default"), GatingConfig(), 3, rng)
    task = TaskEmbedder.create(3).embed(2)
    out = mode_forward(x, block, task)
"""

from __future__ import annotations

import hashlib
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Literal, NamedTuple

import numpy as np
from scipy.special import expit, softmax

from .cache import kernel_cache
from .exceptions import ConfigError, DimensionError
from .gatrep import (
    ExpertKernel,
    ExpertKind,
    ExpertSpec,
    GateVector,
    MergedKernel,
    branchwise_forward,
    build_avgp_kernel,
    merge_experts,
    merged_kernel_size,
    parallel_merge,
    parallel_merge_backward,
    serial_merge_backward,
)
from .ops import (
    REDUCE_AXES,
    BNCache,
    BNParams,
    Padding3,
    Tensor5,
    avgpool3d,
    batchnorm_backward,
    batchnorm_forward,
    check_tensor5,
    conv3d,
    conv3d_backward,
    relu,
    relu_backward,
)
from .tape import Tape

logger = logging.getLogger(__name__)

ForwardPath = Literal["merged", "branchwise"]
Mode = Literal["train", "infer"]


class EmbeddingOrigin(str, Enum):
    ONE_HOT = "one_hot"
    GAUSSIAN = "gaussian"


class FCNKind(str, Enum):
    SINGLE = "single"
    TWO_LAYER = "two_layer"


class GateActivation(str, Enum):
    SOFTMAX = "softmax"
    SIGMOID = "sigmoid"


class GateSource(str, Enum):
    TASK = "task"
    INPUT = "input"


def _enum(kind: type[Enum], value: Any, key: str) -> Any:
    try:
        return kind(value)
    except ValueError:
        allowed = ", ".join(member.value for member in kind)  # type: ignore[attr-defined]
        raise ConfigError(f"'{key}' must be one of {allowed}, got {value!r}") from None


# =============================================================================
# Task embedding
# =============================================================================


@dataclass(frozen=True)
class TaskEmbedding:
    """Prior vector conditioning the network on task ``task`` (1-based)."""

    values: np.ndarray
    origin: EmbeddingOrigin
    task: int

    @property
    def size(self) -> int:
        return int(self.values.shape[0])

    @property
    def digest(self) -> str:
        """Stable key for caching merged kernels."""
        h = hashlib.sha256(f"{self.origin.value}:{self.task}:".encode())
        h.update(np.ascontiguousarray(self.values).tobytes())
        return h.hexdigest()[:16]


def one_hot_embed(task: int, num_tasks: int, dtype: np.dtype | type = np.float32) -> TaskEmbedding:
    """
    One-hot task embedding with the hot entry at ``task``.

    Args:
        task: Task index, 1..num_tasks
        num_tasks: S
    """
    if not 1 <= task <= num_tasks:
        raise DimensionError(f"Task index {task} outside 1..{num_tasks}")
    values = np.zeros(num_tasks, dtype=dtype)
    values[task - 1] = 1
    return TaskEmbedding(values, EmbeddingOrigin.ONE_HOT, task)


def gaussian_embed(
    task: int, num_tasks: int, seed: int, dtype: np.dtype | type = np.float32
) -> TaskEmbedding:
    """Standard-normal embedding for ``task``, drawn from ``(seed, task)``."""
    if not 1 <= task <= num_tasks:
        raise DimensionError(f"Task index {task} outside 1..{num_tasks}")
    values = np.random.default_rng([seed, task]).standard_normal(num_tasks).astype(dtype)
    return TaskEmbedding(values, EmbeddingOrigin.GAUSSIAN, task)


@dataclass
class TaskEmbedder:
    """
    Embedding table for S tasks; row ``l - 1`` embeds task ``l``.

    Gaussian rows are drawn once and travel with checkpoints.
    """

    table: np.ndarray
    origin: EmbeddingOrigin = EmbeddingOrigin.ONE_HOT
    seed: int = 0

    @classmethod
    def create(
        cls,
        num_tasks: int,
        origin: EmbeddingOrigin = EmbeddingOrigin.ONE_HOT,
        seed: int = 0,
        dtype: np.dtype | type = np.float32,
    ) -> TaskEmbedder:
        if num_tasks < 1:
            raise ConfigError(f"At least one task is required, got {num_tasks}")
        if origin is EmbeddingOrigin.ONE_HOT:
            table = np.eye(num_tasks, dtype=dtype)
        else:
            table = np.stack(
                [gaussian_embed(t, num_tasks, seed, dtype).values for t in range(1, num_tasks + 1)]
            )
        return cls(table, origin, seed)

    @property
    def num_tasks(self) -> int:
        return int(self.table.shape[0])

    def embed(self, task: int) -> TaskEmbedding:
        if not 1 <= task <= self.num_tasks:
            raise DimensionError(f"Task index {task} outside 1..{self.num_tasks}")
        return TaskEmbedding(self.table[task - 1].copy(), self.origin, task)

    def extend(self) -> TaskEmbedder:
        """Embedder for S + 1 tasks; existing rows keep their values."""
        s = self.num_tasks
        table = np.zeros((s + 1, s + 1), dtype=self.table.dtype)
        table[:s, :s] = self.table
        if self.origin is EmbeddingOrigin.ONE_HOT:
            table[s, s] = 1
        else:
            table[s] = gaussian_embed(s + 1, s + 1, self.seed, self.table.dtype).values
        return TaskEmbedder(table, self.origin, self.seed)


# =============================================================================
# Gating module
# =============================================================================


@dataclass(frozen=True)
class GatingConfig:
    """Gating FCN shape, activation and input source."""

    fcn: FCNKind = FCNKind.SINGLE
    hidden: int = 6
    activation: GateActivation = GateActivation.SOFTMAX
    source: GateSource = GateSource.TASK
    embedding: EmbeddingOrigin = EmbeddingOrigin.ONE_HOT

    def __post_init__(self) -> None:
        if self.hidden < 1:
            raise ConfigError(f"gating.hidden must be positive, got {self.hidden}")

    @classmethod
    def from_mapping(cls, mapping: dict[str, Any]) -> GatingConfig:
        return cls(
            fcn=_enum(FCNKind, mapping.get("fcn", "single"), "gating.fcn"),
            hidden=int(mapping.get("hidden", 6)),
            activation=_enum(
                GateActivation, mapping.get("activation", "softmax"), "gating.activation"
            ),
            source=_enum(GateSource, mapping.get("source", "task"), "gating.source"),
            embedding=_enum(
                EmbeddingOrigin, mapping.get("embedding", "one_hot"), "gating.embedding"
            ),
        )

    def to_mapping(self) -> dict[str, Any]:
        return {
            "fcn": self.fcn.value,
            "hidden": self.hidden,
            "activation": self.activation.value,
            "source": self.source.value,
            "embedding": self.embedding.value,
        }


@dataclass
class GatingModule:
    """
    Fully connected gating network producing ``T * C_O`` logits.

    ``weights[i]`` is ``[out, in]``; the last layer emits the logits, laid
    out expert-major (row ``t * C_O + c``).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    num_experts: int
    out_channels: int

    @classmethod
    def create(
        cls,
        in_features: int,
        num_experts: int,
        out_channels: int,
        config: GatingConfig,
        rng: np.random.Generator,
        dtype: np.dtype | type = np.float32,
    ) -> GatingModule:
        """Zero output layer (uniform initial gates); fan-in normal hidden layer."""
        logits = num_experts * out_channels
        weights: list[np.ndarray] = []
        biases: list[np.ndarray] = []
        if config.fcn is FCNKind.TWO_LAYER:
            std = np.sqrt(2.0 / in_features)
            weights.append((rng.standard_normal((config.hidden, in_features)) * std).astype(dtype))
            biases.append(np.zeros(config.hidden, dtype=dtype))
            in_features = config.hidden
        weights.append(np.zeros((logits, in_features), dtype=dtype))
        biases.append(np.zeros(logits, dtype=dtype))
        return cls(weights, biases, num_experts, out_channels)

    @property
    def in_features(self) -> int:
        return int(self.weights[0].shape[1])

    def named_parameters(self) -> dict[str, np.ndarray]:
        named: dict[str, np.ndarray] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            named[f"w{i}"] = w
            named[f"b{i}"] = b
        return named


class GateCache(NamedTuple):
    source: np.ndarray
    hidden_pre: np.ndarray | None
    gates: GateVector


def activate(logits: np.ndarray, activation: GateActivation) -> GateVector:
    """Softmax across experts (axis 0) per channel, or elementwise sigmoid."""
    if activation is GateActivation.SOFTMAX:
        return softmax(logits, axis=0)
    return expit(logits)


def gate_forward(
    source: np.ndarray, module: GatingModule, config: GatingConfig
) -> tuple[GateVector, GateCache]:
    if source.ndim != 1 or source.shape[0] != module.in_features:
        raise DimensionError(
            f"Gating expects a {module.in_features}-vector, got shape {source.shape}"
        )
    h = source
    hidden_pre = None
    if len(module.weights) == 2:
        hidden_pre = module.weights[0] @ h + module.biases[0]
        h = relu(hidden_pre)
    logits = module.weights[-1] @ h + module.biases[-1]
    gates = activate(logits.reshape(module.num_experts, module.out_channels), config.activation)
    return gates, GateCache(source, hidden_pre, gates)


def gate(source: np.ndarray, module: GatingModule, config: GatingConfig) -> GateVector:
    """
    Gate matrix ``[T, C_O]`` for an embedding or pooled input vector.

    Args:
        source: Task embedding values or the block input pooled to ``C_I``
        module: Gating weights
        config: Activation variant
    """
    return gate_forward(source, module, config)[0]


def gate_backward(
    d_gates: GateVector, cache: GateCache, module: GatingModule, config: GatingConfig
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """
    Gradients of the gating module.

    Returns:
        ``(named_grads, d_source)`` with names matching ``named_parameters``
    """
    g = cache.gates
    if config.activation is GateActivation.SOFTMAX:
        d_logits = g * (d_gates - np.sum(g * d_gates, axis=0, keepdims=True))
    else:
        d_logits = d_gates * g * (1 - g)
    d_logits = d_logits.reshape(-1)

    grads: dict[str, np.ndarray] = {}
    last = len(module.weights) - 1
    h = cache.source if cache.hidden_pre is None else relu(cache.hidden_pre)
    grads[f"w{last}"] = np.outer(d_logits, h)
    grads[f"b{last}"] = d_logits
    d_h = module.weights[last].T @ d_logits
    if cache.hidden_pre is not None:
        d_pre = d_h * (cache.hidden_pre > 0)
        grads["w0"] = np.outer(d_pre, cache.source)
        grads["b0"] = d_pre
        d_h = module.weights[0].T @ d_pre
    return grads, d_h


# =============================================================================
# MoDE block
# =============================================================================


@dataclass
class MoDEBlockParams:
    """
    Experts, gating and post-processing of one MoDE block.

    ``gating`` is None for single-expert (plain) blocks, whose gate is 1.
    ``stored_gates`` maps a task index to a fixed ``[T, C_O]`` gate matrix
    that overrides the gating module (used after task-incremental extension).
    """

    experts: list[ExpertKernel]
    config: GatingConfig = field(default_factory=GatingConfig)
    gating: GatingModule | None = None
    bn: BNParams | None = None
    relu: bool = True
    stored_gates: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.experts:
            raise DimensionError("A MoDE block needs at least one expert")
        shape = (self.experts[0].out_channels, self.experts[0].in_channels)
        for t, expert in enumerate(self.experts):
            if (expert.out_channels, expert.in_channels) != shape:
                raise DimensionError(
                    f"Expert {t} ({expert.spec}) maps {expert.in_channels}->"
                    f"{expert.out_channels}, expected {shape[1]}->{shape[0]}"
                )
        if self.gating is not None and self.gating.num_experts != len(self.experts):
            raise DimensionError(
                f"Gating produces {self.gating.num_experts} experts, block has {len(self.experts)}"
            )
        if self.gating is None and len(self.experts) > 1 and not self.stored_gates:
            raise DimensionError("Multi-expert blocks need a gating module")

    @property
    def num_experts(self) -> int:
        return len(self.experts)

    @property
    def in_channels(self) -> int:
        return self.experts[0].in_channels

    @property
    def out_channels(self) -> int:
        return self.experts[0].out_channels

    @property
    def specs(self) -> list[ExpertSpec]:
        return [e.spec for e in self.experts]

    @property
    def has_bias(self) -> bool:
        return self.experts[0].bias is not None

    def named_parameters(self) -> dict[str, np.ndarray]:
        named: dict[str, np.ndarray] = {}
        for t, expert in enumerate(self.experts):
            named[f"expert{t}.weight"] = expert.weight
            if expert.bias is not None:
                named[f"expert{t}.bias"] = expert.bias
        if self.gating is not None:
            for key, value in self.gating.named_parameters().items():
                named[f"gating.{key}"] = value
        if self.bn is not None:
            named["bn.gamma"] = self.bn.gamma
            named["bn.beta"] = self.bn.beta
        return named

    def named_buffers(self) -> dict[str, np.ndarray]:
        if self.bn is None:
            return {}
        return {"bn.running_mean": self.bn.running_mean, "bn.running_var": self.bn.running_var}


def init_mode_block(
    in_channels: int,
    out_channels: int,
    specs: Sequence[ExpertSpec],
    config: GatingConfig,
    num_tasks: int,
    rng: np.random.Generator,
    dtype: np.dtype | type = np.float32,
    *,
    bn: bool = True,
    relu: bool = True,
    bias: bool = False,
    bn_momentum: float = 0.1,
    bn_eps: float = 1e-5,
) -> MoDEBlockParams:
    """
    Initialize a MoDE block.

    Expert weights are fan-in scaled normal, ``std = sqrt(2 / (C_I * k**3))``
    with ``k`` the weight's own extent; biases and gating output weights are
    zero so every expert starts with gate ``1/T``.
    """
    if in_channels < 1 or out_channels < 1:
        raise DimensionError(f"Channel extents must be positive, got {in_channels}->{out_channels}")
    if not specs:
        raise ConfigError("Expert inventory is empty")
    experts = [_init_expert(spec, in_channels, out_channels, rng, dtype, bias) for spec in specs]
    gating = None
    if len(specs) > 1:
        gating_in = num_tasks if config.source is GateSource.TASK else in_channels
        gating = GatingModule.create(gating_in, len(specs), out_channels, config, rng, dtype)
    return MoDEBlockParams(
        experts=experts,
        config=config,
        gating=gating,
        bn=BNParams.create(out_channels, dtype, bn_momentum, bn_eps) if bn else None,
        relu=relu,
    )


def _init_expert(
    spec: ExpertSpec,
    in_channels: int,
    out_channels: int,
    rng: np.random.Generator,
    dtype: np.dtype | type,
    bias: bool,
) -> ExpertKernel:
    k = spec.weight_extent
    std = np.sqrt(2.0 / (in_channels * k**3))
    weight = (rng.standard_normal((out_channels, in_channels, k, k, k)) * std).astype(dtype)
    return ExpertKernel(spec, weight, np.zeros(out_channels, dtype=dtype) if bias else None)


def _source_vector(x: Tensor5 | None, task: TaskEmbedding, block: MoDEBlockParams) -> np.ndarray:
    if block.config.source is GateSource.TASK:
        return task.values
    if x is None:
        raise ConfigError("Input-dependent gating needs the block input")
    return x.mean(axis=REDUCE_AXES)


def block_gates(
    block: MoDEBlockParams, task: TaskEmbedding, x: Tensor5 | None = None
) -> tuple[GateVector, GateCache | None]:
    """Gates of ``block`` for ``task``; the cache is None when gates are fixed."""
    if task.task in block.stored_gates:
        return block.stored_gates[task.task], None
    if block.gating is None:
        return np.ones((1, block.out_channels), dtype=block.experts[0].weight.dtype), None
    return gate_forward(_source_vector(x, task, block), block.gating, block.config)


def effective_kernel(
    block: MoDEBlockParams, task: TaskEmbedding, x: Tensor5 | None = None
) -> MergedKernel:
    """Task-specific merged kernel of ``block`` (``x`` only for input-dependent gating)."""
    gates, _ = block_gates(block, task, x)
    return merge_experts(block.experts, gates)


class BlockCache(NamedTuple):
    x: Tensor5
    path: str
    gates: GateVector
    gate_cache: GateCache | None
    serial: list[Tensor5]
    merged: MergedKernel | None
    branch_inputs: list[Tensor5]
    branch_outputs: list[Tensor5]
    bn_cache: BNCache | None
    relu_input: Tensor5 | None


def _post(
    conv_out: Tensor5, block: MoDEBlockParams, mode: Mode
) -> tuple[Tensor5, BNCache | None, Tensor5 | None]:
    out, bn_cache = conv_out, None
    if block.bn is not None:
        out, bn_cache = batchnorm_forward(out, block.bn, mode)
    relu_input = None
    if block.relu:
        relu_input = out
        out = relu(out)
    return out, bn_cache, relu_input


def mode_forward(
    x: Tensor5,
    block: MoDEBlockParams,
    task: TaskEmbedding,
    path: ForwardPath = "merged",
    mode: Mode = "infer",
    *,
    name: str = "block",
    tape: Tape | None = None,
    version: int | None = None,
    cache_scope: str = "",
) -> Tensor5:
    """
    Forward pass of one MoDE block.

    Merged: gate, GatRep merge, one convolution. Branchwise: every expert
    explicitly. Both continue with optional BN and ReLU.

    Args:
        x: Input ``[N, C_I, D, H, W]``
        block: Block parameters
        task: Task embedding
        path: "merged" or "branchwise"
        mode: BN mode
        name: Block name used for tape records and kernel caching
        tape: Records activations for ``mode_backward`` when given
        version: Network parameter version; enables the merged-kernel cache
            for tape-free task-gated inference
        cache_scope: Prefix separating cache entries of different networks

    Returns:
        Output ``[N, C_O, D, H, W]``
    """
    check_tensor5(x, f"{name} input")
    if x.shape[1] != block.in_channels:
        raise DimensionError(f"{name} expects {block.in_channels} channels, got {x.shape[1]}")
    if path not in ("merged", "branchwise"):
        raise ConfigError(f"path must be 'merged' or 'branchwise', got {path!r}")

    if block.config.source is GateSource.INPUT and mode == "infer" and x.shape[0] > 1:
        # Pool and gate each sample on its own
        conv_out = np.concatenate(
            [_convolve(x[i : i + 1], block, task, path)[0] for i in range(x.shape[0])]
        )
        return _post(conv_out, block, mode)[0]

    if tape is None and path == "merged" and version is not None:
        fixed = task.task in block.stored_gates or block.config.source is GateSource.TASK
        if fixed:
            merged = kernel_cache.get(cache_scope + name, task.digest, version)
            if merged is None:
                merged = effective_kernel(block, task)
                kernel_cache.set(cache_scope + name, task.digest, merged, version)
            conv_out = conv3d(x, merged.weight, merged.bias, Padding3.same(merged.size))
            return _post(conv_out, block, mode)[0]

    conv_out, cache = _convolve(x, block, task, path, keep=tape is not None)
    out, bn_cache, relu_input = _post(conv_out, block, mode)
    if tape is not None:
        assert cache is not None
        tape.record(name, cache._replace(bn_cache=bn_cache, relu_input=relu_input))
    return out


def _convolve(
    x: Tensor5, block: MoDEBlockParams, task: TaskEmbedding, path: str, keep: bool = False
) -> tuple[Tensor5, BlockCache | None]:
    gates, gate_cache = block_gates(block, task, x)
    biases = [e.bias for e in block.experts]
    if path == "merged":
        serial = [e.merged() for e in block.experts]
        merged = parallel_merge(serial, gates, biases, merged_kernel_size(block.specs))
        out = conv3d(x, merged.weight, merged.bias, Padding3.same(merged.size))
        if not keep:
            return out, None
        return out, BlockCache(x, path, gates, gate_cache, serial, merged, [], [], None, None)

    if not keep:
        return branchwise_forward(x, block.experts, gates), None
    inputs: list[Tensor5] = []
    outputs: list[Tensor5] = []
    out = None
    for t, expert in enumerate(block.experts):
        if expert.spec.kind is ExpertKind.CONV:
            branch_in = x
            branch_out = conv3d(x, expert.weight, padding=Padding3.same(expert.spec.size))
        else:
            branch_in = avgpool3d(x, expert.spec.size)
            branch_out = conv3d(branch_in, expert.weight)
        inputs.append(branch_in)
        outputs.append(branch_out)
        term = gates[t][None, :, None, None, None] * branch_out
        if expert.bias is not None:
            term = term + (gates[t] * expert.bias)[None, :, None, None, None]
        out = term if out is None else out + term
    assert out is not None
    return out, BlockCache(x, path, gates, gate_cache, [], None, inputs, outputs, None, None)


def mode_backward(
    dout: Tensor5, cache: BlockCache, block: MoDEBlockParams
) -> tuple[Tensor5, dict[str, np.ndarray]]:
    """
    Backward pass of one MoDE block.

    Returns:
        ``(d_input, grads)`` with grads named as ``block.named_parameters()``
    """
    grads: dict[str, np.ndarray] = {}
    d = dout
    if block.relu:
        assert cache.relu_input is not None
        d = relu_backward(d, cache.relu_input)
    if block.bn is not None:
        assert cache.bn_cache is not None
        d, grads["bn.gamma"], grads["bn.beta"] = batchnorm_backward(d, cache.bn_cache)

    biases = [e.bias for e in block.experts]
    if cache.path == "merged":
        assert cache.merged is not None
        dx, d_weight, d_bias = conv3d_backward(
            d, cache.x, cache.merged.weight, Padding3.same(cache.merged.size)
        )
        d_serial, d_gates, d_biases = parallel_merge_backward(
            d_weight, d_bias if block.has_bias else None, cache.serial, cache.gates, biases
        )
        for t, expert in enumerate(block.experts):
            if expert.spec.kind is ExpertKind.CONV:
                grads[f"expert{t}.weight"] = d_serial[t]
            else:
                avgp = build_avgp_kernel(expert.in_channels, expert.spec.size, expert.weight.dtype)
                grads[f"expert{t}.weight"] = serial_merge_backward(d_serial[t], avgp)
            if d_biases[t] is not None:
                grads[f"expert{t}.bias"] = d_biases[t]  # type: ignore[assignment]
    else:
        dx = np.zeros_like(cache.x, dtype=np.result_type(cache.x, d))
        d_gates = np.zeros_like(cache.gates, dtype=np.result_type(cache.gates, d))
        d_sum = d.sum(axis=REDUCE_AXES)
        for t, expert in enumerate(block.experts):
            d_gates[t] = np.sum(d * cache.branch_outputs[t], axis=REDUCE_AXES)
            d_branch = cache.gates[t][None, :, None, None, None] * d
            if expert.spec.kind is ExpertKind.CONV:
                dx_t, d_w, _ = conv3d_backward(
                    d_branch, cache.x, expert.weight, Padding3.same(expert.spec.size)
                )
            else:
                d_pooled, d_w, _ = conv3d_backward(d_branch, cache.branch_inputs[t], expert.weight)
                dx_t = avgpool3d(d_pooled, expert.spec.size)
            dx += dx_t
            grads[f"expert{t}.weight"] = d_w
            if expert.bias is not None:
                d_gates[t] += d_sum * expert.bias
                grads[f"expert{t}.bias"] = cache.gates[t] * d_sum

    if cache.gate_cache is not None:
        assert block.gating is not None
        gating_grads, d_source = gate_backward(d_gates, cache.gate_cache, block.gating, block.config)
        for key, value in gating_grads.items():
            grads[f"gating.{key}"] = value
        if block.config.source is GateSource.INPUT:
            count = cache.x.size // cache.x.shape[1]
            dx = dx + (d_source / count)[None, :, None, None, None]
    return dx, grads


def extend_block(
    block: MoDEBlockParams,
    new_expert: ExpertSpec,
    previous: Sequence[TaskEmbedding],
    rng: np.random.Generator,
) -> MoDEBlockParams:
    """
    Add one expert and a fresh gating module sized for ``len(previous) + 1`` tasks.

    Previous tasks keep their current gates, stored with a zero entry for
    the new expert. Existing expert arrays are shared, not copied.
    """
    if block.config.source is GateSource.INPUT:
        raise ConfigError("Task-incremental extension needs task-embedding gating")
    dtype = block.experts[0].weight.dtype
    stored: dict[int, np.ndarray] = {}
    for task in previous:
        gates, _ = block_gates(block, task)
        stored[task.task] = np.vstack([gates, np.zeros((1, block.out_channels), dtype=gates.dtype)])
    expert = _init_expert(new_expert, block.in_channels, block.out_channels, rng, dtype, block.has_bias)
    experts = [*block.experts, expert]
    gating = GatingModule.create(
        len(previous) + 1, len(experts), block.out_channels, block.config, rng, dtype
    )
    return MoDEBlockParams(
        experts=experts,
        config=block.config,
        gating=gating,
        bn=block.bn,
        relu=block.relu,
        stored_gates=stored,
    )

