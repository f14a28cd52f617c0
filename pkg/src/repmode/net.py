"""
RepMode backbone, baselines and task-incremental extension.

The backbone is a U-shaped encoder-decoder of MoDE blocks:

    encoder   depth x [2 blocks (first doubles channels), down conv 2^3/2 + BN + ReLU]
    bottleneck 2 blocks (first doubles channels)
    decoder   depth x [up convT 2^3/2 + BN + ReLU, concat skip, 2 blocks]
    head      1 block to out_channels, biases, no BN/ReLU

Parameters are addressed by dotted names (``enc0.block1.expert2.weight``,
``dec0.stage1.up.weight``, ``dec0.head.gating.w0``); ``Network.parameters()``
returns the live arrays under those names.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import logging
from collections.abc import Iterator
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np

from .exceptions import ConfigError, FormatError, GeometryError
from .fileio import write_text_atomic
from .gatrep import ExpertSpec
from .mode import (
    GateSource,
    GatingConfig,
    MoDEBlockParams,
    TaskEmbedder,
    TaskEmbedding,
    block_gates,
    extend_block,
    init_mode_block,
    mode_backward,
    mode_forward,
)
from .ops import (
    BNCache,
    BNParams,
    Tensor5,
    batchnorm_backward,
    batchnorm_forward,
    check_tensor5,
    conv3d,
    conv3d_backward,
    conv_transpose3d,
    conv_transpose3d_backward,
    relu,
    relu_backward,
)
from .registry import experts
from .tape import Tape

logger = logging.getLogger(__name__)

_NETWORK_IDS = itertools.count()


class Variant(str, Enum):
    REPMODE = "repmode"
    # Single-task network of plain Conv 3 blocks
    PLAIN = "plain"
    # Shared plain encoder, one plain decoder + head per task
    MULTI_DECODER = "multi_decoder"


class ModeScope(str, Enum):
    ALL = "all"
    ENCODER = "encoder"
    DECODER = "decoder"


@dataclass(frozen=True)
class ArchConfig:
    """Backbone shape, block inventory and gating."""

    depth: int = 2
    base_channels: int = 8
    in_channels: int = 1
    out_channels: int = 1
    num_tasks: int = 3
    experts: str = "default"
    mode_scope: ModeScope = ModeScope.ALL
    variant: Variant = Variant.REPMODE
    gating: GatingConfig = field(default_factory=GatingConfig)
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ConfigError(f"arch.depth must be >= 1, got {self.depth}")
        if min(self.base_channels, self.in_channels, self.out_channels) < 1:
            raise ConfigError("Channel counts must be positive")
        if self.num_tasks < 1:
            raise ConfigError(f"At least one task is required, got {self.num_tasks}")
        # Resolve early so a bad inventory fails at configuration time
        experts.get(self.experts)

    @classmethod
    def from_mapping(
        cls, mapping: dict[str, Any], gating: GatingConfig, num_tasks: int
    ) -> ArchConfig:
        try:
            scope = ModeScope(mapping.get("mode_scope", "all"))
            variant = Variant(mapping.get("variant", "repmode"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(
            depth=int(mapping.get("depth", 2)),
            base_channels=int(mapping.get("base_channels", 8)),
            in_channels=int(mapping.get("in_channels", 1)),
            out_channels=int(mapping.get("out_channels", 1)),
            num_tasks=num_tasks,
            experts=str(mapping.get("experts", "default")),
            mode_scope=scope,
            variant=variant,
            gating=gating,
            bn_momentum=float(mapping.get("bn_momentum", 0.1)),
            bn_eps=float(mapping.get("bn_eps", 1e-5)),
        )

    def to_mapping(self) -> dict[str, Any]:
        return {
            "depth": self.depth,
            "base_channels": self.base_channels,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "num_tasks": self.num_tasks,
            "experts": self.experts,
            "mode_scope": self.mode_scope.value,
            "variant": self.variant.value,
            "gating": self.gating.to_mapping(),
            "bn_momentum": self.bn_momentum,
            "bn_eps": self.bn_eps,
        }

    @classmethod
    def from_descriptor(cls, mapping: dict[str, Any]) -> ArchConfig:
        """Inverse of ``to_mapping`` (checkpoint descriptors)."""
        return cls.from_mapping(
            mapping, GatingConfig.from_mapping(mapping["gating"]), int(mapping["num_tasks"])
        )

    @property
    def expert_specs(self) -> tuple[ExpertSpec, ...]:
        return experts.get(self.experts)

    def channels(self, level: int) -> int:
        return self.base_channels * 2**level


@dataclass(frozen=True)
class ExtensionSpec:
    """Expert added to every MoDE block for a new task, and its fine-tuning budget."""

    expert: str = "conv3"
    epochs: int = 50

    @classmethod
    def from_mapping(cls, mapping: dict[str, Any]) -> ExtensionSpec:
        spec = cls(str(mapping.get("expert", "conv3")), int(mapping.get("epochs", 50)))
        try:
            spec.expert_spec
        except GeometryError as exc:
            raise ConfigError(f"extend.expert: {exc}") from exc
        return spec

    @property
    def expert_spec(self) -> ExpertSpec:
        return ExpertSpec.parse(self.expert)


# =============================================================================
# Resampling
# =============================================================================


class ResampleCache(NamedTuple):
    x: Tensor5
    bn_cache: BNCache
    relu_input: Tensor5


@dataclass
class Resample:
    """
    2x2x2 stride-2 down convolution or up transposed convolution, then BN and ReLU.

    ``weight`` is ``[C_O, C_I, 2, 2, 2]`` for "down" and ``[C_I, C_O, 2, 2, 2]`` for "up".
    """

    kind: str
    weight: np.ndarray
    bn: BNParams

    @classmethod
    def create(
        cls,
        kind: str,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        dtype: np.dtype | type,
        bn_momentum: float = 0.1,
        bn_eps: float = 1e-5,
    ) -> Resample:
        std = np.sqrt(2.0 / (in_channels * 8))
        shape = (
            (out_channels, in_channels, 2, 2, 2)
            if kind == "down"
            else (in_channels, out_channels, 2, 2, 2)
        )
        weight = (rng.standard_normal(shape) * std).astype(dtype)
        return cls(kind, weight, BNParams.create(out_channels, dtype, bn_momentum, bn_eps))

    def named_parameters(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight, "bn.gamma": self.bn.gamma, "bn.beta": self.bn.beta}

    def named_buffers(self) -> dict[str, np.ndarray]:
        return {"bn.running_mean": self.bn.running_mean, "bn.running_var": self.bn.running_var}

    def forward(self, x: Tensor5, mode: str, name: str, tape: Tape | None) -> Tensor5:
        if self.kind == "down":
            z = conv3d(x, self.weight, stride=2)
        else:
            z = conv_transpose3d(x, self.weight)
        z, bn_cache = batchnorm_forward(z, self.bn, mode)  # type: ignore[arg-type]
        if tape is not None:
            tape.record(name, ResampleCache(x, bn_cache, z))
        return relu(z)

    def backward(self, dout: Tensor5, cache: ResampleCache) -> tuple[Tensor5, dict[str, np.ndarray]]:
        d = relu_backward(dout, cache.relu_input)
        d, d_gamma, d_beta = batchnorm_backward(d, cache.bn_cache)
        if self.kind == "down":
            dx, d_weight, _ = conv3d_backward(d, cache.x, self.weight, stride=2)
        else:
            dx, d_weight = conv_transpose3d_backward(d, cache.x, self.weight)
        return dx, {"weight": d_weight, "bn.gamma": d_gamma, "bn.beta": d_beta}


@dataclass
class EncoderStage:
    blocks: list[MoDEBlockParams]
    down: Resample


@dataclass
class DecoderStage:
    up: Resample
    blocks: list[MoDEBlockParams]


@dataclass
class Decoder:
    stages: list[DecoderStage]
    head: MoDEBlockParams


# =============================================================================
# Network
# =============================================================================


@dataclass
class Network:
    """
    Encoder, bottleneck, one or more decoders and the task embedder.

    ``frozen`` names parameters excluded from gradients and updates;
    ``version`` increases with every parameter update so cached merged
    kernels are never stale.
    """

    config: ArchConfig
    encoder: list[EncoderStage]
    bottleneck: list[MoDEBlockParams]
    decoders: list[Decoder]
    embedder: TaskEmbedder
    frozen: set[str] = field(default_factory=set)
    version: int = 0
    uid: int = field(default_factory=lambda: next(_NETWORK_IDS))

    @property
    def dtype(self) -> np.dtype:
        return self.encoder[0].down.weight.dtype

    @property
    def num_tasks(self) -> int:
        return self.embedder.num_tasks

    def embed(self, task: int | TaskEmbedding) -> TaskEmbedding:
        return task if isinstance(task, TaskEmbedding) else self.embedder.embed(task)

    def decoder_index(self, task: int) -> int:
        return task - 1 if len(self.decoders) > 1 else 0

    def named_blocks(self) -> Iterator[tuple[str, MoDEBlockParams]]:
        """Every block with its name, in forward order (all decoders)."""
        for s, stage in enumerate(self.encoder):
            for b, block in enumerate(stage.blocks):
                yield f"enc{s}.block{b}", block
        for b, block in enumerate(self.bottleneck):
            yield f"mid.block{b}", block
        for d, decoder in enumerate(self.decoders):
            for s, dstage in enumerate(decoder.stages):
                for b, block in enumerate(dstage.blocks):
                    yield f"dec{d}.stage{s}.block{b}", block
            yield f"dec{d}.head", decoder.head

    def named_resamples(self) -> Iterator[tuple[str, Resample]]:
        for s, stage in enumerate(self.encoder):
            yield f"enc{s}.down", stage.down
        for d, decoder in enumerate(self.decoders):
            for s, dstage in enumerate(decoder.stages):
                yield f"dec{d}.stage{s}.up", dstage.up

    def mode_blocks(self) -> Iterator[tuple[str, MoDEBlockParams]]:
        """Blocks with more than one expert (gated)."""
        for name, block in self.named_blocks():
            if block.num_experts > 1:
                yield name, block

    def parameters(self) -> dict[str, np.ndarray]:
        named: dict[str, np.ndarray] = {}
        for prefix, module in [*self.named_blocks(), *self.named_resamples()]:
            for key, value in module.named_parameters().items():
                named[f"{prefix}.{key}"] = value
        return dict(sorted(named.items()))

    def buffers(self) -> dict[str, np.ndarray]:
        named: dict[str, np.ndarray] = {"embedding.table": self.embedder.table}
        for prefix, module in [*self.named_blocks(), *self.named_resamples()]:
            for key, value in module.named_buffers().items():
                named[f"{prefix}.{key}"] = value
        return dict(sorted(named.items()))

    def trainable(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.parameters().items() if k not in self.frozen}

    def mark_updated(self) -> None:
        self.version += 1

    def check_input(self, x: Tensor5) -> None:
        check_tensor5(x, "network input")
        factor = 2**self.config.depth
        if any(extent % factor for extent in x.shape[2:]):
            raise GeometryError(
                f"Input extents {x.shape[2:]} must be divisible by 2**depth = {factor}"
            )

    def forward(
        self,
        x: Tensor5,
        task: int | TaskEmbedding,
        path: str = "merged",
        mode: str = "infer",
        tape: Tape | None = None,
    ) -> Tensor5:
        """
        Predict the task's structure for a batch of patches.

        Args:
            x: Input ``[N, in_channels, D, H, W]`` with extents divisible by ``2**depth``
            task: 1-based task index or embedding
            path: "merged" or "branchwise"
            mode: "train" (batch BN statistics) or "infer"
            tape: Records activations for ``backward``

        Returns:
            Prediction ``[N, out_channels, D, H, W]``
        """
        self.check_input(x)
        emb = self.embed(task)
        version = self.version if tape is None and mode == "infer" else None
        opts: dict[str, Any] = {"path": path, "mode": mode, "tape": tape, "version": version}
        opts["cache_scope"] = f"net{self.uid}/"

        h = x
        skips: list[Tensor5] = []
        for s, stage in enumerate(self.encoder):
            for b, block in enumerate(stage.blocks):
                h = mode_forward(h, block, emb, name=f"enc{s}.block{b}", **opts)
            skips.append(h)
            h = stage.down.forward(h, mode, f"enc{s}.down", tape)
        for b, block in enumerate(self.bottleneck):
            h = mode_forward(h, block, emb, name=f"mid.block{b}", **opts)

        d = self.decoder_index(emb.task)
        decoder = self.decoders[d]
        for s, dstage in enumerate(decoder.stages):
            h = dstage.up.forward(h, mode, f"dec{d}.stage{s}.up", tape)
            h = np.concatenate([h, skips[-1 - s]], axis=1)
            for b, block in enumerate(dstage.blocks):
                h = mode_forward(h, block, emb, name=f"dec{d}.stage{s}.block{b}", **opts)
        return mode_forward(h, decoder.head, emb, name=f"dec{d}.head", **opts)

    def backward(
        self, dout: Tensor5, tape: Tape, task: int | TaskEmbedding
    ) -> dict[str, np.ndarray]:
        """
        Gradients of every unfrozen parameter on the recorded task path.

        Raises:
            CacheError: ``tape`` holds no matching forward
        """
        emb = self.embed(task)
        d_index = self.decoder_index(emb.task)
        decoder = self.decoders[d_index]
        grads: dict[str, np.ndarray] = {}

        def collect(prefix: str, named: dict[str, np.ndarray]) -> None:
            for key, value in named.items():
                full = f"{prefix}.{key}"
                if full not in self.frozen:
                    grads[full] = value

        def block_back(d: Tensor5, name: str, block: MoDEBlockParams) -> Tensor5:
            d, g = mode_backward(d, tape.fetch(name), block)
            collect(name, g)
            return d

        prefix = f"dec{d_index}"
        d = block_back(dout, f"{prefix}.head", decoder.head)
        skip_grads: list[Tensor5] = []
        for s in reversed(range(len(decoder.stages))):
            dstage = decoder.stages[s]
            for b in reversed(range(len(dstage.blocks))):
                d = block_back(d, f"{prefix}.stage{s}.block{b}", dstage.blocks[b])
            up_channels = dstage.up.weight.shape[1]
            skip_grads.append(d[:, up_channels:])
            name = f"{prefix}.stage{s}.up"
            d, g = dstage.up.backward(d[:, :up_channels], tape.fetch(name))
            collect(name, g)

        for b in reversed(range(len(self.bottleneck))):
            d = block_back(d, f"mid.block{b}", self.bottleneck[b])

        # skip_grads[i] came from decoder stage len-1-i, which consumed encoder stage i
        for s in reversed(range(len(self.encoder))):
            stage = self.encoder[s]
            name = f"enc{s}.down"
            d, g = stage.down.backward(d, tape.fetch(name))
            collect(name, g)
            d = d + skip_grads[s]
            for b in reversed(range(len(stage.blocks))):
                d = block_back(d, f"enc{s}.block{b}", stage.blocks[b])
        return grads


# =============================================================================
# Builders
# =============================================================================


def _block(
    c_in: int,
    c_out: int,
    config: ArchConfig,
    gated: bool,
    rng: np.random.Generator,
    dtype: np.dtype | type,
    *,
    head: bool = False,
) -> MoDEBlockParams:
    specs = config.expert_specs if gated else experts.get("plain")
    return init_mode_block(
        c_in,
        c_out,
        specs,
        config.gating,
        config.num_tasks,
        rng,
        dtype,
        bn=not head,
        relu=not head,
        bias=head,
        bn_momentum=config.bn_momentum,
        bn_eps=config.bn_eps,
    )


def _decoder(
    config: ArchConfig, gated: bool, rng: np.random.Generator, dtype: np.dtype | type
) -> Decoder:
    stages = []
    for level in reversed(range(config.depth)):
        c = config.channels(level)
        up = Resample.create(
            "up", 2 * c, c, rng, dtype, config.bn_momentum, config.bn_eps
        )
        blocks = [
            _block(2 * c, c, config, gated, rng, dtype),
            _block(c, c, config, gated, rng, dtype),
        ]
        stages.append(DecoderStage(up, blocks))
    head = _block(config.base_channels, config.out_channels, config, gated, rng, dtype, head=True)
    return Decoder(stages, head)


def build_network(
    config: ArchConfig, rng: np.random.Generator, dtype: np.dtype | type = np.float32
) -> Network:
    """
    Build a backbone for ``config.variant``.

    With ``mode_scope`` "encoder" only encoder blocks are gated; with
    "decoder" only decoder blocks and the head; the bottleneck is gated
    only for "all".
    """
    variant = config.variant
    gated_any = variant is Variant.REPMODE
    enc_gated = gated_any and config.mode_scope in (ModeScope.ALL, ModeScope.ENCODER)
    dec_gated = gated_any and config.mode_scope in (ModeScope.ALL, ModeScope.DECODER)
    mid_gated = gated_any and config.mode_scope is ModeScope.ALL

    encoder = []
    c_in = config.in_channels
    for level in range(config.depth):
        c = config.channels(level)
        blocks = [
            _block(c_in, c, config, enc_gated, rng, dtype),
            _block(c, c, config, enc_gated, rng, dtype),
        ]
        down = Resample.create("down", c, c, rng, dtype, config.bn_momentum, config.bn_eps)
        encoder.append(EncoderStage(blocks, down))
        c_in = c
    c_mid = config.channels(config.depth)
    bottleneck = [
        _block(c_in, c_mid, config, mid_gated, rng, dtype),
        _block(c_mid, c_mid, config, mid_gated, rng, dtype),
    ]
    decoder_count = config.num_tasks if variant is Variant.MULTI_DECODER else 1
    decoders = [_decoder(config, dec_gated, rng, dtype) for _ in range(decoder_count)]
    embedder = TaskEmbedder.create(
        config.num_tasks, config.gating.embedding, int(rng.integers(2**31)), dtype
    )
    network = Network(config, encoder, bottleneck, decoders, embedder)
    logger.debug(
        f"Built {variant.value} network: depth {config.depth}, "
        f"{count_parameters(network)} parameters"
    )
    return network


def build_plain_network(
    config: ArchConfig, rng: np.random.Generator, dtype: np.dtype | type = np.float32
) -> Network:
    """Single-task baseline with plain Conv 3 blocks everywhere."""
    return build_network(replace(config, variant=Variant.PLAIN), rng, dtype)


def build_multi_decoder_network(
    config: ArchConfig, rng: np.random.Generator, dtype: np.dtype | type = np.float32
) -> Network:
    """Shared plain encoder with one plain decoder and head per task."""
    return build_network(replace(config, variant=Variant.MULTI_DECODER), rng, dtype)


def count_parameters(network: Network) -> int:
    return sum(int(v.size) for v in network.parameters().values())


def frozen_checksum(network: Network) -> str:
    """SHA-256 over frozen parameters in name order."""
    h = hashlib.sha256()
    params = network.parameters()
    for name in sorted(network.frozen):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name]).tobytes())
    return h.hexdigest()


def _all_bn(network: Network) -> Iterator[BNParams]:
    for _, block in network.named_blocks():
        if block.bn is not None:
            yield block.bn
    for _, resample in network.named_resamples():
        yield resample.bn


# =============================================================================
# Task-incremental extension
# =============================================================================


def extend_for_new_task(
    network: Network, spec: ExtensionSpec, rng: np.random.Generator
) -> Network:
    """
    Prepare a copy of ``network`` for task S + 1.

    Every gated block gains ``spec.expert`` and a fresh zero-initialized
    gating module over S + 1 tasks. Previous tasks replay their current
    gates (stored, with a zero for the new expert), so their outputs are
    unchanged. All pre-existing parameters are frozen and every BN switches
    to its running statistics.

    Raises:
        ConfigError: Non-RepMode variant or input-dependent gating
    """
    if network.config.variant is not Variant.REPMODE:
        raise ConfigError(
            f"Expert extension needs a repmode network, got {network.config.variant.value}"
        )
    if network.config.gating.source is GateSource.INPUT:
        raise ConfigError("Task-incremental extension needs task-embedding gating")

    previous = [network.embedder.embed(t) for t in range(1, network.num_tasks + 1)]
    extended = copy.deepcopy(network)
    # Every gated block gets a new gating module under the same names
    extended.frozen = {name for name in extended.parameters() if ".gating." not in name}
    for bn in _all_bn(extended):
        bn.frozen = True

    expert = spec.expert_spec
    for stage in extended.encoder:
        stage.blocks = [_extend(b, expert, previous, rng) for b in stage.blocks]
    extended.bottleneck = [_extend(b, expert, previous, rng) for b in extended.bottleneck]
    for decoder in extended.decoders:
        for dstage in decoder.stages:
            dstage.blocks = [_extend(b, expert, previous, rng) for b in dstage.blocks]
        decoder.head = _extend(decoder.head, expert, previous, rng)

    extended.uid = next(_NETWORK_IDS)
    extended.embedder = network.embedder.extend()
    extended.config = replace(network.config, num_tasks=network.num_tasks + 1)
    extended.mark_updated()
    logger.info(
        f"Extended network for task {extended.num_tasks} with {expert} experts; "
        f"{len(extended.frozen)} parameter groups frozen"
    )
    return extended


def _extend(
    block: MoDEBlockParams,
    expert: ExpertSpec,
    previous: list[TaskEmbedding],
    rng: np.random.Generator,
) -> MoDEBlockParams:
    if block.num_experts == 1 and not block.stored_gates:
        return block
    return extend_block(block, expert, previous, rng)


def extend_multi_decoder(network: Network, rng: np.random.Generator) -> Network:
    """Copy of a multi-decoder network with one more decoder; nothing is frozen."""
    if network.config.variant is not Variant.MULTI_DECODER:
        raise ConfigError("extend_multi_decoder needs a multi_decoder network")
    extended = copy.deepcopy(network)
    extended.decoders.append(_decoder(network.config, False, rng, network.dtype))
    extended.uid = next(_NETWORK_IDS)
    extended.embedder = network.embedder.extend()
    extended.config = replace(network.config, num_tasks=network.num_tasks + 1)
    extended.mark_updated()
    return extended


# =============================================================================
# Gate summaries
# =============================================================================


def gating_summary(network: Network, task: int) -> dict[str, np.ndarray]:
    """
    Channel-averaged gates per gated block for ``task``.

    Returns:
        Block name -> T-vector
    """
    if network.config.gating.source is GateSource.INPUT:
        raise ConfigError("Gate summaries need task-embedding gating")
    emb = network.embed(task)
    d = network.decoder_index(task)
    summary: dict[str, np.ndarray] = {}
    for name, block in network.mode_blocks():
        if name.startswith("dec") and not name.startswith(f"dec{d}."):
            continue
        gates, _ = block_gates(block, emb)
        summary[name] = gates.mean(axis=1)
    return summary


def write_gating_summary(network: Network, path: str | Path) -> int:
    """
    Write ``task<TAB>block<TAB>g_1 ... g_T`` rows for every task and gated block.

    Returns:
        Number of rows written
    """
    lines = ["# task\tblock\tgates"]
    for task in range(1, network.num_tasks + 1):
        for name, values in gating_summary(network, task).items():
            lines.append(f"{task}\t{name}\t" + " ".join(f"{v:.17g}" for v in values))
    write_text_atomic(path, "\n".join(lines) + "\n")
    return len(lines) - 1


def read_gating_summary(path: str | Path) -> dict[tuple[int, str], np.ndarray]:
    summary: dict[tuple[int, str], np.ndarray] = {}
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}:{number}: expected 3 tab-separated fields")
            try:
                summary[(int(parts[0]), parts[1])] = np.array([float(v) for v in parts[2].split()])
            except ValueError as exc:
                raise FormatError(f"{path}:{number}: {exc}") from exc
    return summary


def gate_mass_by_size(network: Network, task: int) -> dict[int, float]:
    """
    Mean gate mass per expert receptive field over the gated blocks of ``task``.

    Returns:
        Expert size K -> gate mass averaged over blocks and channels
    """
    totals: dict[int, list[float]] = {}
    d = network.decoder_index(task)
    emb = network.embed(task)
    for name, block in network.mode_blocks():
        if name.startswith("dec") and not name.startswith(f"dec{d}."):
            continue
        gates, _ = block_gates(block, emb)
        per_size: dict[int, float] = {}
        for spec, row in zip(block.specs, gates):
            per_size[spec.size] = per_size.get(spec.size, 0.0) + float(row.mean())
        for size, mass in per_size.items():
            totals.setdefault(size, []).append(mass)
    return {size: float(np.mean(values)) for size, values in sorted(totals.items())}
