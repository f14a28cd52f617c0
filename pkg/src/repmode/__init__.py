"""
repmode - Task-conditional re-parameterizable 3D convolutions.

MoDE blocks mix convolution experts with per-task gates; GatRep merges
them into one task-specific kernel so inference runs a single convolution
per block.

Basic Usage:
    import numpy as np
    from repmode import ArchConfig, build_network

    network = build_network(ArchConfig(depth=2, num_tasks=3), np.random.default_rng(0))
    prediction = network.forward(x, task=2)

Kernel algebra:
    from repmode import merge_experts, branchwise_forward

    merged = merge_experts(experts, gates)

Command line:
    repmode gen-data && repmode train && repmode eval --checkpoint runs/default/best.rpmk
"""

__version__ = "0.1.0"

from .cache import KernelCache, kernel_cache
from .checkpoint import load_checkpoint, save_checkpoint
from .exceptions import (
    CacheError,
    ConfigError,
    DimensionError,
    DivergenceError,
    FormatError,
    GeometryError,
    RepModeError,
    StatisticsError,
    ToleranceError,
)
from .gatrep import (
    ExpertKernel,
    ExpertSpec,
    MergedKernel,
    branchwise_forward,
    merge_experts,
    parallel_merge,
    serial_merge,
)
from .mode import GatingConfig, MoDEBlockParams, TaskEmbedder, init_mode_block, mode_forward
from .net import (
    ArchConfig,
    Network,
    build_multi_decoder_network,
    build_network,
    build_plain_network,
    extend_for_new_task,
)
from .registry import ExpertRegistry, experts

__all__ = [
    # Version
    "__version__",
    # Kernel algebra
    "ExpertKernel",
    "ExpertSpec",
    "MergedKernel",
    "branchwise_forward",
    "merge_experts",
    "parallel_merge",
    "serial_merge",
    # Blocks and networks
    "ArchConfig",
    "GatingConfig",
    "MoDEBlockParams",
    "Network",
    "TaskEmbedder",
    "build_multi_decoder_network",
    "build_network",
    "build_plain_network",
    "extend_for_new_task",
    "init_mode_block",
    "mode_forward",
    # Persistence
    "load_checkpoint",
    "save_checkpoint",
    # Shared state
    "ExpertRegistry",
    "KernelCache",
    "experts",
    "kernel_cache",
    # Errors
    "CacheError",
    "ConfigError",
    "DimensionError",
    "DivergenceError",
    "FormatError",
    "GeometryError",
    "RepModeError",
    "StatisticsError",
    "ToleranceError",
]
