"""
RPMK checkpoint format.

Layout (little-endian):

    "RPMK"  u8 version  u32 descriptor length  descriptor (UTF-8 JSON)
    u32 record count, then per record:
        u16 name length, name, u8 dtype code (1=f32, 2=f64), u8 ndim, ndim x u32 shape, data
    u32 stored-gate count, then per entry:
        u16 block name length, block name, u32 task, array record (dtype .. data)

The descriptor carries the architecture, per-block structure (expert lists,
frozen BN), the frozen parameter names and the parameter version, so a
checkpoint of an extended network restores as an extended network.
"""

from __future__ import annotations

import io
import json
import logging
import struct
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np

from .exceptions import FormatError
from .fileio import atomic_open
from .mode import MoDEBlockParams, init_mode_block
from .net import ArchConfig, Network, build_network
from .registry import experts

logger = logging.getLogger(__name__)

MAGIC = b"RPMK"
FORMAT_VERSION = 1
DTYPE_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}


def _write_array(handle: BinaryIO, array: np.ndarray) -> None:
    dtype = array.dtype.newbyteorder("<")
    if dtype not in DTYPE_CODES:
        raise FormatError(f"Unsupported dtype {array.dtype}")
    handle.write(struct.pack("<BB", DTYPE_CODES[dtype], array.ndim))
    handle.write(struct.pack(f"<{array.ndim}I", *array.shape))
    handle.write(np.ascontiguousarray(array, dtype=dtype).tobytes())


def _write_name(handle: BinaryIO, name: str) -> None:
    raw = name.encode("utf-8")
    handle.write(struct.pack("<H", len(raw)))
    handle.write(raw)


class _Reader:
    def __init__(self, data: bytes, path: str) -> None:
        self._data = data
        self._pos = 0
        self._path = path

    def take(self, count: int) -> bytes:
        if self._pos + count > len(self._data):
            raise FormatError(f"{self._path}: truncated checkpoint")
        chunk = self._data[self._pos : self._pos + count]
        self._pos += count
        return chunk

    def unpack(self, fmt: str) -> tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def name(self) -> str:
        (length,) = self.unpack("<H")
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{self._path}: bad record name") from exc

    def array(self) -> np.ndarray:
        code, ndim = self.unpack("<BB")
        if code not in CODE_DTYPES:
            raise FormatError(f"{self._path}: unknown dtype code {code}")
        shape = self.unpack(f"<{ndim}I")
        dtype = CODE_DTYPES[code]
        count = int(np.prod(shape, dtype=np.int64))
        raw = self.take(count * dtype.itemsize)
        return np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))

    def done(self) -> bool:
        return self._pos == len(self._data)


def _descriptor(network: Network) -> dict[str, Any]:
    blocks = {
        name: {
            "experts": [spec.label for spec in block.specs],
            "bias": block.has_bias,
            "bn": block.bn is not None,
            "relu": block.relu,
            "frozen_bn": bool(block.bn is not None and block.bn.frozen),
        }
        for name, block in network.named_blocks()
    }
    resamples = {name: {"frozen_bn": r.bn.frozen} for name, r in network.named_resamples()}
    return {
        "arch": network.config.to_mapping(),
        "dtype": network.dtype.name,
        "version": network.version,
        "frozen": sorted(network.frozen),
        "embedding_seed": network.embedder.seed,
        "blocks": blocks,
        "resamples": resamples,
    }


def save_checkpoint(network: Network, path: str | Path) -> None:
    """Write ``network`` as an RPMK checkpoint (atomically)."""
    buffer = io.BytesIO()
    descriptor = json.dumps(_descriptor(network), sort_keys=True).encode("utf-8")
    buffer.write(MAGIC)
    buffer.write(struct.pack("<BI", FORMAT_VERSION, len(descriptor)))
    buffer.write(descriptor)

    records = {**network.parameters(), **network.buffers()}
    buffer.write(struct.pack("<I", len(records)))
    for name in sorted(records):
        _write_name(buffer, name)
        _write_array(buffer, records[name])

    stored = [
        (name, task, gates)
        for name, block in network.named_blocks()
        for task, gates in sorted(block.stored_gates.items())
    ]
    buffer.write(struct.pack("<I", len(stored)))
    for name, task, gates in stored:
        _write_name(buffer, name)
        buffer.write(struct.pack("<I", task))
        _write_array(buffer, gates)

    with atomic_open(path, "wb") as handle:
        handle.write(buffer.getvalue())
    logger.debug(f"Saved checkpoint {path} ({len(records)} records, {len(stored)} stored gates)")


def load_checkpoint(path: str | Path) -> Network:
    """
    Restore a network saved by ``save_checkpoint``.

    Raises:
        FormatError: Bad magic, unsupported version, truncation or shape mismatch
    """
    with open(path, "rb") as handle:
        reader = _Reader(handle.read(), str(path))
    if reader.take(4) != MAGIC:
        raise FormatError(f"{path}: not an RPMK checkpoint")
    version, length = reader.unpack("<BI")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported RPMK version {version}")
    try:
        descriptor = json.loads(reader.take(length).decode("utf-8"))
        config = ArchConfig.from_descriptor(descriptor["arch"])
        dtype = np.dtype(descriptor["dtype"])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed descriptor: {exc}") from exc

    network = build_network(config, np.random.default_rng(0), dtype)
    _restore_structure(network, descriptor, str(path))

    (count,) = reader.unpack("<I")
    records = {reader.name(): reader.array() for _ in range(count)}
    stored = []
    (gate_count,) = reader.unpack("<I")
    for _ in range(gate_count):
        name = reader.name()
        (task,) = reader.unpack("<I")
        stored.append((name, task, reader.array()))
    if not reader.done():
        raise FormatError(f"{path}: trailing bytes after checkpoint")

    live = {**network.parameters(), **network.buffers()}
    if set(live) != set(records):
        missing = sorted(set(live) - set(records))[:3]
        extra = sorted(set(records) - set(live))[:3]
        raise FormatError(f"{path}: record mismatch (missing {missing}, unexpected {extra})")
    for name, target in live.items():
        source = records[name]
        if source.shape != target.shape:
            raise FormatError(f"{path}: '{name}' has shape {source.shape}, expected {target.shape}")
        np.copyto(target, source)

    blocks = dict(network.named_blocks())
    for name, task, gates in stored:
        if name not in blocks:
            raise FormatError(f"{path}: stored gates for unknown block '{name}'")
        blocks[name].stored_gates[task] = gates

    network.embedder.seed = int(descriptor.get("embedding_seed", 0))
    network.frozen = set(descriptor.get("frozen", []))
    network.version = int(descriptor.get("version", 0))
    return network


def _restore_structure(network: Network, descriptor: dict[str, Any], path: str) -> None:
    """Rebuild blocks whose expert list differs from a fresh build (extended networks)."""
    config = network.config
    layout = descriptor.get("blocks", {})
    rng = np.random.default_rng(0)

    def rebuilt(name: str, block: MoDEBlockParams) -> MoDEBlockParams:
        entry = layout.get(name)
        if entry is None:
            raise FormatError(f"{path}: descriptor lacks block '{name}'")
        labels = entry["experts"]
        if labels != [spec.label for spec in block.specs]:
            block = init_mode_block(
                block.in_channels,
                block.out_channels,
                experts.get(",".join(labels)),
                config.gating,
                config.num_tasks,
                rng,
                network.dtype,
                bn=entry["bn"],
                relu=entry["relu"],
                bias=entry["bias"],
                bn_momentum=config.bn_momentum,
                bn_eps=config.bn_eps,
            )
        if block.bn is not None:
            block.bn.frozen = bool(entry.get("frozen_bn", False))
        return block

    for s, stage in enumerate(network.encoder):
        stage.blocks = [rebuilt(f"enc{s}.block{b}", blk) for b, blk in enumerate(stage.blocks)]
    network.bottleneck = [rebuilt(f"mid.block{b}", blk) for b, blk in enumerate(network.bottleneck)]
    for d, decoder in enumerate(network.decoders):
        for s, dstage in enumerate(decoder.stages):
            dstage.blocks = [
                rebuilt(f"dec{d}.stage{s}.block{b}", blk) for b, blk in enumerate(dstage.blocks)
            ]
        decoder.head = rebuilt(f"dec{d}.head", decoder.head)
    for name, resample in network.named_resamples():
        resample.bn.frozen = bool(descriptor.get("resamples", {}).get(name, {}).get("frozen_bn"))
