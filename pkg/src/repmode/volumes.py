"""
Volumes, samples and their on-disk formats.

VOL5 volume file (little-endian):

    "VOL5"  u8 version (1)  u8 dtype code (1=f32, 2=f64)  u32 D  u32 H  u32 W  payload

Manifest: tab-separated, one header line, then one row per sample:

    sample_id  input  target  label  split
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .exceptions import DimensionError, FormatError, StatisticsError
from .fileio import write_bytes_atomic, write_text_atomic

VOL5_MAGIC = b"VOL5"
VOL5_VERSION = 1
VOL5_HEADER = struct.Struct("<4sBB3I")
VOL5_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}

SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.tsv"
MANIFEST_COLUMNS = ("sample_id", "input", "target", "label", "split")


@dataclass(frozen=True)
class Volume:
    """A ``D x H x W`` intensity volume with isotropic voxel size."""

    data: np.ndarray
    voxel_size: float = 1.0

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise DimensionError(f"Volume must be 3D, got shape {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise StatisticsError("Volume contains non-finite intensities")

    @property
    def extents(self) -> tuple[int, int, int]:
        d, h, w = self.data.shape
        return (d, h, w)


@dataclass(frozen=True)
class Sample:
    """One training/evaluation triple: input, target of one structure, label."""

    sample_id: str
    input: Volume
    target: Volume
    label: int
    split: str = "train"

    def __post_init__(self) -> None:
        if self.input.extents != self.target.extents:
            raise DimensionError(
                f"{self.sample_id}: input {self.input.extents} and target "
                f"{self.target.extents} extents differ"
            )
        if self.label < 1:
            raise DimensionError(f"{self.sample_id}: label must be >= 1, got {self.label}")
        if self.split not in SPLITS:
            raise FormatError(f"{self.sample_id}: unknown split '{self.split}'")


def encode_vol(volume: Volume) -> bytes:
    data = volume.data
    codes = {dtype: code for code, dtype in VOL5_DTYPES.items()}
    dtype = data.dtype.newbyteorder("<")
    if dtype not in codes:
        raise FormatError(f"VOL5 stores float32 or float64, got {data.dtype}")
    header = VOL5_HEADER.pack(VOL5_MAGIC, VOL5_VERSION, codes[dtype], *data.shape)
    return header + np.ascontiguousarray(data, dtype=dtype).tobytes()


def decode_vol(raw: bytes, source: str = "<bytes>", dtype: np.dtype | None = None) -> Volume:
    if len(raw) < VOL5_HEADER.size:
        raise FormatError(f"{source}: truncated VOL5 header")
    magic, version, code, d, h, w = VOL5_HEADER.unpack_from(raw)
    if magic != VOL5_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != VOL5_VERSION:
        raise FormatError(f"{source}: unsupported VOL5 version {version}")
    if code not in VOL5_DTYPES:
        raise FormatError(f"{source}: unknown dtype code {code}")
    stored = VOL5_DTYPES[code]
    if dtype is not None and np.dtype(dtype).newbyteorder("<") != stored:
        raise FormatError(f"{source}: stored dtype {stored} does not match expected {dtype}")
    expected = d * h * w * stored.itemsize
    payload = raw[VOL5_HEADER.size :]
    if len(payload) != expected:
        raise FormatError(
            f"{source}: header declares {d}x{h}x{w} ({expected} bytes), payload has {len(payload)}"
        )
    data = np.frombuffer(payload, dtype=stored).reshape(d, h, w).astype(stored.newbyteorder("="))
    return Volume(data)


def write_vol(path: str | Path, volume: Volume) -> None:
    """Write ``volume`` as a VOL5 file (atomically)."""
    write_bytes_atomic(path, encode_vol(volume))


def read_vol(path: str | Path, dtype: np.dtype | None = None) -> Volume:
    """
    Read a VOL5 file.

    Raises:
        FormatError: Bad magic, truncation, inconsistent extents or dtype mismatch
    """
    return decode_vol(Path(path).read_bytes(), str(path), dtype)


class ManifestRow(NamedTuple):
    sample_id: str
    input: str
    target: str
    label: int
    split: str


def write_manifest(path: str | Path, rows: list[ManifestRow]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, delimiter="\t", lineterminator="\n")
    writer.writerow(MANIFEST_COLUMNS)
    for row in rows:
        writer.writerow(row)
    write_text_atomic(path, buffer.getvalue())


def read_manifest(path: str | Path) -> list[ManifestRow]:
    """
    Parse a manifest file.

    Raises:
        FormatError: Missing columns, bad labels or unknown splits
    """
    rows: list[ManifestRow] = []
    with open(path, encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle, delimiter="\t")
        header = next(reader, None)
        if header is None or tuple(header) != MANIFEST_COLUMNS:
            raise FormatError(f"{path}: expected header {' '.join(MANIFEST_COLUMNS)}")
        for number, fields in enumerate(reader, start=2):
            if not fields:
                continue
            if len(fields) != len(MANIFEST_COLUMNS):
                raise FormatError(f"{path}:{number}: expected {len(MANIFEST_COLUMNS)} fields")
            sample_id, input_path, target_path, label, split = fields
            try:
                label_value = int(label)
            except ValueError:
                raise FormatError(f"{path}:{number}: label '{label}' is not an integer") from None
            if split not in SPLITS:
                raise FormatError(f"{path}:{number}: unknown split '{split}'")
            rows.append(ManifestRow(sample_id, input_path, target_path, label_value, split))
    return rows
