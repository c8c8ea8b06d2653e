"""Bit-exact tensor container, dataset manifest and report persistence.

Container layout (all little-endian, no padding):

    magic   4 bytes  b"PVEN"
    version u8       1
    dtype   u8       1 = 32-bit IEEE-754 float, little-endian (2 reserved for 64-bit)
    ndim    u8
    dims    ndim * u32
    payload prod(dims) * 4 bytes, row-major

Manifests are UTF-8 JSON Lines, one object per image with keys image_id,
vehicle_id, camera_id, split, feature_path, mask_path; relative paths
resolve against the manifest's directory.
"""

from __future__ import annotations

import json
import math
import os
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    BadMagic,
    DuplicateImageId,
    IoError,
    ParseError,
    TruncatedPayload,
    UnsupportedVersion,
)
from .types import SPLITS, DatasetManifest, ImageRecord

MAGIC = b"PVEN"
FORMAT_VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sBBB")

MANIFEST_KEYS = ("image_id", "vehicle_id", "camera_id", "split", "feature_path", "mask_path")


def write_tensor(path, tensor) -> None:
    """Write a float32 array; read_tensor(write_tensor(x)) is bit-exact."""
    arr = np.ascontiguousarray(tensor, dtype=np.float32)
    if arr.ndim < 1 or arr.ndim > 255:
        raise IoError(f"unsupported ndim {arr.ndim}")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_F32, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = arr.tobytes(order="C")
    if not np.little_endian:  # pragma: no cover - LE hosts only in practice
        payload = arr.byteswap().tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(dims)
            fh.write(payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_tensor(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise TruncatedPayload(
            f"{path}: header needs {_HEADER.size} bytes, file has {len(blob)}"
        )
    magic, version, dtype, ndim = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise BadMagic(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: unsupported format version {version}")
    if dtype != DTYPE_F32:
        raise UnsupportedVersion(f"{path}: unsupported dtype code {dtype}")
    dims_end = _HEADER.size + 4 * ndim
    if len(blob) < dims_end:
        raise TruncatedPayload(f"{path}: truncated dims block")
    shape = struct.unpack_from(f"<{ndim}I", blob, _HEADER.size)
    expected = 4 * math.prod(shape)
    actual = len(blob) - dims_end
    if actual != expected:
        raise TruncatedPayload(
            f"{path}: payload has {actual} bytes, expected {expected}"
        )
    arr = np.frombuffer(blob[dims_end:], dtype="<f4").reshape(shape)
    return arr.astype(np.float32, copy=True)


def write_manifest(path, manifest: DatasetManifest) -> None:
    lines = []
    for rec in manifest.records:
        obj = {k: getattr(rec, k) for k in MANIFEST_KEYS}
        lines.append(json.dumps(obj, sort_keys=True))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_manifest(path) -> DatasetManifest:
    """Parse and validate a JSONL manifest; duplicates and bad splits are rejected."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise ParseError(f"{path}:{lineno}: record is not an object")
        missing = [k for k in MANIFEST_KEYS if k not in obj]
        if missing:
            raise ParseError(f"{path}:{lineno}: missing keys {missing}")
        if obj["split"] not in SPLITS:
            raise ParseError(
                f"{path}:{lineno}: unknown split {obj['split']!r}"
            )
        records.append(ImageRecord(**{k: str(obj[k]) for k in MANIFEST_KEYS}))
    seen = set()
    for rec in records:
        if rec.image_id in seen:
            raise DuplicateImageId(f"{path}: duplicate image_id {rec.image_id!r}")
        seen.add(rec.image_id)
    return DatasetManifest(records=tuple(records), root=str(path.parent))


def resolve_path(manifest: DatasetManifest, relative: str) -> str:
    p = Path(relative)
    return str(p if p.is_absolute() else Path(manifest.root) / p)


def write_key_value_report(path, items: Iterable[tuple[str, object]]) -> None:
    """Key/value text report, one ``key: value`` line per item, UTF-8."""
    lines = []
    for key, value in items:
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = format(value, ".6f")
        lines.append(f"{key}: {value}")
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_json(path, obj) -> None:
    try:
        Path(path).write_text(
            json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_pgm(path, grid) -> None:
    """Portable graymap (P5, maxval 255) of a grid of values in [0, 1]."""
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2:
        raise IoError(f"PGM export needs a 2-D grid, got shape {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise IoError("PGM export needs values in [0, 1]")
    pixels = np.rint(arr * 255.0).astype(np.uint8)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(pixels.tobytes(order="C"))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
