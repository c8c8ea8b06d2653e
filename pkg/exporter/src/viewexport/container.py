"""Writers for the tensor container and manifest formats the engine consumes.

The exporter talks to the retrieval engine through files only, so the byte
layout is implemented here independently rather than imported:

    magic   4 bytes  b"PVEN"
    version u8       1
    dtype   u8       1 = 32-bit IEEE-754 float, little-endian
    ndim    u8
    dims    ndim * u32 little-endian
    payload prod(dims) * 4 bytes, row-major

Manifests are UTF-8 JSON Lines, one object per image with keys image_id,
vehicle_id, camera_id, split, feature_path, mask_path; relative paths
resolve against the manifest's directory.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import IoError

MAGIC = b"PVEN"
FORMAT_VERSION = 1
DTYPE_F32 = 1
_HEADER = struct.Struct("<4sBBB")

MANIFEST_KEYS = ("image_id", "vehicle_id", "camera_id", "split", "feature_path", "mask_path")


def write_tensor(path, tensor) -> None:
    """Write a float32 array in the container layout above."""
    arr = np.ascontiguousarray(tensor, dtype=np.float32)
    if arr.ndim < 1 or arr.ndim > 255:
        raise IoError(f"unsupported ndim {arr.ndim}")
    payload = arr.tobytes(order="C")
    if not np.little_endian:  # pragma: no cover - LE hosts only in practice
        payload = arr.byteswap().tobytes(order="C")
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_F32, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_manifest(path, records) -> None:
    """Write manifest records (dicts with MANIFEST_KEYS) as JSON Lines."""
    lines = []
    for rec in records:
        missing = [k for k in MANIFEST_KEYS if k not in rec]
        if missing:
            raise IoError(f"manifest record missing keys {missing}: {rec}")
        lines.append(json.dumps({k: rec[k] for k in MANIFEST_KEYS}, sort_keys=False))
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_json(path, obj) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
