"""Byte-level tests of the container and manifest writers.

The expected layout is parsed directly with struct in helpers.parse_container
so the writer is checked against the wire format, not against itself.
"""

import json

import numpy as np
import pytest

from viewexport import IoError
from viewexport.container import MANIFEST_KEYS, write_json, write_manifest, write_tensor

from helpers import parse_container


def _record(i):
    return {
        "image_id": f"img{i}",
        "vehicle_id": f"v{i}",
        "camera_id": "c001",
        "split": "gallery",
        "feature_path": f"features/img{i}.tns",
        "mask_path": f"masks/img{i}.tns",
    }


def test_tensor_layout_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    arr = rng.standard_normal((5, 7, 3)).astype(np.float32)
    path = tmp_path / "t.tns"
    write_tensor(path, arr)
    magic, version, dtype, payload = parse_container(path.read_bytes())
    assert magic == b"PVEN"
    assert version == 1
    assert dtype == 1
    assert payload.shape == (5, 7, 3)
    assert np.array_equal(payload, arr)


def test_tensor_total_bytes(tmp_path):
    for shape in [(4,), (2, 3), (2, 2, 2, 2)]:
        path = tmp_path / f"t{len(shape)}.tns"
        write_tensor(path, np.zeros(shape, dtype=np.float32))
        expected = 7 + 4 * len(shape) + 4 * int(np.prod(shape))
        assert len(path.read_bytes()) == expected


def test_tensor_coerces_to_float32(tmp_path):
    path = tmp_path / "t.tns"
    write_tensor(path, np.array([1.0, 2.5, -3.25], dtype=np.float64))
    *_, payload = parse_container(path.read_bytes())
    assert payload.dtype == np.dtype("<f4")
    assert np.array_equal(payload, np.array([1.0, 2.5, -3.25], dtype=np.float32))


def test_tensor_scalar_promoted_to_rank_one(tmp_path):
    # np.ascontiguousarray guarantees ndim >= 1, so scalars store as (1,).
    path = tmp_path / "t.tns"
    write_tensor(path, np.float32(3.0))
    *_, payload = parse_container(path.read_bytes())
    assert payload.shape == (1,)
    assert payload[0] == np.float32(3.0)


def test_tensor_unwritable_path(tmp_path):
    with pytest.raises(IoError, match="cannot write"):
        write_tensor(tmp_path / "missing" / "t.tns", np.zeros(3, dtype=np.float32))


def test_manifest_lines_and_key_order(tmp_path):
    path = tmp_path / "manifest.jsonl"
    write_manifest(path, [_record(i) for i in range(3)])
    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 3
    for i, line in enumerate(lines):
        obj = json.loads(line)
        assert obj == _record(i)
        assert tuple(obj.keys()) == MANIFEST_KEYS


def test_manifest_missing_key(tmp_path):
    bad = _record(0)
    del bad["mask_path"]
    with pytest.raises(IoError, match="missing keys"):
        write_manifest(tmp_path / "m.jsonl", [bad])


def test_manifest_empty(tmp_path):
    path = tmp_path / "m.jsonl"
    write_manifest(path, [])
    assert path.read_text(encoding="utf-8") == ""


def test_write_json_roundtrip(tmp_path):
    path = tmp_path / "echo.json"
    obj = {"job": {"batch_size": 8, "normalize": "imagenet"}, "exported": 3}
    write_json(path, obj)
    assert json.loads(path.read_text(encoding="utf-8")) == obj
