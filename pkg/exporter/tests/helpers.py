"""Shared builders for exporter tests: tiny traced checkpoints, image trees
and an independent byte-level parser for emitted containers."""

from __future__ import annotations

import struct

import numpy as np
import torch
from PIL import Image
from torch import nn

# Channel count of the test backbone below.
CHANNELS = 6


def build_checkpoints(directory):
    """Trace and save a stride-16 backbone and a per-pixel view parser."""
    torch.manual_seed(0)
    backbone = nn.Sequential(
        nn.Conv2d(3, 8, 5, stride=4, padding=2),
        nn.ReLU(),
        nn.Conv2d(8, CHANNELS, 5, stride=4, padding=2),
    ).eval()
    parser = nn.Conv2d(3, 4, 1).eval()
    example = torch.randn(1, 3, 256, 256)
    backbone_path = directory / "backbone.pt"
    parser_path = directory / "parser.pt"
    torch.jit.trace(backbone, example).save(str(backbone_path))
    torch.jit.trace(parser, example).save(str(parser_path))
    return str(backbone_path), str(parser_path)


def trace_to(module, path, example_shape=(1, 3, 32, 32)):
    """Trace an arbitrary module and save it, returning the path as str."""
    example = torch.ones(example_shape)
    torch.jit.trace(module.eval(), example).save(str(path))
    return str(path)


def make_images(directory, names, seed=0, size=(96, 128), color=None):
    """Write random (or constant-color) RGB images under ``directory``."""
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for name in names:
        if color is None:
            arr = rng.integers(0, 256, size=(size[0], size[1], 3), dtype=np.uint8)
        else:
            arr = np.full((size[0], size[1], 3), color, dtype=np.uint8)
        Image.fromarray(arr).save(directory / name)


def parse_container(blob: bytes):
    """Decode container bytes independently of any package reader."""
    magic, version, dtype, ndim = struct.unpack_from("<4sBBB", blob, 0)
    dims = struct.unpack_from(f"<{ndim}I", blob, 7)
    payload = np.frombuffer(blob, dtype="<f4", offset=7 + 4 * ndim).reshape(dims)
    return magic, version, dtype, payload
