"""Image discovery, decoding and preprocessing."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ImageUnreadable

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".bmp", ".webp")

# Standard channel statistics most pretrained backbones were trained with.
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

# Stems like "0001_c003_00042_0": vehicle id, then a camera field.
_STEM_RE = re.compile(r"^([^_]+)_(c\d+)(?:_|$)")


def list_images(directory) -> list[Path]:
    """Image files directly inside ``directory``, sorted by name."""
    root = Path(directory)
    return sorted(
        p for p in root.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )


def record_ids(stem: str) -> tuple[str, str]:
    """Derive (vehicle_id, camera_id) from a filename stem.

    Stems of the form ``<vehicle>_<cam>_...`` with a ``c<digits>`` camera
    field are split; anything else becomes vehicle_id with camera "c000".
    """
    m = _STEM_RE.match(stem)
    if m:
        return m.group(1), m.group(2)
    return stem, "c000"


def load_image(path, height: int, width: int) -> np.ndarray:
    """Decode an image to (3, height, width) float32 in [0, 1].

    Converts to RGB and resizes bilinearly. Raises ImageUnreadable on any
    decode failure so the export loop can skip the file.
    """
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize((width, height), Image.BILINEAR)
    except (OSError, ValueError, SyntaxError) as exc:
        raise ImageUnreadable(f"cannot decode {path}: {exc}") from exc
    pixels = np.asarray(rgb, dtype=np.float32) / 255.0  # (H, W, 3)
    return np.ascontiguousarray(pixels.transpose(2, 0, 1))


def normalize(pixels: np.ndarray, policy: str) -> np.ndarray:
    """Apply a channel normalization policy to (3, H, W) pixels in [0, 1]."""
    if policy == "none":
        return pixels
    if policy == "imagenet":
        return (pixels - IMAGENET_MEAN[:, None, None]) / IMAGENET_STD[:, None, None]
    raise ValueError(f"unknown normalize policy {policy!r}")
