"""TorchScript checkpoint loading and batched inference.

Checkpoints are opaque user inputs with two shape contracts:

- backbone: (B, 3, H, W) pixels -> (B, C, h, w) feature maps, where the
  full-resolution mask grid must be an integer multiple of (h, w)
- parser:   (B, 3, H, W) pixels -> (B, 4, H', W') per-view mask scores,
  channel order front, back, side, top

Anything that violates a contract raises CheckpointIncompatible; nothing
is silently repaired.
"""

from __future__ import annotations

import numpy as np
import torch

from .errors import CheckpointIncompatible

NUM_VIEWS = 4

MASK_ACTIVATIONS = ("softmax", "sigmoid", "none")


def load_model(path, device: str = "cpu") -> torch.jit.ScriptModule:
    """Load a TorchScript checkpoint in eval mode."""
    try:
        module = torch.jit.load(str(path), map_location=device)
    except (OSError, RuntimeError, ValueError) as exc:
        raise CheckpointIncompatible(f"cannot load checkpoint {path}: {exc}") from exc
    module.eval()
    return module


def _forward(module, batch: np.ndarray, device: str, label: str) -> torch.Tensor:
    tensor = torch.from_numpy(np.ascontiguousarray(batch, dtype=np.float32)).to(device)
    try:
        with torch.no_grad():
            out = module(tensor)
    except RuntimeError as exc:
        raise CheckpointIncompatible(f"{label} forward failed: {exc}") from exc
    if not isinstance(out, torch.Tensor):
        raise CheckpointIncompatible(f"{label} returned {type(out).__name__}, not a tensor")
    return out


def run_backbone(module, batch: np.ndarray, device: str = "cpu") -> np.ndarray:
    """Run the backbone on a (B, 3, H, W) batch; returns (B, h, w, C) float32."""
    out = _forward(module, batch, device, "backbone")
    if out.ndim != 4 or out.shape[0] != batch.shape[0]:
        raise CheckpointIncompatible(
            f"backbone must map (B, 3, H, W) to (B, C, h, w), got {tuple(out.shape)}"
        )
    feats = out.permute(0, 2, 3, 1).cpu().numpy().astype(np.float32)
    if not np.all(np.isfinite(feats)):
        raise CheckpointIncompatible("backbone produced non-finite feature values")
    return feats


def run_parser(module, batch: np.ndarray, activation: str, device: str = "cpu") -> np.ndarray:
    """Run the parser on a (B, 3, H, W) batch; returns (B, 4, H', W') float32 in [0, 1].

    ``activation`` maps raw scores to probabilities: "softmax" across the
    four view channels, "sigmoid" per cell, or "none" for checkpoints that
    already emit probabilities (range-checked, never rescaled).
    """
    if activation not in MASK_ACTIVATIONS:
        raise ValueError(f"unknown mask activation {activation!r}")
    out = _forward(module, batch, device, "parser")
    if out.ndim != 4 or out.shape[0] != batch.shape[0] or out.shape[1] != NUM_VIEWS:
        raise CheckpointIncompatible(
            f"parser must map (B, 3, H, W) to (B, {NUM_VIEWS}, H', W'), got {tuple(out.shape)}"
        )
    with torch.no_grad():
        if activation == "softmax":
            out = torch.softmax(out, dim=1)
        elif activation == "sigmoid":
            out = torch.sigmoid(out)
    masks = out.cpu().numpy().astype(np.float32)
    if not np.all(np.isfinite(masks)):
        raise CheckpointIncompatible("parser produced non-finite mask values")
    if masks.min() < 0.0 or masks.max() > 1.0:
        raise CheckpointIncompatible(
            f"parser output outside [0, 1] under activation {activation!r}: "
            f"range [{masks.min():.6g}, {masks.max():.6g}]"
        )
    return masks
