"""Alignment stage: mask pooling of feature maps into view embeddings.

Local features come from mask average pooling,
``f_i = sum_jk M_i(j,k) F(j,k) / sum_jk M_i(j,k)``, the global feature from
plain average pooling, and the visibility score of a view is the total mask
mass ``v_i = sum_jk M_i(j,k)``. All accumulation happens in float64.
"""

from __future__ import annotations

import numpy as np

from .errors import NonDivisibleDims
from .types import FeatureMap, FullResMaskSet, ViewEmbedding, ViewMaskSet, validate_pair


def downsample_masks(masks: FullResMaskSet, target_h: int, target_w: int) -> ViewMaskSet:
    """Block max-pool full-resolution masks onto a target grid.

    Each output cell is the maximum of its source block, per view. Source
    dims must be integer multiples of the target dims.
    """
    h, w = masks.height, masks.width
    if target_h < 1 or target_w < 1 or h % target_h != 0 or w % target_w != 0:
        raise NonDivisibleDims(
            f"source grid {h}x{w} is not divisible by target {target_h}x{target_w}"
        )
    bh, bw = h // target_h, w // target_w
    blocks = masks.masks.reshape(masks.num_views, target_h, bh, target_w, bw)
    return ViewMaskSet(blocks.max(axis=(2, 4)))


def global_average_pool(fmap: FeatureMap) -> np.ndarray:
    """Per-channel mean over all H x W cells."""
    return fmap.data.astype(np.float64).mean(axis=(0, 1))


def visibility_scores(masks: ViewMaskSet) -> np.ndarray:
    """Total mask mass per view; zero iff the mask is identically zero."""
    return masks.masks.astype(np.float64).sum(axis=(1, 2))


def mask_average_pool(fmap: FeatureMap, masks: ViewMaskSet) -> np.ndarray:
    """Mask-weighted average of feature cells, one vector per view.

    A view with zero total mask mass yields the zero vector; its visibility
    score is zero, which nulls it out of every downstream attention term.
    """
    validate_pair(fmap, masks)
    m = masks.masks.astype(np.float64)
    f = fmap.data.astype(np.float64)
    weighted = np.einsum("vhw,hwc->vc", m, f)  # (4, C)
    sums = m.sum(axis=(1, 2))
    out = np.zeros_like(weighted)
    nonzero = sums > 0.0
    out[nonzero] = weighted[nonzero] / sums[nonzero, None]
    return out


def embed(fmap: FeatureMap, masks: ViewMaskSet) -> ViewEmbedding:
    """Bundle global pooling, mask average pooling and visibilities."""
    validate_pair(fmap, masks)
    return ViewEmbedding(
        global_vec=global_average_pool(fmap),
        locals_=mask_average_pool(fmap, masks),
        visibilities=visibility_scores(masks),
    )
