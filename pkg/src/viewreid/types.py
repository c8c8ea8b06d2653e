"""Shared data model: feature maps, view masks, embeddings, manifests, distance matrices.

All container types validate on construction and reject bad data instead of
repairing it. Wrapped arrays are copied to float32 and frozen (read-only),
so instances are immutable and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateImageId,
    MaskOutOfRange,
    NonFiniteValue,
    ParseError,
)

NUM_VIEWS = 4
VIEW_NAMES = ("front", "back", "side", "top")
SPLITS = ("train", "query", "gallery")


def _frozen_f32(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float32, copy=True, order="C")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{name} contains NaN or Inf")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureMap:
    """H x W x C grid of activations, row-major (h, w, c)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_f32(self.data, "feature map")
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise DimensionMismatch(
                f"feature map must be (H, W, C) with positive dims, got {arr.shape}"
            )
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ViewMaskSet:
    """Four per-view soft masks over one H x W grid, values in [0, 1].

    View order is front, back, side, top. Masks may overlap and are never
    renormalized; binary masks are the 0/1 special case.
    """

    masks: np.ndarray

    def __post_init__(self):
        arr = _frozen_f32(self.masks, "mask set")
        if arr.ndim != 3 or arr.shape[0] != NUM_VIEWS or min(arr.shape[1:]) < 1:
            raise DimensionMismatch(
                f"mask set must be ({NUM_VIEWS}, H, W) with positive dims, got {arr.shape}"
            )
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise MaskOutOfRange(
                f"mask values must lie in [0, 1], got range "
                f"[{arr.min():.6g}, {arr.max():.6g}]"
            )
        object.__setattr__(self, "masks", arr)

    @property
    def num_views(self) -> int:
        return NUM_VIEWS

    @property
    def height(self) -> int:
        return self.masks.shape[1]

    @property
    def width(self) -> int:
        return self.masks.shape[2]


# Same contract as ViewMaskSet, just at source resolution (pre-downsampling).
# Divisibility by the target grid is checked by downsample_masks.
FullResMaskSet = ViewMaskSet


@dataclass(frozen=True)
class ViewEmbedding:
    """One global vector, four per-view local vectors and their visibility scores."""

    global_vec: np.ndarray
    locals_: np.ndarray
    visibilities: np.ndarray

    def __post_init__(self):
        g = _frozen_f32(self.global_vec, "global vector")
        l = _frozen_f32(self.locals_, "local vectors")
        v = _frozen_f32(self.visibilities, "visibilities")
        if g.ndim != 1 or g.shape[0] < 1:
            raise DimensionMismatch(f"global vector must be 1-D, got {g.shape}")
        if l.shape != (NUM_VIEWS, g.shape[0]):
            raise DimensionMismatch(
                f"locals must be ({NUM_VIEWS}, {g.shape[0]}), got {l.shape}"
            )
        if v.shape != (NUM_VIEWS,):
            raise DimensionMismatch(f"visibilities must be ({NUM_VIEWS},), got {v.shape}")
        if v.min() < 0.0:
            raise MaskOutOfRange(f"visibilities must be >= 0, got min {v.min():.6g}")
        for i in range(NUM_VIEWS):
            if v[i] == 0.0 and np.any(l[i] != 0.0):
                raise DimensionMismatch(
                    f"view {i} has zero visibility but a nonzero local vector"
                )
        object.__setattr__(self, "global_vec", g)
        object.__setattr__(self, "locals_", l)
        object.__setattr__(self, "visibilities", v)

    @property
    def dim(self) -> int:
        return self.global_vec.shape[0]


@dataclass(frozen=True)
class ImageRecord:
    """One manifest entry: ids, split and where the tensors live."""

    image_id: str
    vehicle_id: str
    camera_id: str
    split: str
    feature_path: str
    mask_path: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ParseError(
                f"split must be one of {SPLITS}, got {self.split!r}"
            )


@dataclass(frozen=True)
class DatasetManifest:
    """Validated collection of image records plus the directory paths resolve against."""

    records: tuple[ImageRecord, ...]
    root: str = "."

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            if rec.image_id in seen:
                raise DuplicateImageId(f"duplicate image_id {rec.image_id!r}")
            seen.add(rec.image_id)

    def split(self, name: str) -> tuple[ImageRecord, ...]:
        if name not in SPLITS:
            raise ParseError(f"unknown split {name!r}")
        return tuple(r for r in self.records if r.split == name)

    def by_image_id(self) -> dict[str, ImageRecord]:
        return {r.image_id: r for r in self.records}

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class DistanceMatrix:
    """Q x G fused distances with the id lists that index them.

    ``degenerate_pairs`` counts (query, gallery) pairs where no view was
    commonly visible and the uniform attention fallback fired.
    """

    values: np.ndarray
    query_ids: tuple[str, ...]
    gallery_ids: tuple[str, ...]
    degenerate_pairs: int = 0

    def __post_init__(self):
        arr = _frozen_f32(self.values, "distance matrix")
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise DimensionMismatch(f"distance matrix must be 2-D, got {arr.shape}")
        if arr.min() < 0.0:
            raise NonFiniteValue(f"distances must be >= 0, got min {arr.min():.6g}")
        q_ids = tuple(str(i) for i in self.query_ids)
        g_ids = tuple(str(i) for i in self.gallery_ids)
        if len(q_ids) != arr.shape[0] or len(g_ids) != arr.shape[1]:
            raise DimensionMismatch(
                f"id list lengths ({len(q_ids)}, {len(g_ids)}) do not match "
                f"matrix shape {arr.shape}"
            )
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "query_ids", q_ids)
        object.__setattr__(self, "gallery_ids", g_ids)

    @property
    def num_query(self) -> int:
        return self.values.shape[0]

    @property
    def num_gallery(self) -> int:
        return self.values.shape[1]


def validate_pair(fmap: FeatureMap, masks: ViewMaskSet) -> None:
    """Check that a feature map and a mask set describe the same grid.

    Both arguments already passed their own invariants at construction;
    this only enforces the spatial match.
    """
    if (fmap.height, fmap.width) != (masks.height, masks.width):
        raise DimensionMismatch(
            f"feature grid {fmap.height}x{fmap.width} does not match "
            f"mask grid {masks.height}x{masks.width}"
        )
