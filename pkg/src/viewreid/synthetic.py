"""Analytic multi-view synthetic dataset.

Each identity owns one per-view signature vector per view plus a shared
type/color vector; an observation from a viewpoint partitions the feature
grid into contiguous view regions (vertical stripes under a horizontal top
band) whose areas follow the viewpoint's visibility mix. Cell features are
``type_vec + signature[view] + noise`` and masks are exact region
indicators, so mask average pooling with zero noise recovers the latent
signatures exactly. Confuser identity pairs share the type vector, which
makes them globally similar but locally separable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyInput, IoError, ParseError
from .formats import write_json, write_manifest, write_tensor
from .types import (
    NUM_VIEWS,
    DatasetManifest,
    FeatureMap,
    FullResMaskSet,
    ImageRecord,
)

FRONT, BACK, SIDE, TOP = range(NUM_VIEWS)
CAMERA_SECTOR_DEG = 30.0  # 12 synthetic cameras


@dataclass(frozen=True)
class Viewpoint:
    """Observation direction: azimuth in [0, 360) deg, elevation in [0, 60] deg."""

    azimuth: float
    elevation: float

    def __post_init__(self):
        if not (0.0 <= self.azimuth < 360.0):
            raise ParseError(f"azimuth must be in [0, 360), got {self.azimuth}")
        if not (0.0 <= self.elevation <= 60.0):
            raise ParseError(f"elevation must be in [0, 60], got {self.elevation}")


@dataclass(frozen=True)
class SyntheticIdentity:
    """Latents of one vehicle: four view signatures plus a shared type vector."""

    identity_id: str
    signatures: np.ndarray  # (4, d)
    type_vec: np.ndarray  # (d,)

    def __post_init__(self):
        s = np.asarray(self.signatures, dtype=np.float64)
        t = np.asarray(self.type_vec, dtype=np.float64)
        if s.ndim != 2 or s.shape[0] != NUM_VIEWS or t.shape != (s.shape[1],):
            raise ParseError(
                f"signatures must be ({NUM_VIEWS}, d) with matching type vector, "
                f"got {s.shape} and {t.shape}"
            )
        object.__setattr__(self, "signatures", s)
        object.__setattr__(self, "type_vec", t)


def _sincosd(deg: float) -> tuple[float, float]:
    # exact at multiples of 90 so boundary viewpoints have clean zeros
    r = math.fmod(deg, 360.0)
    if r < 0.0:
        r += 360.0
    if r == 0.0:
        return 0.0, 1.0
    if r == 90.0:
        return 1.0, 0.0
    if r == 180.0:
        return 0.0, -1.0
    if r == 270.0:
        return -1.0, 0.0
    rad = math.radians(r)
    return math.sin(rad), math.cos(rad)


def view_visibilities(vp: Viewpoint) -> np.ndarray:
    """Visibility mix (front, back, side, top), nonnegative, summing to 1.

    Only one of front/back is ever nonzero: opposite faces cannot be seen
    together. For elevation > 0 and azimuth off the 90-degree axes exactly
    three views are visible.
    """
    sin_t, cos_t = _sincosd(vp.azimuth)
    sin_p, cos_p = _sincosd(vp.elevation)
    raw = np.array(
        [
            max(0.0, cos_t) * cos_p,
            max(0.0, -cos_t) * cos_p,
            abs(sin_t) * cos_p,
            sin_p,
        ]
    )
    return raw / raw.sum()


def camera_for(vp: Viewpoint) -> str:
    return f"c{int(vp.azimuth // CAMERA_SECTOR_DEG) % 12:02d}"


def render_observation(
    ident: SyntheticIdentity,
    vp: Viewpoint,
    noise_sigma: float,
    rng: np.random.Generator,
    grid_h: int = 16,
    grid_w: int = 16,
    mask_block: int = 4,
    view_jitter: float = 0.0,
) -> tuple[FeatureMap, FullResMaskSet, str]:
    """Render one observation: features on the grid, masks at grid*block resolution.

    The grid splits into a top band of ``round(v_top * H)`` rows over
    vertical stripes for front-or-back and side, widths proportional to
    their visibilities. Full-resolution masks are block replications of the
    grid regions, so max-pool downsampling recovers them exactly.

    ``view_jitter`` adds one offset vector per view per observation (think
    lighting or reflections changing with the angle): it shifts every cell
    of that view's region equally, so per-view pooled features absorb it in
    full while the global mean only sees the area-weighted mixture. Its
    standard deviation grows with the inverse square root of the view's
    visibility share, capped at three times the base scale: barely visible
    views are seen at grazing angles and vary the most, which is what makes
    visibility a useful reliability signal. The jitter draw happens before
    the per-cell noise draw.
    """
    vis = view_visibilities(vp)
    h_top = min(int(round(vis[TOP] * grid_h)), grid_h - 1)
    fb = vis[FRONT] + vis[BACK]
    horiz = fb + vis[SIDE]
    w_fb = min(max(int(round(grid_w * fb / horiz)), 0), grid_w)
    fb_view = FRONT if vis[FRONT] > 0.0 else BACK

    region = np.empty((grid_h, grid_w), dtype=np.int64)
    region[:h_top, :] = TOP
    region[h_top:, :w_fb] = fb_view
    region[h_top:, w_fb:] = SIDE

    masks = np.zeros((NUM_VIEWS, grid_h, grid_w), dtype=np.float32)
    for i in range(NUM_VIEWS):
        masks[i][region == i] = 1.0

    features = ident.type_vec[None, None, :] + ident.signatures[region]
    if view_jitter > 0.0:
        dim = ident.type_vec.shape[0]
        scale = view_jitter * np.minimum(
            3.0, 1.0 / np.sqrt(np.maximum(vis, 1e-12))
        )
        offsets = scale[:, None] * rng.standard_normal((NUM_VIEWS, dim))
        features = features + offsets[region]
    if noise_sigma > 0.0:
        features = features + noise_sigma * rng.standard_normal(features.shape)

    if mask_block > 1:
        full = np.kron(masks, np.ones((mask_block, mask_block), dtype=np.float32))
    else:
        full = masks
    return FeatureMap(features), FullResMaskSet(full), camera_for(vp)


@dataclass(frozen=True)
class RenderedImage:
    image_id: str
    vehicle_id: str
    camera_id: str
    split: str
    features: FeatureMap
    masks: FullResMaskSet
    viewpoint: Viewpoint


@dataclass(frozen=True)
class SyntheticDataset:
    identities: tuple[SyntheticIdentity, ...]
    records: tuple[RenderedImage, ...]

    def to_manifest(self, root: str = ".") -> DatasetManifest:
        recs = [
            ImageRecord(
                image_id=r.image_id,
                vehicle_id=r.vehicle_id,
                camera_id=r.camera_id,
                split=r.split,
                feature_path=f"features/{r.image_id}.tns",
                mask_path=f"masks/{r.image_id}.tns",
            )
            for r in self.records
        ]
        return DatasetManifest(records=tuple(recs), root=root)


def _draw_viewpoint(rng: np.random.Generator) -> Viewpoint:
    return Viewpoint(azimuth=float(rng.uniform(0.0, 360.0)),
                     elevation=float(rng.uniform(0.0, 60.0)))


def _image_rng(seed: int, image_index: int, attempt: int) -> np.random.Generator:
    return np.random.default_rng((seed, 17, image_index, attempt))


def build_dataset(
    num_ids: int,
    images_per_id: int,
    confuser_fraction: float = 0.5,
    seed: int = 0,
    channels: int = 16,
    grid_h: int = 16,
    grid_w: int = 16,
    mask_block: int = 1,
    noise_sigma: float = 0.25,
    type_scale: float = 1.0,
    signature_scale: float = 1.0,
    view_jitter: float = 0.0,
) -> SyntheticDataset:
    """Deterministic in-memory dataset with train/query/gallery splits.

    Split protocol: identities 0..num_ids//2-1 are train (all images);
    the rest are test, contributing max(1, images_per_id // 4) query images
    each and the remainder to the gallery. Each query is guaranteed a
    same-identity gallery image from a different camera (a gallery image is
    re-rendered if needed). Within each split range, the first
    ``int(range_size * confuser_fraction)`` identities form consecutive
    pairs sharing the type vector exactly.
    """
    if num_ids < 2 or images_per_id < 2:
        raise EmptyInput(
            f"need num_ids >= 2 and images_per_id >= 2, got {num_ids}, {images_per_id}"
        )
    if not (0.0 <= confuser_fraction <= 1.0):
        raise ParseError(f"confuser_fraction must be in [0, 1], got {confuser_fraction}")

    id_rng = np.random.default_rng((seed, 11))
    num_train_ids = num_ids // 2

    type_vecs = type_scale * id_rng.standard_normal((num_ids, channels))
    signatures = signature_scale * id_rng.standard_normal((num_ids, NUM_VIEWS, channels))
    for lo, hi in ((0, num_train_ids), (num_train_ids, num_ids)):
        n_conf = int((hi - lo) * confuser_fraction)
        n_conf -= n_conf % 2
        for k in range(lo, lo + n_conf, 2):
            type_vecs[k + 1] = type_vecs[k]

    identities = tuple(
        SyntheticIdentity(
            identity_id=f"v{vid:04d}",
            signatures=signatures[vid],
            type_vec=type_vecs[vid],
        )
        for vid in range(num_ids)
    )

    n_query = max(1, images_per_id // 4)
    records: list[RenderedImage] = []
    for vid, ident in enumerate(identities):
        is_train = vid < num_train_ids
        rendered = []
        for j in range(images_per_id):
            image_index = vid * images_per_id + j
            rng = _image_rng(seed, image_index, 0)
            vp = _draw_viewpoint(rng)
            fmap, masks, cam = render_observation(
                ident, vp, noise_sigma, rng, grid_h, grid_w, mask_block, view_jitter
            )
            if is_train:
                split = "train"
            else:
                split = "query" if j < n_query else "gallery"
            rendered.append(
                RenderedImage(
                    image_id=f"{ident.identity_id}_i{j:03d}",
                    vehicle_id=ident.identity_id,
                    camera_id=cam,
                    split=split,
                    features=fmap,
                    masks=masks,
                    viewpoint=vp,
                )
            )
        if not is_train:
            rendered = _ensure_cross_camera(
                rendered, ident, seed, vid * images_per_id,
                noise_sigma, grid_h, grid_w, mask_block, view_jitter,
            )
        records.extend(rendered)
    return SyntheticDataset(identities=identities, records=tuple(records))


def _ensure_cross_camera(
    rendered, ident, seed, base_index, noise_sigma, grid_h, grid_w, mask_block,
    view_jitter,
):
    """Re-render one gallery image when a query lacks a cross-camera match."""
    out = list(rendered)
    gallery_pos = [k for k, r in enumerate(out) if r.split == "gallery"]
    for k, rec in enumerate(out):
        if rec.split != "query":
            continue
        if any(out[g].camera_id != rec.camera_id for g in gallery_pos):
            continue
        g = gallery_pos[-1]
        j = g  # per-identity image position
        for attempt in range(1, 64):
            rng = _image_rng(seed, base_index + j, attempt)
            vp = _draw_viewpoint(rng)
            if camera_for(vp) == rec.camera_id:
                continue
            fmap, masks, cam = render_observation(
                ident, vp, noise_sigma, rng, grid_h, grid_w, mask_block, view_jitter
            )
            out[g] = RenderedImage(
                image_id=out[g].image_id,
                vehicle_id=out[g].vehicle_id,
                camera_id=cam,
                split="gallery",
                features=fmap,
                masks=masks,
                viewpoint=vp,
            )
            break
        else:  # pragma: no cover - 63 fresh draws cannot all share one sector
            raise IoError("failed to draw a cross-camera gallery viewpoint")
    return out


def generate_dataset(
    num_ids: int,
    images_per_id: int,
    confuser_fraction: float = 0.5,
    seed: int = 0,
    out_dir=None,
    channels: int = 16,
    grid_h: int = 16,
    grid_w: int = 16,
    mask_block: int = 4,
    noise_sigma: float = 0.25,
    type_scale: float = 1.0,
    signature_scale: float = 1.0,
    view_jitter: float = 0.0,
) -> DatasetManifest:
    """Build the dataset and write container files plus the manifest.

    Identical arguments produce byte-identical files.
    """
    if out_dir is None:
        raise EmptyInput("generate_dataset needs an output directory")
    dataset = build_dataset(
        num_ids, images_per_id, confuser_fraction, seed, channels,
        grid_h, grid_w, mask_block, noise_sigma, type_scale, signature_scale,
        view_jitter,
    )
    out = Path(out_dir)
    try:
        (out / "features").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    for rec in dataset.records:
        write_tensor(out / "features" / f"{rec.image_id}.tns", rec.features.data)
        write_tensor(out / "masks" / f"{rec.image_id}.tns", rec.masks.masks)
    manifest = dataset.to_manifest(root=str(out))
    write_manifest(out / "manifest.jsonl", manifest)
    write_json(
        out / "config.json",
        {
            "num_ids": num_ids,
            "images_per_id": images_per_id,
            "confuser_fraction": confuser_fraction,
            "seed": seed,
            "channels": channels,
            "grid_h": grid_h,
            "grid_w": grid_w,
            "mask_block": mask_block,
            "noise_sigma": noise_sigma,
            "type_scale": type_scale,
            "signature_scale": signature_scale,
            "view_jitter": view_jitter,
        },
    )
    return manifest
