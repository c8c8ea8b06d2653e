"""Batched export of feature and mask containers plus a manifest.

One feature container (h, w, C) and one four-view mask container
(4, H', W') are written per image, along with manifest.jsonl,
mask_sums.json (per-view mask mass per image, the quantity the engine
recomputes as its visibility scores) and job.json echoing the full job so
a run can be reproduced from its output directory alone.
"""

from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import container, imaging, nets
from .errors import CheckpointIncompatible, ImageUnreadable, IoError, NoImages

log = logging.getLogger("viewexport")

SPLITS = ("train", "query", "gallery")


@dataclass(frozen=True)
class ExportJob:
    """Everything one export run needs; validated on construction."""

    image_dir: str
    backbone_path: str
    parser_path: str
    out_dir: str
    resize_h: int = 256
    resize_w: int = 256
    batch_size: int = 8
    normalize: str = "imagenet"
    mask_activation: str = "softmax"
    split: str = "gallery"
    device: str = "cpu"

    def __post_init__(self):
        if self.resize_h < 1 or self.resize_w < 1:
            raise IoError(f"resize dims must be positive, got {self.resize_h}x{self.resize_w}")
        if self.batch_size < 1:
            raise IoError(f"batch size must be positive, got {self.batch_size}")
        if self.normalize not in ("imagenet", "none"):
            raise IoError(f"normalize must be 'imagenet' or 'none', got {self.normalize!r}")
        if self.mask_activation not in nets.MASK_ACTIVATIONS:
            raise IoError(
                f"mask activation must be one of {nets.MASK_ACTIVATIONS}, "
                f"got {self.mask_activation!r}"
            )
        if self.split not in SPLITS:
            raise IoError(f"split must be one of {SPLITS}, got {self.split!r}")


@dataclass(frozen=True)
class ExportSummary:
    exported: int
    skipped: int
    manifest_path: str


def view_mask_sums(masks: np.ndarray) -> np.ndarray:
    """Total mask mass per view for one (4, H, W) mask set, in float64."""
    arr = np.asarray(masks, dtype=np.float32)
    return arr.astype(np.float64).sum(axis=(1, 2))


def _unique_id(stem: str, used: set[str]) -> str:
    image_id = stem
    n = 1
    while image_id in used:
        image_id = f"{stem}_{n}"
        n += 1
    if image_id != stem:
        log.warning("image id %r already used, renamed to %r", stem, image_id)
    return image_id


def _check_grids(feats: np.ndarray, masks: np.ndarray) -> None:
    fh, fw = feats.shape[1], feats.shape[2]
    mh, mw = masks.shape[2], masks.shape[3]
    if mh % fh != 0 or mw % fw != 0:
        raise CheckpointIncompatible(
            f"mask grid {mh}x{mw} is not an integer multiple of the "
            f"feature grid {fh}x{fw}; the engine cannot pool these pairs"
        )


def export(job: ExportJob) -> ExportSummary:
    """Run both checkpoints over every image in the job and write containers.

    Unreadable images are logged and skipped; every other failure aborts
    with nothing half-written beyond already-completed per-image files.
    """
    image_dir = Path(job.image_dir)
    if not image_dir.is_dir():
        raise IoError(f"image directory {image_dir} does not exist")
    paths = imaging.list_images(image_dir)
    if not paths:
        raise NoImages(f"no image files in {image_dir}")

    backbone = nets.load_model(job.backbone_path, job.device)
    parser = nets.load_model(job.parser_path, job.device)

    out_dir = Path(job.out_dir)
    try:
        os.makedirs(out_dir / "features", exist_ok=True)
        os.makedirs(out_dir / "masks", exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out_dir}: {exc}") from exc

    records: list[dict] = []
    mask_sums: dict[str, list[float]] = {}
    used_ids: set[str] = set()
    skipped = 0

    for start in range(0, len(paths), job.batch_size):
        chunk = paths[start:start + job.batch_size]
        batch_paths: list[Path] = []
        batch_pixels: list[np.ndarray] = []
        for path in chunk:
            try:
                pixels = imaging.load_image(path, job.resize_h, job.resize_w)
            except ImageUnreadable as exc:
                log.warning("skipping %s: %s", path.name, exc)
                skipped += 1
                continue
            batch_paths.append(path)
            batch_pixels.append(imaging.normalize(pixels, job.normalize))
        if not batch_paths:
            continue

        batch = np.stack(batch_pixels)
        feats = nets.run_backbone(backbone, batch, job.device)
        masks = nets.run_parser(parser, batch, job.mask_activation, job.device)
        _check_grids(feats, masks)

        for i, path in enumerate(batch_paths):
            image_id = _unique_id(path.stem, used_ids)
            used_ids.add(image_id)
            vehicle_id, camera_id = imaging.record_ids(path.stem)
            feature_rel = f"features/{image_id}.tns"
            mask_rel = f"masks/{image_id}.tns"
            container.write_tensor(out_dir / feature_rel, feats[i])
            container.write_tensor(out_dir / mask_rel, masks[i])
            mask_sums[image_id] = [float(s) for s in view_mask_sums(masks[i])]
            records.append({
                "image_id": image_id,
                "vehicle_id": vehicle_id,
                "camera_id": camera_id,
                "split": job.split,
                "feature_path": feature_rel,
                "mask_path": mask_rel,
            })

    if not records:
        raise NoImages(f"all {skipped} image files in {image_dir} were unreadable")

    manifest_path = out_dir / "manifest.jsonl"
    container.write_manifest(manifest_path, records)
    container.write_json(out_dir / "mask_sums.json", mask_sums)
    container.write_json(out_dir / "job.json", {
        "job": asdict(job),
        "exported": len(records),
        "skipped": skipped,
    })
    log.info("exported %d images (%d skipped) to %s", len(records), skipped, out_dir)
    return ExportSummary(exported=len(records), skipped=skipped, manifest_path=str(manifest_path))
