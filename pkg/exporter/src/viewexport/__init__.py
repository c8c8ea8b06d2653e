"""Checkpoint-driven feature and mask exporter for the retrieval engine.

Runs a user-supplied TorchScript backbone and view parser over a folder of
vehicle images and writes one feature container, one four-view mask
container and one manifest line per image, in the engine's file formats.
"""

from .errors import (
    CheckpointIncompatible,
    ExportError,
    ImageUnreadable,
    IoError,
    NoImages,
)
from .export import ExportJob, ExportSummary, export, view_mask_sums

__all__ = [
    "CheckpointIncompatible",
    "ExportError",
    "ExportJob",
    "ExportSummary",
    "ImageUnreadable",
    "IoError",
    "NoImages",
    "export",
    "view_mask_sums",
]
