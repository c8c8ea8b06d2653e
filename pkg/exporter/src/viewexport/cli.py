"""Command-line entry point; flags mirror ExportJob fields."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ExportError
from .export import SPLITS, ExportJob, export
from .nets import MASK_ACTIVATIONS

EXIT_CODES = {"usage": 2, "data": 3, "checkpoint": 4}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewexport",
        description="Export backbone feature maps and per-view masks for a folder of images",
    )
    parser.add_argument("--images", required=True, help="directory of input images")
    parser.add_argument("--backbone", required=True, help="TorchScript backbone checkpoint")
    parser.add_argument("--parser", required=True, dest="parser_path",
                        help="TorchScript view-parser checkpoint")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--resize-h", type=int, default=256)
    parser.add_argument("--resize-w", type=int, default=256)
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--normalize", choices=("imagenet", "none"), default="imagenet")
    parser.add_argument("--mask-activation", choices=MASK_ACTIVATIONS, default="softmax")
    parser.add_argument("--split", choices=SPLITS, default="gallery")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--quiet", action="store_true", help="suppress progress logging")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    job_args = dict(
        image_dir=args.images,
        backbone_path=args.backbone,
        parser_path=args.parser_path,
        out_dir=args.out,
        resize_h=args.resize_h,
        resize_w=args.resize_w,
        batch_size=args.batch_size,
        normalize=args.normalize,
        mask_activation=args.mask_activation,
        split=args.split,
        device=args.device,
    )
    try:
        summary = export(ExportJob(**job_args))
    except ExportError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 3)
    print(f"exported {summary.exported} images ({summary.skipped} skipped) "
          f"-> {summary.manifest_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
