"""Command-line pipeline.

Subcommands cover the full flow: ``gen-synth`` writes a synthetic dataset,
``train-toy`` fits the toy embedder on its train split, ``pool`` turns
features and masks into embeddings (raw pooling or through a trained
model), ``dist`` builds the fused distance matrix, ``eval`` scores it and
``heatmap`` renders it as a PGM image. Every command that owns an output
directory drops an ``invocation.json`` echo of its resolved arguments, and
no output embeds timestamps, so reruns with equal inputs are byte-identical.

Exit codes: 0 success, 2 usage, 3 data errors, 4 numeric errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ._kernels import backend_name
from .distance import (
    DEFAULT_LAMBDA1,
    DEFAULT_LAMBDA2,
    FusionWeights,
    distance_matrix,
    l2_normalized,
)
from .errors import DimensionMismatch, EmptyInput, IoError, ParseError, ViewReidError
from .evaluation import DEFAULT_RANKS, PROTOCOLS, distance_heatmap, evaluate
from .formats import (
    read_manifest,
    read_tensor,
    resolve_path,
    write_json,
    write_key_value_report,
    write_pgm,
    write_tensor,
)
from .pooling import downsample_masks, embed
from .synthetic import generate_dataset
from .trainer import TrainConfig, embeddings_for, load_model, save_model, train
from .types import (
    SPLITS,
    DistanceMatrix,
    FeatureMap,
    FullResMaskSet,
    ViewEmbedding,
)

EXIT_CODES = {"usage": 2, "data": 3, "numeric": 4}


def _echo_invocation(out_dir: Path, command: str, args: argparse.Namespace) -> None:
    payload = {
        k: v for k, v in sorted(vars(args).items()) if k != "func" and v is not None
    }
    payload["command"] = command
    write_json(out_dir / "invocation.json", payload)


def _ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {path}: {exc}") from exc
    return path


def _load_split(manifest, split):
    """Per-record (features, full masks) plus id columns for one split."""
    records = manifest.split(split)
    feats, masks = [], []
    for rec in records:
        fmap = FeatureMap(read_tensor(resolve_path(manifest, rec.feature_path)))
        mset = FullResMaskSet(read_tensor(resolve_path(manifest, rec.mask_path)))
        if feats and fmap.data.shape != feats[0].data.shape:
            raise DimensionMismatch(
                f"{rec.image_id}: feature shape {fmap.data.shape} differs from "
                f"{feats[0].data.shape}"
            )
        feats.append(fmap)
        masks.append(mset)
    meta = {
        "image_ids": [r.image_id for r in records],
        "vehicle_ids": [r.vehicle_id for r in records],
        "camera_ids": [r.camera_id for r in records],
    }
    return feats, masks, meta


def _cmd_gen_synth(args) -> int:
    out = _ensure_dir(Path(args.out))
    manifest = generate_dataset(
        num_ids=args.num_ids,
        images_per_id=args.images_per_id,
        confuser_fraction=args.confuser_fraction,
        seed=args.seed,
        out_dir=out,
        channels=args.channels,
        grid_h=args.grid_h,
        grid_w=args.grid_w,
        mask_block=args.mask_block,
        noise_sigma=args.noise_sigma,
        type_scale=args.type_scale,
        signature_scale=args.signature_scale,
        view_jitter=args.view_jitter,
    )
    _echo_invocation(out, "gen-synth", args)
    print(f"wrote {len(manifest)} images to {out}")
    return 0


def _cmd_pool(args) -> int:
    manifest = read_manifest(args.manifest)
    model = None
    if args.model is not None:
        model, _ = load_model(args.model)
    out = _ensure_dir(Path(args.out))
    total = 0
    for split in SPLITS:
        feats, masks, meta = _load_split(manifest, split)
        if not feats:
            continue
        grid_masks = [
            downsample_masks(m, f.height, f.width) for f, m in zip(feats, masks)
        ]
        if model is None:
            embeddings = [embed(f, m) for f, m in zip(feats, grid_masks)]
        else:
            stack_f = np.stack([f.data for f in feats]).astype(np.float64)
            stack_m = np.stack([m.masks for m in grid_masks]).astype(np.float64)
            embeddings = embeddings_for(model, stack_f, stack_m)
        write_tensor(out / f"{split}_globals.tns",
                     np.stack([e.global_vec for e in embeddings]))
        write_tensor(out / f"{split}_locals.tns",
                     np.stack([e.locals_ for e in embeddings]))
        write_tensor(out / f"{split}_visibilities.tns",
                     np.stack([e.visibilities for e in embeddings]))
        write_json(out / f"{split}_meta.json", meta)
        total += len(embeddings)
    if total == 0:
        raise EmptyInput(f"manifest {args.manifest} has no records")
    _echo_invocation(out, "pool", args)
    print(f"pooled {total} embeddings into {out}")
    return 0


def _read_embeddings(src: Path, split: str):
    g = read_tensor(src / f"{split}_globals.tns")
    l = read_tensor(src / f"{split}_locals.tns")
    v = read_tensor(src / f"{split}_visibilities.tns")
    meta_path = src / f"{split}_meta.json"
    try:
        meta = json.loads(meta_path.read_text())
    except OSError as exc:
        raise IoError(f"cannot read {meta_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{meta_path}: {exc}") from exc
    if not (g.ndim == 2 and l.ndim == 3 and v.ndim == 2 and
            g.shape[0] == l.shape[0] == v.shape[0]):
        raise DimensionMismatch(
            f"inconsistent embedding files for split {split!r}: "
            f"{g.shape}, {l.shape}, {v.shape}"
        )
    embeddings = [
        ViewEmbedding(global_vec=g[i], locals_=l[i], visibilities=v[i])
        for i in range(g.shape[0])
    ]
    return embeddings, meta


def _cmd_dist(args) -> int:
    src = Path(args.embeddings)
    queries, q_meta = _read_embeddings(src, "query")
    gallery, g_meta = _read_embeddings(src, "gallery")
    if args.normalize:
        queries = [l2_normalized(e) for e in queries]
        gallery = [l2_normalized(e) for e in gallery]
    weights = FusionWeights(lambda1=args.lambda1, lambda2=args.lambda2)
    dist = distance_matrix(
        queries,
        gallery,
        weights,
        query_ids=q_meta["vehicle_ids"],
        gallery_ids=g_meta["vehicle_ids"],
        threads=args.threads,
        uniform_attention=args.uniform_attention,
    )
    out = _ensure_dir(Path(args.out))
    write_tensor(out / "dist.tns", dist.values)
    write_json(
        out / "dist_meta.json",
        {
            "backend": backend_name(),
            "lambda1": args.lambda1,
            "lambda2": args.lambda2,
            "normalize": bool(args.normalize),
            "uniform_attention": bool(args.uniform_attention),
            "degenerate_pairs": dist.degenerate_pairs,
            "query_image_ids": q_meta["image_ids"],
            "query_vehicle_ids": q_meta["vehicle_ids"],
            "query_camera_ids": q_meta["camera_ids"],
            "gallery_image_ids": g_meta["image_ids"],
            "gallery_vehicle_ids": g_meta["vehicle_ids"],
            "gallery_camera_ids": g_meta["camera_ids"],
        },
    )
    _echo_invocation(out, "dist", args)
    print(
        f"wrote {dist.num_query}x{dist.num_gallery} distances to {out} "
        f"({dist.degenerate_pairs} degenerate pairs)"
    )
    return 0


def _load_distances(src: Path) -> tuple[DistanceMatrix, dict]:
    values = read_tensor(src / "dist.tns")
    meta_path = src / "dist_meta.json"
    try:
        meta = json.loads(meta_path.read_text())
    except OSError as exc:
        raise IoError(f"cannot read {meta_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{meta_path}: {exc}") from exc
    dist = DistanceMatrix(
        values=values,
        query_ids=tuple(meta["query_vehicle_ids"]),
        gallery_ids=tuple(meta["gallery_vehicle_ids"]),
        degenerate_pairs=int(meta.get("degenerate_pairs", 0)),
    )
    return dist, meta


def _cmd_eval(args) -> int:
    dist, meta = _load_distances(Path(args.distances))
    ks = tuple(int(tok) for tok in args.ranks.split(","))
    report = evaluate(
        dist,
        query_cameras=meta["query_camera_ids"],
        gallery_cameras=meta["gallery_camera_ids"],
        protocol=args.protocol,
        ks=ks,
        seed=args.seed,
        repeats=args.repeats,
    )
    out = _ensure_dir(Path(args.out))
    payload = report.as_dict()
    write_json(out / "report.json", payload)
    write_key_value_report(out / "report.txt", sorted(payload.items()))
    _echo_invocation(out, "eval", args)
    print(f"mAP {report.mean_ap:.6f} over {report.num_query} queries -> {out}")
    return 0


def _cmd_train_toy(args) -> int:
    manifest = read_manifest(args.manifest)
    feats, masks, meta = _load_split(manifest, "train")
    if not feats:
        raise EmptyInput(f"manifest {args.manifest} has no train split")
    grid_masks = np.stack(
        [downsample_masks(m, f.height, f.width).masks for f, m in zip(feats, masks)]
    )
    stack_f = np.stack([f.data for f in feats])
    config = TrainConfig(
        steps=args.steps,
        batch_p=args.batch_p,
        batch_k=args.batch_k,
        base_lr=args.base_lr,
        warmup_steps=args.warmup_steps,
        milestones=tuple(int(tok) for tok in args.milestones.split(",") if tok),
        lr_decay=args.lr_decay,
        margin=args.margin,
        hidden=args.hidden,
        embed_dim=args.embed_dim,
        local_mode=args.local_mode,
        log_every=args.log_every,
    )
    result = train(stack_f, grid_masks, meta["vehicle_ids"], config, seed=args.seed)
    out = _ensure_dir(Path(args.out))
    save_model(result.model, result.class_names, out)
    write_json(out / "history.json", result.history)
    _echo_invocation(out, "train-toy", args)
    last = result.history[-1]
    print(f"trained {config.steps} steps, final loss {last['total']:.6f} -> {out}")
    return 0


def _cmd_heatmap(args) -> int:
    dist, _ = _load_distances(Path(args.distances))
    write_pgm(args.out, distance_heatmap(dist))
    print(f"wrote {dist.num_query}x{dist.num_gallery} heatmap to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewreid",
        description="View-aware vehicle re-identification pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--num-ids", type=int, required=True)
    p.add_argument("--images-per-id", type=int, required=True)
    p.add_argument("--confuser-fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--grid-h", type=int, default=16)
    p.add_argument("--grid-w", type=int, default=16)
    p.add_argument("--mask-block", type=int, default=4)
    p.add_argument("--noise-sigma", type=float, default=0.25)
    p.add_argument("--type-scale", type=float, default=1.0)
    p.add_argument("--signature-scale", type=float, default=1.0)
    p.add_argument("--view-jitter", type=float, default=0.0)
    p.set_defaults(func=_cmd_gen_synth)

    p = sub.add_parser("pool", help="pool features and masks into embeddings")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", help="trained model directory; default raw pooling")
    p.set_defaults(func=_cmd_pool)

    p = sub.add_parser("dist", help="fused query-gallery distance matrix")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda1", type=float, default=DEFAULT_LAMBDA1)
    p.add_argument("--lambda2", type=float, default=DEFAULT_LAMBDA2)
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--uniform-attention", action="store_true")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=_cmd_dist)

    p = sub.add_parser("eval", help="CMC and mAP for a distance matrix")
    p.add_argument("--distances", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--protocol", choices=PROTOCOLS, default="market")
    p.add_argument("--ranks", default=",".join(str(k) for k in DEFAULT_RANKS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=10)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("train-toy", help="train the toy embedder")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--batch-p", type=int, default=8)
    p.add_argument("--batch-k", type=int, default=4)
    p.add_argument("--base-lr", type=float, default=0.05)
    p.add_argument("--warmup-steps", type=int, default=40)
    p.add_argument("--milestones", default="240,340")
    p.add_argument("--lr-decay", type=float, default=0.1)
    p.add_argument("--margin", type=float, default=0.3)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--embed-dim", type=int, default=32)
    p.add_argument("--local-mode", choices=("attention", "uniform", "off"),
                   default="attention")
    p.add_argument("--log-every", type=int, default=50)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("heatmap", help="export distances as a PGM image")
    p.add_argument("--distances", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_heatmap)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ViewReidError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 3)


if __name__ == "__main__":
    sys.exit(main())
