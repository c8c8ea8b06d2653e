"""Benchmark the fused distance engine and compare compute backends.

Measures wall time of ``distance_matrix`` on the active backend (numba by
default, numpy when ``VIEWREID_NO_NUMBA=1``). With ``--compare`` the script
re-runs itself in a subprocess with the fallback backend forced, checks that
both matrices agree within 1e-5, and reports the speedup.

Usage:
    python3 benchmarks/bench_distance.py
    python3 benchmarks/bench_distance.py --queries 500 --gallery 5000 --compare
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from viewreid import (
    FusionWeights,
    ViewEmbedding,
    backend_name,
    distance_matrix,
    read_tensor,
    write_tensor,
)


def build_embeddings(rng: np.random.Generator, count: int, dim: int):
    out = []
    for i in range(count):
        vis = np.abs(rng.normal(size=4)) + 0.1
        locals_ = rng.normal(size=(4, dim))
        if i % 9 == 0:
            vis[i % 4] = 0.0
            locals_[i % 4] = 0.0
        out.append(
            ViewEmbedding(
                global_vec=rng.normal(size=dim),
                locals_=locals_,
                visibilities=vis,
            )
        )
    return out


def bench(args) -> dict:
    rng = np.random.default_rng(args.seed)
    queries = build_embeddings(rng, args.queries, args.dim)
    gallery = build_embeddings(rng, args.gallery, args.dim)
    weights = FusionWeights(lambda1=args.lambda1, lambda2=args.lambda2)

    dist = distance_matrix(queries[:2], gallery[:2], weights)  # warm the kernel
    best = float("inf")
    for _ in range(args.repeats):
        start = time.perf_counter()
        dist = distance_matrix(queries, gallery, weights, threads=args.threads)
        best = min(best, time.perf_counter() - start)
    pairs_per_s = args.queries * args.gallery / best
    if args.out:
        write_tensor(args.out, dist.values)
    return {
        "backend": backend_name(),
        "queries": args.queries,
        "gallery": args.gallery,
        "dim": args.dim,
        "best_seconds": best,
        "pairs_per_second": pairs_per_s,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--gallery", type=int, default=2000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--lambda1", type=float, default=1.0)
    parser.add_argument("--lambda2", type=float, default=0.5)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", help="write the distance matrix to this path")
    parser.add_argument("--json", action="store_true",
                        help="emit one JSON line instead of text")
    parser.add_argument("--compare", action="store_true",
                        help="also run the numpy fallback and report the speedup")
    args = parser.parse_args(argv)

    result = bench(args)
    if args.json:
        print(json.dumps(result))
        return 0
    print(
        f"{result['backend']:>5} backend: {args.queries}x{args.gallery} C={args.dim} "
        f"best {result['best_seconds']:.3f}s "
        f"({result['pairs_per_second'] / 1e6:.2f}M pairs/s)"
    )

    if args.compare:
        if backend_name() != "numba":
            print("compare skipped: already running the fallback backend")
            return 0
        with tempfile.TemporaryDirectory() as td:
            mine = Path(td) / "numba.tns"
            theirs = Path(td) / "numpy.tns"
            # rerun both backends with --out so the matrices can be compared
            for env_flag, path in (("0", mine), ("1", theirs)):
                env = dict(os.environ, VIEWREID_NO_NUMBA=env_flag)
                argv_child = [
                    sys.executable, __file__,
                    "--queries", str(args.queries), "--gallery", str(args.gallery),
                    "--dim", str(args.dim), "--repeats", str(args.repeats),
                    "--seed", str(args.seed), "--lambda1", str(args.lambda1),
                    "--lambda2", str(args.lambda2),
                    "--json", "--out", str(path),
                ]
                proc = subprocess.run(argv_child, env=env, capture_output=True,
                                      text=True, check=True)
                stats = json.loads(proc.stdout.splitlines()[-1])
                print(
                    f"{stats['backend']:>5} backend: best {stats['best_seconds']:.3f}s "
                    f"({stats['pairs_per_second'] / 1e6:.2f}M pairs/s)"
                )
                if stats["backend"] == "numba":
                    numba_s = stats["best_seconds"]
                else:
                    numpy_s = stats["best_seconds"]
            a = read_tensor(mine)
            b = read_tensor(theirs)
            agree = bool(np.allclose(a, b, atol=1e-5))
            print(f"backends agree within 1e-5: {agree}")
            print(f"speedup numba over numpy: {numpy_s / numba_s:.2f}x")
            if not agree:
                return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
