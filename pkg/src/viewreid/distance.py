"""Common-visible attention and fused distances between view embeddings.

Attention weights are the normalized products of the two images' visibility
scores, ``a_i = v_i^p v_i^q / sum_i v_i^p v_i^q``; the local distance is the
attention-weighted sum of per-view Euclidean distances, and the fused
inference distance is ``lambda1 * D(global) + lambda2 * D_local``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, EmptyInput, NegativeVisibility
from .types import NUM_VIEWS, DistanceMatrix, ViewEmbedding

DEFAULT_LAMBDA1 = 1.0
DEFAULT_LAMBDA2 = 0.5


@dataclass(frozen=True)
class FusionWeights:
    """Weights of the global and local distance terms at inference."""

    lambda1: float = DEFAULT_LAMBDA1
    lambda2: float = DEFAULT_LAMBDA2

    def __post_init__(self):
        if self.lambda1 < 0.0 or self.lambda2 < 0.0:
            raise NegativeVisibility(
                f"fusion weights must be >= 0, got ({self.lambda1}, {self.lambda2})"
            )
        if self.lambda1 == 0.0 and self.lambda2 == 0.0:
            raise EmptyInput("fusion weights must not both be zero")


def common_visible_scores(
    v_p: Sequence[float], v_q: Sequence[float]
) -> tuple[np.ndarray, bool]:
    """Normalized per-view visibility products.

    Returns ``(weights, degenerate)``. The weights are nonnegative and sum
    to 1. When every product is zero (no commonly visible view) the weights
    fall back to uniform 1/N and ``degenerate`` is True.
    """
    vp = np.asarray(v_p, dtype=np.float64)
    vq = np.asarray(v_q, dtype=np.float64)
    if vp.shape != (NUM_VIEWS,) or vq.shape != (NUM_VIEWS,):
        raise DimensionMismatch(
            f"visibility vectors must have shape ({NUM_VIEWS},), "
            f"got {vp.shape} and {vq.shape}"
        )
    if vp.min() < 0.0 or vq.min() < 0.0:
        raise NegativeVisibility("visibility scores must be >= 0")
    prod = vp * vq
    denom = prod.sum()
    if denom <= 0.0:
        return np.full(NUM_VIEWS, 1.0 / NUM_VIEWS), True
    return prod / denom, False


def euclidean(x: Sequence[float], y: Sequence[float]) -> float:
    """Plain L2 distance, accumulated in float64."""
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.shape != yv.shape:
        raise DimensionMismatch(f"shape mismatch {xv.shape} vs {yv.shape}")
    d = xv - yv
    return float(np.sqrt(np.dot(d.ravel(), d.ravel())))


def local_distance(
    e_p: ViewEmbedding, e_q: ViewEmbedding, uniform: bool = False
) -> float:
    """Attention-weighted sum of per-view local Euclidean distances.

    ``uniform=True`` forces 1/N weights regardless of visibility (the
    ablation variant); otherwise weights come from the common-visible
    scores.
    """
    if e_p.dim != e_q.dim:
        raise DimensionMismatch(f"embedding dims differ: {e_p.dim} vs {e_q.dim}")
    if uniform:
        att = np.full(NUM_VIEWS, 1.0 / NUM_VIEWS)
    else:
        att, _ = common_visible_scores(e_p.visibilities, e_q.visibilities)
    total = 0.0
    for i in range(NUM_VIEWS):
        if att[i] > 0.0:
            total += att[i] * euclidean(e_p.locals_[i], e_q.locals_[i])
    return total


def fused_distance(
    e_p: ViewEmbedding,
    e_q: ViewEmbedding,
    weights: FusionWeights = FusionWeights(),
    uniform: bool = False,
) -> float:
    """Global Euclidean distance plus the weighted local distance."""
    if e_p.dim != e_q.dim:
        raise DimensionMismatch(f"embedding dims differ: {e_p.dim} vs {e_q.dim}")
    d = weights.lambda1 * euclidean(e_p.global_vec, e_q.global_vec)
    if weights.lambda2 != 0.0:
        d += weights.lambda2 * local_distance(e_p, e_q, uniform=uniform)
    return d


def l2_normalized(e: ViewEmbedding) -> ViewEmbedding:
    """Unit-norm copy of an embedding (zero vectors stay zero).

    Distances are computed on raw features by default; this is the opt-in
    normalization hook surfaced as the CLI ``--normalize`` flag.
    """
    def _unit(v: np.ndarray) -> np.ndarray:
        n = float(np.linalg.norm(v))
        return v / n if n > 0.0 else v

    return ViewEmbedding(
        global_vec=_unit(e.global_vec),
        locals_=np.stack([_unit(e.locals_[i]) for i in range(NUM_VIEWS)]),
        visibilities=e.visibilities,
    )


def pack_embeddings(
    embeddings: Sequence[ViewEmbedding],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack embeddings into (globals, locals, visibilities) float32 arrays."""
    if len(embeddings) == 0:
        raise EmptyInput("no embeddings to pack")
    dim = embeddings[0].dim
    for e in embeddings:
        if e.dim != dim:
            raise DimensionMismatch(
                f"inconsistent embedding dims: {dim} vs {e.dim}"
            )
    g = np.stack([e.global_vec for e in embeddings])
    l = np.stack([e.locals_ for e in embeddings])
    v = np.stack([e.visibilities for e in embeddings])
    return g, l, v


def distance_matrix(
    queries: Sequence[ViewEmbedding],
    gallery: Sequence[ViewEmbedding],
    weights: FusionWeights = FusionWeights(),
    query_ids: Sequence[str] | None = None,
    gallery_ids: Sequence[str] | None = None,
    threads: int | None = None,
    uniform_attention: bool = False,
) -> DistanceMatrix:
    """Batched fused distances, parallel across query rows.

    Per-entry accumulation runs in float64 and the result is stored as
    float32; entries agree with ``fused_distance`` up to summation order.
    The output does not depend on the number of worker threads.
    """
    qg, ql, qv = pack_embeddings(queries)
    gg, gl, gv = pack_embeddings(gallery)
    if qg.shape[1] != gg.shape[1]:
        raise DimensionMismatch(
            f"query dim {qg.shape[1]} != gallery dim {gg.shape[1]}"
        )
    w = weights if isinstance(weights, FusionWeights) else FusionWeights(*weights)
    _kernels.set_threads(threads)
    values, degen = _kernels.fused_matrix(
        qg, ql, qv, gg, gl, gv, w.lambda1, w.lambda2, uniform_attention
    )
    if query_ids is None:
        query_ids = [str(i) for i in range(len(queries))]
    if gallery_ids is None:
        gallery_ids = [str(i) for i in range(len(gallery))]
    return DistanceMatrix(
        values=values,
        query_ids=tuple(query_ids),
        gallery_ids=tuple(gallery_ids),
        degenerate_pairs=degen,
    )
