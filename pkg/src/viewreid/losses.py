"""Training objectives with closed-form gradients.

Three terms make up the total objective, summed with no extra weights:
softmax cross-entropy on ID logits, batch-hard triplet on global features,
and batch-hard triplet on the attention-weighted local distance. Visibility
scores are treated as constants during differentiation (the masks come from
a frozen parser). At an exactly-zero hinge argument the subgradient taken
is 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    InsufficientIdentities,
    LabelOutOfRange,
    NonFiniteLoss,
    NoValidTriplet,
)
from .types import NUM_VIEWS, ViewEmbedding

DEFAULT_MARGIN = 0.3


@dataclass(frozen=True)
class LossOutput:
    """Loss value plus gradients, shaped like the differentiable inputs."""

    value: float
    grad_logits: np.ndarray | None = None
    grad_globals: np.ndarray | None = None
    grad_locals: np.ndarray | None = None
    parts: dict[str, float] | None = None

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise NonFiniteLoss(f"loss value is {self.value}")
        for name in ("grad_logits", "grad_globals", "grad_locals"):
            g = getattr(self, name)
            if g is not None and not np.all(np.isfinite(g)):
                raise NonFiniteLoss(f"{name} contains NaN or Inf")


@dataclass(frozen=True)
class Batch:
    """PK training batch: stacked embeddings, labels, optional ID logits.

    Every identity in the batch must appear at least twice so that each
    anchor has a positive to mine.
    """

    globals_: np.ndarray  # (B, C)
    locals_: np.ndarray  # (B, V, C)
    visibilities: np.ndarray  # (B, V)
    labels: np.ndarray  # (B,) int
    logits: np.ndarray | None = None  # (B, K)

    def __post_init__(self):
        g = np.asarray(self.globals_, dtype=np.float64)
        l = np.asarray(self.locals_, dtype=np.float64)
        v = np.asarray(self.visibilities, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        b = g.shape[0]
        if b < 2:
            raise InsufficientIdentities(f"batch size must be >= 2, got {b}")
        if g.ndim != 2 or l.shape != (b, NUM_VIEWS, g.shape[1]) or v.shape != (b, NUM_VIEWS):
            raise DimensionMismatch(
                f"inconsistent batch shapes: globals {g.shape}, locals {l.shape}, "
                f"visibilities {v.shape}"
            )
        if labels.shape != (b,):
            raise DimensionMismatch(f"labels must be ({b},), got {labels.shape}")
        _, counts = np.unique(labels, return_counts=True)
        if counts.min() < 2:
            raise InsufficientIdentities(
                "PK contract violated: every identity must appear at least twice"
            )
        logits = self.logits
        if logits is not None:
            logits = np.asarray(logits, dtype=np.float64)
            if logits.ndim != 2 or logits.shape[0] != b:
                raise DimensionMismatch(f"logits must be ({b}, K), got {logits.shape}")
        object.__setattr__(self, "globals_", g)
        object.__setattr__(self, "locals_", l)
        object.__setattr__(self, "visibilities", v)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "logits", logits)

    @classmethod
    def from_embeddings(
        cls, embeddings: Sequence[ViewEmbedding], labels, logits=None
    ) -> "Batch":
        if len(embeddings) == 0:
            raise EmptyInput("empty embedding list")
        return cls(
            globals_=np.stack([e.global_vec for e in embeddings]),
            locals_=np.stack([e.locals_ for e in embeddings]),
            visibilities=np.stack([e.visibilities for e in embeddings]),
            labels=labels,
            logits=logits,
        )

    @property
    def size(self) -> int:
        return self.globals_.shape[0]


def id_loss(logits, labels) -> LossOutput:
    """Mean softmax cross-entropy over the batch; gradient w.r.t. logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or y.shape != (z.shape[0],):
        raise DimensionMismatch(f"logits {z.shape} vs labels {y.shape}")
    b, k = z.shape
    if y.min() < 0 or y.max() >= k:
        raise LabelOutOfRange(f"labels must lie in [0, {k}), got range [{y.min()}, {y.max()}]")
    zmax = z.max(axis=1, keepdims=True)
    exp = np.exp(z - zmax)
    lse = np.log(exp.sum(axis=1)) + zmax[:, 0]
    value = float(np.mean(lse - z[np.arange(b), y]))
    softmax = exp / exp.sum(axis=1, keepdims=True)
    grad = softmax.copy()
    grad[np.arange(b), y] -= 1.0
    grad /= b
    return LossOutput(value=value, grad_logits=grad)


def pairwise_euclidean(x: np.ndarray) -> np.ndarray:
    """Exact B x B distance matrix via explicit differences (no gemm trick)."""
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt(np.einsum("abc,abc->ab", diff, diff))


def attention_distances(
    locals_, visibilities, uniform: bool = False
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """B x B attention-weighted local distances.

    Returns ``(dhat, att, view_dists)`` where ``dhat[p, q]`` is the local
    distance between items p and q, ``att`` the (B, B, V) attention weights
    (uniform 1/V where no common view exists) and ``view_dists`` the per-view
    Euclidean distances. ``uniform=True`` is the ablation switch that forces
    1/V weights for every pair, ignoring visibilities.
    """
    l = np.asarray(locals_, dtype=np.float64)
    v = np.asarray(visibilities, dtype=np.float64)
    diff = l[:, None, :, :] - l[None, :, :, :]  # (B, B, V, C)
    view_dists = np.sqrt(np.einsum("pqvc,pqvc->pqv", diff, diff))
    prod = v[:, None, :] * v[None, :, :]  # (B, B, V)
    att = np.full_like(prod, 1.0 / NUM_VIEWS)
    if not uniform:
        denom = prod.sum(axis=2)
        np.divide(prod, denom[:, :, None], out=att, where=denom[:, :, None] > 0.0)
    dhat = np.einsum("pqv,pqv->pq", att, view_dists)
    return dhat, att, view_dists


def _mine_batch_hard(dist: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hardest positive / nearest negative index per anchor."""
    b = dist.shape[0]
    same = labels[:, None] == labels[None, :]
    pos_mask = same & ~np.eye(b, dtype=bool)
    neg_mask = ~same
    if not pos_mask.any(axis=1).all():
        raise NoValidTriplet("an anchor has no positive in the batch")
    if not neg_mask.any(axis=1).all():
        raise NoValidTriplet("batch contains a single identity; no negatives to mine")
    pos_idx = np.where(pos_mask, dist, -np.inf).argmax(axis=1)
    neg_idx = np.where(neg_mask, dist, np.inf).argmin(axis=1)
    return pos_idx, neg_idx


def global_triplet(globals_, labels, margin: float = DEFAULT_MARGIN) -> LossOutput:
    """Batch-hard triplet loss on Euclidean distances of global features."""
    x = np.asarray(globals_, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise DimensionMismatch(f"globals {x.shape} vs labels {y.shape}")
    b = x.shape[0]
    dist = pairwise_euclidean(x)
    pos_idx, neg_idx = _mine_batch_hard(dist, y)
    hinge = dist[np.arange(b), pos_idx] - dist[np.arange(b), neg_idx] + margin
    value = float(np.maximum(hinge, 0.0).mean())
    grad = np.zeros_like(x)
    for a in range(b):
        if hinge[a] <= 0.0:
            continue
        p, n = pos_idx[a], neg_idx[a]
        if dist[a, p] > 0.0:
            u = (x[a] - x[p]) / (dist[a, p] * b)
            grad[a] += u
            grad[p] -= u
        if dist[a, n] > 0.0:
            u = (x[a] - x[n]) / (dist[a, n] * b)
            grad[a] -= u
            grad[n] += u
    return LossOutput(value=value, grad_globals=grad)


def local_triplet(
    batch: Batch, margin: float = DEFAULT_MARGIN, uniform: bool = False
) -> LossOutput:
    """Batch-hard triplet on the attention-weighted local distance.

    The same distance drives mining and the loss; gradients flow into every
    local feature vector on the mined pairs while visibilities stay fixed.
    """
    dhat, att, view_dists = attention_distances(
        batch.locals_, batch.visibilities, uniform=uniform
    )
    b = batch.size
    pos_idx, neg_idx = _mine_batch_hard(dhat, batch.labels)
    hinge = dhat[np.arange(b), pos_idx] - dhat[np.arange(b), neg_idx] + margin
    value = float(np.maximum(hinge, 0.0).mean())
    grad = np.zeros_like(batch.locals_)
    l = batch.locals_
    for a in range(b):
        if hinge[a] <= 0.0:
            continue
        for other, sign in ((pos_idx[a], 1.0), (neg_idx[a], -1.0)):
            for i in range(NUM_VIEWS):
                d = view_dists[a, other, i]
                w = att[a, other, i]
                if d > 0.0 and w > 0.0:
                    u = (sign * w / (d * b)) * (l[a, i] - l[other, i])
                    grad[a, i] += u
                    grad[other, i] -= u
    return LossOutput(value=value, grad_locals=grad)


LOCAL_MODES = ("attention", "uniform", "off")


def total_loss(
    batch: Batch, margin: float = DEFAULT_MARGIN, local_mode: str = "attention"
) -> LossOutput:
    """Unweighted sum: ID cross-entropy + global triplet + local triplet.

    ``local_mode`` selects the ablation variant: ``attention`` is the full
    objective, ``uniform`` replaces visibility attention with 1/V weights,
    ``off`` drops the local term entirely.
    """
    if local_mode not in LOCAL_MODES:
        raise EmptyInput(f"local_mode must be one of {LOCAL_MODES}, got {local_mode!r}")
    if batch.logits is None:
        raise EmptyInput("total_loss needs a batch with logits")
    ce = id_loss(batch.logits, batch.labels)
    gt = global_triplet(batch.globals_, batch.labels, margin)
    if local_mode == "off":
        lt = LossOutput(value=0.0, grad_locals=np.zeros_like(batch.locals_))
    else:
        lt = local_triplet(batch, margin, uniform=local_mode == "uniform")
    return LossOutput(
        value=ce.value + gt.value + lt.value,
        grad_logits=ce.grad_logits,
        grad_globals=gt.grad_globals,
        grad_locals=lt.grad_locals,
        parts={
            "id": ce.value,
            "triplet_global": gt.value,
            "triplet_local": lt.value,
        },
    )
