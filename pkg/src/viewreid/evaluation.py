"""Retrieval evaluation: CMC at rank k and mean average precision.

Two gallery protocols:

* ``market``: every gallery image competes, except same-identity
  same-camera entries, which are excluded per query.
* ``one_per_id``: each trial samples one gallery image per identity with a
  seeded generator and metrics are averaged over trials. Trial ``t`` uses
  ``numpy.random.default_rng((seed, 23, t))`` and draws one
  ``rng.integers(0, group_size)`` per identity, iterating identities in
  sorted order; the drawn value indexes that identity's gallery positions
  in gallery order.

Per-query average precisions are accumulated with ``math.fsum`` so results
do not depend on summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, NoRelevantItems, ParseError
from .types import DistanceMatrix

PROTOCOLS = ("market", "one_per_id")
DEFAULT_RANKS = (1, 5, 10)


@dataclass(frozen=True)
class EvalReport:
    protocol: str
    mean_ap: float
    cmc: tuple[tuple[int, float], ...]
    num_query: int
    num_gallery: int
    skipped_queries: int
    repeats: int
    seed: int

    def as_dict(self) -> dict:
        out = {
            "protocol": self.protocol,
            "mean_ap": self.mean_ap,
            "num_query": self.num_query,
            "num_gallery": self.num_gallery,
            "skipped_queries": self.skipped_queries,
            "repeats": self.repeats,
            "seed": self.seed,
        }
        for k, v in self.cmc:
            out[f"cmc@{k}"] = v
        return out


def rank_gallery(row: np.ndarray) -> np.ndarray:
    """Ascending-distance gallery order; ties break toward lower index."""
    return np.argsort(row, kind="stable")


def average_precision(relevance: np.ndarray) -> float:
    """AP of one ranked binary relevance list: mean of precision at each hit."""
    rel = np.asarray(relevance, dtype=bool)
    total = int(rel.sum())
    if total == 0:
        raise NoRelevantItems("ranked list has no relevant items")
    hits = 0
    precisions = []
    for pos, r in enumerate(rel, start=1):
        if r:
            hits += 1
            precisions.append(hits / pos)
    return math.fsum(precisions) / total


def _single_pass(values, q_ids, g_ids, q_cams, g_cams, exclude_same_camera, ks):
    """One CMC/mAP pass over the full gallery. Returns (aps, hit ranks)."""
    aps: list[float] = []
    first_hits: list[int] = []
    for q in range(values.shape[0]):
        same_id = g_ids == q_ids[q]
        keep = np.ones(values.shape[1], dtype=bool)
        if exclude_same_camera:
            keep = ~(same_id & (g_cams == q_cams[q]))
        order = rank_gallery(values[q])
        order = order[keep[order]]
        rel = same_id[order]
        if not rel.any():
            continue
        aps.append(average_precision(rel))
        first_hits.append(int(np.flatnonzero(rel)[0]))
    return aps, first_hits


def _cmc_from_hits(first_hits: list[int], ks) -> tuple[tuple[int, float], ...]:
    n = len(first_hits)
    hits = np.asarray(first_hits)
    return tuple((k, float((hits < k).sum() / n)) for k in ks)


def evaluate(
    dist: DistanceMatrix,
    query_cameras=None,
    gallery_cameras=None,
    protocol: str = "market",
    ks=DEFAULT_RANKS,
    seed: int = 0,
    repeats: int = 10,
) -> EvalReport:
    """Score a query-by-gallery distance matrix under the chosen protocol."""
    if protocol not in PROTOCOLS:
        raise ParseError(f"protocol must be one of {PROTOCOLS}, got {protocol!r}")
    ks = tuple(int(k) for k in ks)
    if not ks or any(k < 1 for k in ks):
        raise ParseError(f"ranks must be positive, got {ks}")
    if dist.query_ids is None or dist.gallery_ids is None:
        raise EmptyInput("distance matrix must carry query and gallery identities")
    q_ids = np.asarray(dist.query_ids)
    g_ids = np.asarray(dist.gallery_ids)
    values = dist.values

    if protocol == "market":
        if query_cameras is None or gallery_cameras is None:
            raise EmptyInput("market protocol needs query and gallery cameras")
        q_cams = np.asarray(query_cameras)
        g_cams = np.asarray(gallery_cameras)
        if q_cams.shape != q_ids.shape or g_cams.shape != g_ids.shape:
            raise DimensionMismatch(
                f"camera arrays {q_cams.shape}/{g_cams.shape} do not match "
                f"identity arrays {q_ids.shape}/{g_ids.shape}"
            )
        aps, first_hits = _single_pass(values, q_ids, g_ids, q_cams, g_cams, True, ks)
        if not aps:
            raise NoRelevantItems("no query has a valid same-identity gallery match")
        return EvalReport(
            protocol=protocol,
            mean_ap=math.fsum(aps) / len(aps),
            cmc=_cmc_from_hits(first_hits, ks),
            num_query=len(aps),
            num_gallery=values.shape[1],
            skipped_queries=values.shape[0] - len(aps),
            repeats=1,
            seed=seed,
        )

    if repeats < 1:
        raise ParseError(f"repeats must be >= 1, got {repeats}")
    unique_ids = sorted(set(g_ids.tolist()))
    id_to_indices = {uid: np.flatnonzero(g_ids == uid) for uid in unique_ids}
    trial_maps: list[float] = []
    trial_cmcs: list[tuple[tuple[int, float], ...]] = []
    evaluated = 0
    skipped = 0
    for trial in range(repeats):
        rng = np.random.default_rng((seed, 23, trial))
        chosen = np.array(
            [idx[rng.integers(0, len(idx))] for idx in id_to_indices.values()]
        )
        sub_values = values[:, chosen]
        sub_ids = g_ids[chosen]
        aps, first_hits = _single_pass(
            sub_values, q_ids, sub_ids, None, None, False, ks
        )
        if not aps:
            raise NoRelevantItems("no query identity appears in the sampled gallery")
        trial_maps.append(math.fsum(aps) / len(aps))
        trial_cmcs.append(_cmc_from_hits(first_hits, ks))
        evaluated = len(aps)
        skipped = values.shape[0] - len(aps)
    mean_ap = math.fsum(trial_maps) / repeats
    cmc = tuple(
        (k, math.fsum(c[i][1] for c in trial_cmcs) / repeats)
        for i, k in enumerate(ks)
    )
    return EvalReport(
        protocol=protocol,
        mean_ap=mean_ap,
        cmc=cmc,
        num_query=evaluated,
        num_gallery=len(unique_ids),
        skipped_queries=skipped,
        repeats=repeats,
        seed=seed,
    )


def distance_heatmap(dist: DistanceMatrix) -> np.ndarray:
    """Distances rescaled to [0, 1] for image export; constant input maps to 0."""
    v = dist.values.astype(np.float64)
    lo = v.min()
    span = v.max() - lo
    if span <= 0.0:
        return np.zeros_like(v)
    return (v - lo) / span
