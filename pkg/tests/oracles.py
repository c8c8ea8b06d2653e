"""Reference implementations used to cross-check the package.

Everything here is written with explicit Python loops, ``math.fsum`` and
float64 scalars, deliberately avoiding the vectorized code paths under
test.
"""

from __future__ import annotations

import math

import numpy as np

NUM_VIEWS = 4


def pool_oracle(features, masks):
    """Masked average pooling by scalar accumulation.

    features: (H, W, C); masks: (V, H, W) in [0, 1].
    Returns (global (C,), locals (V, C), visibilities (V,)) as float64.
    """
    f = np.asarray(features, dtype=np.float64)
    m = np.asarray(masks, dtype=np.float64)
    h, w, c = f.shape
    v = m.shape[0]
    global_vec = np.array(
        [math.fsum(f[i, j, k] for i in range(h) for j in range(w)) / (h * w)
         for k in range(c)]
    )
    vis = np.array(
        [math.fsum(m[t, i, j] for i in range(h) for j in range(w))
         for t in range(v)]
    )
    locals_ = np.zeros((v, c))
    for t in range(v):
        if vis[t] <= 0.0:
            continue
        for k in range(c):
            num = math.fsum(
                m[t, i, j] * f[i, j, k] for i in range(h) for j in range(w)
            )
            locals_[t, k] = num / vis[t]
    return global_vec, locals_, vis


def downsample_oracle(masks, th, tw):
    """Block max pooling by scalar loops. masks: (V, H, W)."""
    m = np.asarray(masks, dtype=np.float64)
    v, h, w = m.shape
    bh, bw = h // th, w // tw
    out = np.zeros((v, th, tw))
    for t in range(v):
        for i in range(th):
            for j in range(tw):
                best = 0.0
                for a in range(bh):
                    for b in range(bw):
                        best = max(best, m[t, i * bh + a, j * bw + b])
                out[t, i, j] = best
    return out


def attention_oracle(v_p, v_q):
    """Normalized visibility products; uniform 1/V when no common view."""
    prods = [float(v_p[i]) * float(v_q[i]) for i in range(NUM_VIEWS)]
    denom = math.fsum(prods)
    if denom <= 0.0:
        return [1.0 / NUM_VIEWS] * NUM_VIEWS
    return [p / denom for p in prods]


def euclidean_oracle(x, y):
    return math.sqrt(
        math.fsum((float(a) - float(b)) ** 2 for a, b in zip(np.ravel(x), np.ravel(y)))
    )


def fused_oracle(g_p, l_p, v_p, g_q, l_q, v_q, lam1, lam2, uniform=False):
    """Scalar fused distance: lam1 * global + lam2 * weighted local."""
    total = lam1 * euclidean_oracle(g_p, g_q)
    if lam2 != 0.0:
        att = (
            [1.0 / NUM_VIEWS] * NUM_VIEWS
            if uniform
            else attention_oracle(v_p, v_q)
        )
        for i in range(NUM_VIEWS):
            if att[i] > 0.0:
                total += lam2 * att[i] * euclidean_oracle(l_p[i], l_q[i])
    return total


def average_precision_oracle(relevance):
    hits = 0
    precisions = []
    for pos, rel in enumerate(relevance, start=1):
        if rel:
            hits += 1
            precisions.append(hits / pos)
    if hits == 0:
        raise ValueError("no relevant items")
    return math.fsum(precisions) / hits


def _ranked_relevance(row, q_id, g_ids, keep):
    order = sorted(
        (j for j in range(len(row)) if keep[j]),
        key=lambda j: (row[j], j),
    )
    return [g_ids[j] == q_id for j in order]


def market_oracle(values, q_ids, g_ids, q_cams, g_cams, ks):
    """CMC/mAP with same-identity same-camera gallery exclusion."""
    aps = []
    first_hits = []
    for q in range(len(q_ids)):
        keep = [
            not (g_ids[j] == q_ids[q] and g_cams[j] == q_cams[q])
            for j in range(len(g_ids))
        ]
        rel = _ranked_relevance(values[q], q_ids[q], g_ids, keep)
        if not any(rel):
            continue
        aps.append(average_precision_oracle(rel))
        first_hits.append(rel.index(True))
    mean_ap = math.fsum(aps) / len(aps)
    cmc = {
        k: sum(1 for fh in first_hits if fh < k) / len(first_hits) for k in ks
    }
    return mean_ap, cmc, len(aps)


def one_per_id_oracle(values, q_ids, g_ids, ks, seed, repeats):
    """Seeded one-image-per-identity gallery protocol, averaged over trials."""
    unique = sorted(set(g_ids))
    groups = {
        uid: [j for j in range(len(g_ids)) if g_ids[j] == uid] for uid in unique
    }
    trial_maps = []
    trial_cmcs = []
    for t in range(repeats):
        rng = np.random.default_rng((seed, 23, t))
        chosen = [groups[uid][int(rng.integers(0, len(groups[uid])))] for uid in unique]
        sub_ids = [g_ids[j] for j in chosen]
        aps = []
        first_hits = []
        for q in range(len(q_ids)):
            row = [values[q][j] for j in chosen]
            rel = _ranked_relevance(row, q_ids[q], sub_ids, [True] * len(chosen))
            if not any(rel):
                continue
            aps.append(average_precision_oracle(rel))
            first_hits.append(rel.index(True))
        trial_maps.append(math.fsum(aps) / len(aps))
        trial_cmcs.append(
            {k: sum(1 for fh in first_hits if fh < k) / len(first_hits) for k in ks}
        )
    mean_ap = math.fsum(trial_maps) / repeats
    cmc = {
        k: math.fsum(tc[k] for tc in trial_cmcs) / repeats for k in ks
    }
    return mean_ap, cmc


def numeric_grad(fn, x, h=1e-4):
    """Central finite differences of a scalar function, element by element."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(x)
        flat[i] = orig - h
        down = fn(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def grad_close(analytic, numeric, tol=1e-4):
    """Relative gradient agreement: max |a - n| / max(1, |a|, |n|) <= tol."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / scale)) <= tol
