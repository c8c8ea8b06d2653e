"""Hot kernels for the batched fused-distance engine.

Two interchangeable backends compute the Q x G matrix of
``lambda1 * D(global) + lambda2 * sum_i a_i * D(local_i)``:

* a numba ``@njit(parallel=True)`` kernel (default) that parallelizes across
  query rows, and
* a pure-numpy row loop used when numba is unavailable or when the
  environment variable ``VIEWREID_NO_NUMBA`` is set to a non-empty value
  other than ``0``.

Both accumulate per entry in float64 and store float32. Each output cell is
produced by exactly one worker with a fixed inner order, so results are
deterministic and independent of thread count. ``benchmarks/bench_distance.py``
compares the two paths.
"""

from __future__ import annotations

import os

import numpy as np

_env = os.environ.get("VIEWREID_NO_NUMBA", "")
NUMBA_ENABLED = _env in ("", "0")

if NUMBA_ENABLED:
    try:
        import numba
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba = None
        NUMBA_ENABLED = False


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


def set_threads(n: int | None) -> None:
    """Cap numba worker threads; no-op on the numpy backend."""
    if NUMBA_ENABLED and n is not None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


if NUMBA_ENABLED:

    @numba.njit(parallel=True, fastmath=True, cache=True)
    def _fused_matrix_numba(qg, ql, qv, gg, gl, gv, lam1, lam2, uniform):
        nq, dim = qg.shape
        ng = gg.shape[0]
        nv = qv.shape[1]
        out = np.empty((nq, ng), dtype=np.float32)
        degen = np.zeros(nq, dtype=np.int64)
        for q in numba.prange(nq):
            for g in range(ng):
                acc = 0.0
                for c in range(dim):
                    d = qg[q, c] - gg[g, c]
                    acc += d * d
                dist = lam1 * np.sqrt(acc)
                denom = 0.0
                if not uniform:
                    for i in range(nv):
                        denom += qv[q, i] * gv[g, i]
                if denom > 0.0:
                    for i in range(nv):
                        a = qv[q, i] * gv[g, i] / denom
                        if a > 0.0:
                            s = 0.0
                            for c in range(dim):
                                d = ql[q, i, c] - gl[g, i, c]
                                s += d * d
                            dist += lam2 * a * np.sqrt(s)
                else:
                    if not uniform:
                        degen[q] += 1
                    for i in range(nv):
                        s = 0.0
                        for c in range(dim):
                            d = ql[q, i, c] - gl[g, i, c]
                            s += d * d
                        dist += lam2 * np.sqrt(s) / nv
                out[q, g] = np.float32(dist)
        return out, degen


def _fused_matrix_numpy(qg, ql, qv, gg, gl, gv, lam1, lam2, uniform):
    nq, nv = qv.shape
    ng = gg.shape[0]
    out = np.empty((nq, ng), dtype=np.float32)
    degen = np.zeros(nq, dtype=np.int64)
    for q in range(nq):
        dg = gg - qg[q]
        row = lam1 * np.sqrt(np.einsum("gc,gc->g", dg, dg))
        dl = gl - ql[q]
        view_dist = np.sqrt(np.einsum("gvc,gvc->gv", dl, dl))  # (G, V)
        if uniform:
            att = np.full((ng, nv), 1.0 / nv)
        else:
            prod = qv[q] * gv  # (G, V)
            denom = prod.sum(axis=1)
            zero = denom == 0.0
            degen[q] = int(zero.sum())
            att = np.empty_like(prod)
            np.divide(prod, denom[:, None], out=att, where=~zero[:, None])
            att[zero] = 1.0 / nv
        out[q] = (row + lam2 * np.einsum("gv,gv->g", att, view_dist)).astype(
            np.float32
        )
    return out, degen


def fused_matrix(qg, ql, qv, gg, gl, gv, lam1: float, lam2: float,
                 uniform: bool = False):
    """Dispatch to the active backend. Inputs are cast to contiguous float64.

    Returns ``(values float32 (Q, G), degenerate_pair_count int)``. With
    ``uniform=True`` every pair uses 1/V attention and the degenerate count
    stays 0.
    """
    qg = np.ascontiguousarray(qg, dtype=np.float64)
    ql = np.ascontiguousarray(ql, dtype=np.float64)
    qv = np.ascontiguousarray(qv, dtype=np.float64)
    gg = np.ascontiguousarray(gg, dtype=np.float64)
    gl = np.ascontiguousarray(gl, dtype=np.float64)
    gv = np.ascontiguousarray(gv, dtype=np.float64)
    if NUMBA_ENABLED:
        values, degen = _fused_matrix_numba(
            qg, ql, qv, gg, gl, gv, lam1, lam2, uniform
        )
    else:
        values, degen = _fused_matrix_numpy(
            qg, ql, qv, gg, gl, gv, lam1, lam2, uniform
        )
    return values, int(degen.sum())
