import numpy as np
import pytest

from oracles import attention_oracle, euclidean_oracle, fused_oracle
from viewreid import _kernels
from viewreid.distance import (
    FusionWeights,
    common_visible_scores,
    distance_matrix,
    euclidean,
    fused_distance,
    l2_normalized,
    local_distance,
    pack_embeddings,
)
from viewreid.errors import (
    DimensionMismatch,
    EmptyInput,
    NegativeVisibility,
)
from viewreid.types import ViewEmbedding


def make_embedding(rng, dim=8, zero_views=()):
    """Random embedding; views listed in zero_views get zero visibility."""
    vis = np.abs(rng.normal(size=4)) + 0.1
    locals_ = rng.normal(size=(4, dim))
    for i in zero_views:
        vis[i] = 0.0
        locals_[i] = 0.0
    return ViewEmbedding(
        global_vec=rng.normal(size=dim), locals_=locals_, visibilities=vis
    )


class TestFusionWeights:
    def test_defaults(self):
        w = FusionWeights()
        assert (w.lambda1, w.lambda2) == (1.0, 0.5)

    def test_validation(self):
        with pytest.raises(NegativeVisibility):
            FusionWeights(-1.0, 0.5)
        with pytest.raises(EmptyInput):
            FusionWeights(0.0, 0.0)
        FusionWeights(0.0, 1.0)  # one-sided weights are fine


class TestCommonVisibleScores:
    def test_matches_oracle_and_sums_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            vp = np.abs(rng.normal(size=4))
            vq = np.abs(rng.normal(size=4))
            got, degenerate = common_visible_scores(vp, vq)
            assert not degenerate
            assert np.allclose(got, attention_oracle(vp, vq), atol=1e-12)
            assert abs(got.sum() - 1.0) <= 1e-9

    def test_scale_invariance(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            vp = np.abs(rng.normal(size=4))
            vq = np.abs(rng.normal(size=4))
            base, _ = common_visible_scores(vp, vq)
            scaled, _ = common_visible_scores(731.0 * vp, vq / 977.0)
            assert np.allclose(base, scaled, atol=1e-12)

    def test_disjoint_views_fall_back_to_exact_uniform(self):
        got, degenerate = common_visible_scores([1, 1, 0, 0], [0, 0, 2, 3])
        assert degenerate
        assert np.array_equal(got, np.full(4, 0.25))

    def test_zero_visibility_view_gets_zero_weight(self):
        got, _ = common_visible_scores([1, 0, 1, 1], [1, 5, 1, 1])
        assert got[1] == 0.0

    def test_rejects_negative_and_bad_shape(self):
        with pytest.raises(NegativeVisibility):
            common_visible_scores([1, -1, 0, 0], [1, 1, 1, 1])
        with pytest.raises(DimensionMismatch):
            common_visible_scores([1, 1, 1], [1, 1, 1, 1])


class TestScalarDistances:
    def test_euclidean_matches_oracle(self, rng):
        for _ in range(20):
            x, y = rng.normal(size=(2, 9))
            assert abs(euclidean(x, y) - euclidean_oracle(x, y)) <= 1e-12

    def test_local_distance_matches_oracle(self, rng):
        for _ in range(20):
            a, b = make_embedding(rng), make_embedding(rng)
            want = fused_oracle(
                a.global_vec, a.locals_, a.visibilities,
                b.global_vec, b.locals_, b.visibilities, 0.0, 1.0,
            )
            assert abs(local_distance(a, b) - want) <= 1e-9

    def test_fused_distance_matches_oracle_both_modes(self, rng):
        for uniform in (False, True):
            for _ in range(20):
                a, b = make_embedding(rng), make_embedding(rng)
                want = fused_oracle(
                    a.global_vec, a.locals_, a.visibilities,
                    b.global_vec, b.locals_, b.visibilities,
                    1.0, 0.5, uniform=uniform,
                )
                got = fused_distance(a, b, FusionWeights(1.0, 0.5), uniform=uniform)
                assert abs(got - want) <= 1e-9

    def test_single_common_view_reduces_to_weighted_pair_distance(self, rng):
        # only the side view is shared, so attention puts weight 1 on it
        a = make_embedding(rng, zero_views=(1, 3))  # front, side visible
        b = make_embedding(rng, zero_views=(0, 3))  # back, side visible
        want = FusionWeights().lambda1 * euclidean(a.global_vec, b.global_vec)
        want += FusionWeights().lambda2 * euclidean(a.locals_[2], b.locals_[2])
        assert abs(fused_distance(a, b) - want) <= 1e-9

    def test_lambda2_zero_skips_local_term(self, rng):
        a, b = make_embedding(rng), make_embedding(rng)
        got = fused_distance(a, b, FusionWeights(2.0, 0.0))
        assert got == 2.0 * euclidean(a.global_vec, b.global_vec)

    def test_self_distance_is_zero(self, rng):
        a = make_embedding(rng)
        assert fused_distance(a, a) == 0.0


class TestL2Normalized:
    def test_unit_norms_and_preserved_visibility(self, rng):
        e = l2_normalized(make_embedding(rng, zero_views=(3,)))
        assert abs(np.linalg.norm(e.global_vec) - 1.0) <= 1e-6
        for i in range(3):
            assert abs(np.linalg.norm(e.locals_[i]) - 1.0) <= 1e-6
        assert np.array_equal(e.locals_[3], np.zeros(8, dtype=np.float32))


class TestDistanceMatrix:
    def test_matches_scalar_oracle(self, rng):
        q = [make_embedding(rng) for _ in range(7)]
        g = [make_embedding(rng) for _ in range(11)]
        dm = distance_matrix(q, g, FusionWeights(1.0, 0.5))
        for i in range(7):
            for j in range(11):
                want = fused_distance(q[i], g[j])
                assert abs(float(dm.values[i, j]) - want) <= 1e-5

    def test_uniform_attention_matches_scalar_oracle(self, rng):
        q = [make_embedding(rng) for _ in range(5)]
        g = [make_embedding(rng) for _ in range(6)]
        dm = distance_matrix(q, g, uniform_attention=True)
        for i in range(5):
            for j in range(6):
                want = fused_distance(q[i], g[j], uniform=True)
                assert abs(float(dm.values[i, j]) - want) <= 1e-5

    def test_counts_degenerate_pairs(self, rng):
        q = [make_embedding(rng, zero_views=(2, 3)) for _ in range(3)]
        g = [make_embedding(rng, zero_views=(0, 1)) for _ in range(4)]
        g.append(make_embedding(rng))
        dm = distance_matrix(q, g)
        assert dm.degenerate_pairs == 12
        assert distance_matrix(q, g, uniform_attention=True).degenerate_pairs == 0

    def test_backends_agree(self, rng):
        q = [make_embedding(rng) for _ in range(6)]
        g = [make_embedding(rng) for _ in range(9)]
        qg, ql, qv = pack_embeddings(q)
        gg, gl, gv = pack_embeddings(g)
        a, da = _kernels._fused_matrix_numpy(
            *(x.astype(np.float64) for x in (qg, ql, qv, gg, gl, gv)), 1.0, 0.5, False
        )
        b, _ = _kernels.fused_matrix(qg, ql, qv, gg, gl, gv, 1.0, 0.5)
        assert np.allclose(a, b, atol=1e-5)

    def test_lambda2_zero_ignores_locals_bitwise(self, rng):
        q = [make_embedding(rng) for _ in range(4)]
        g = [make_embedding(rng) for _ in range(5)]
        q2 = [
            ViewEmbedding(e.global_vec, 3.0 * e.locals_, 2.0 * e.visibilities)
            for e in q
        ]
        g2 = [
            ViewEmbedding(e.global_vec, 3.0 * e.locals_, 2.0 * e.visibilities)
            for e in g
        ]
        w = FusionWeights(1.0, 0.0)
        a = distance_matrix(q, g, w)
        b = distance_matrix(q2, g2, w)
        assert a.values.tobytes() == b.values.tobytes()

    def test_thread_count_does_not_change_bytes(self, rng):
        q = [make_embedding(rng, dim=16) for _ in range(10)]
        g = [make_embedding(rng, dim=16) for _ in range(20)]
        a = distance_matrix(q, g, threads=1)
        b = distance_matrix(q, g, threads=8)
        assert a.values.tobytes() == b.values.tobytes()

    def test_carries_ids(self, rng):
        q = [make_embedding(rng)]
        g = [make_embedding(rng)]
        dm = distance_matrix(q, g, query_ids=["qa"], gallery_ids=["gb"])
        assert dm.query_ids == ("qa",) and dm.gallery_ids == ("gb",)

    def test_rejects_empty_and_mismatched(self, rng):
        with pytest.raises(EmptyInput):
            pack_embeddings([])
        with pytest.raises(DimensionMismatch):
            distance_matrix([make_embedding(rng, dim=4)], [make_embedding(rng, dim=5)])
