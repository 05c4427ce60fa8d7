import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from geoembed.embedding import (Embedding, cascade_objective, cascade_round, embed_distance,
                                euclidean_embed, geodesic_embedding, landmark_mds,
                                mean_pair_error, pair_weights, residuals, weighted_objective)
from geoembed.evaluation import PairSample, mean_relative_error
from geoembed.geodesic import ssad_reference
from geoembed.optim import SolverOptions


def central_difference(f, x, h=1e-6):
    g = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


class TestEmbedDistance:
    def test_pure_euclidean(self):
        p = (np.array([0.0, 0.0]), np.zeros(3), np.zeros(3))
        q = (np.array([3.0, 4.0]), np.zeros(3), np.zeros(3))
        assert embed_distance(p, q) == 5.0

    def test_s_block_subtracts(self):
        p = (np.array([0.0]), np.array([0.0]), np.array([0.0]))
        q = (np.array([3.0]), np.array([1.0]), np.array([0.0]))
        assert embed_distance(p, q) == 2.0

    def test_t_block_adds(self):
        p = (np.array([1.0]), np.array([0.5]), np.array([0.0]))
        q = (np.array([1.0]), np.array([0.5]), np.array([2.0]))
        assert embed_distance(p, q) == 4.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            embed_distance((np.zeros(2), np.zeros(1), np.zeros(1)),
                           (np.zeros(3), np.zeros(1), np.zeros(1)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_symmetric_and_zero_on_diagonal(self, seed):
        rng = np.random.default_rng(seed)
        p = tuple(rng.normal(size=k) for k in (4, 3, 3))
        q = tuple(rng.normal(size=k) for k in (4, 3, 3))
        assert embed_distance(p, q) == embed_distance(q, p)
        assert embed_distance(p, p) == 0.0


class TestResiduals:
    def test_arithmetic(self):
        D = np.array([[0, 2.0], [2.0, 0]])
        R = residuals(D, np.array([[0.0], [3.0]]))
        assert R[0, 1] == 1.0 and R[1, 0] == 1.0

    def test_negative_when_underestimating(self):
        D = np.array([[0, 5.0], [5.0, 0]])
        assert residuals(D, np.array([[0.0], [3.0]]))[0, 1] == -2.0

    def test_perfect_embedding(self):
        P = np.random.default_rng(0).normal(size=(10, 3))
        R = residuals(cdist(P, P), P)
        assert np.abs(R).max() < 1e-12

    def test_includes_cascade_columns(self):
        D = np.array([[0, 2.0], [2.0, 0]])
        R = residuals(D, np.array([[0.0], [3.0]]), S=np.array([[0.0], [1.0]]), T=np.zeros((2, 1)))
        assert R[0, 1] == 0.0


class TestCascadeRound:
    def test_zero_residual(self):
        R = np.zeros((4, 4))
        W = np.ones((4, 4)) - np.eye(4)
        rr = cascade_round(R, W, delta=1e-3, rng=np.random.default_rng(0))
        assert rr.objective < 1e-20
        assert np.ptp(rr.s) < 1e-4 and np.ptp(rr.t) < 1e-4

    def test_positive_residual_uses_s(self):
        R = np.array([[0, 1.0], [1.0, 0]])
        W = np.array([[0, 1.0], [1.0, 0]])
        rr = cascade_round(R, W, delta=1e-3, rng=np.random.default_rng(1))
        a2 = (rr.s[0] - rr.s[1]) ** 2
        b2 = (rr.t[0] - rr.t[1]) ** 2
        # the minimisers form the hyperbola a2 - b2 = r; s carries the sign
        assert rr.objective < 1e-12
        assert a2 - b2 == pytest.approx(1.0, abs=1e-6)
        assert a2 >= 1.0 - 1e-6

    def test_negative_residual_uses_t(self):
        R = np.array([[0, -1.0], [-1.0, 0]])
        W = np.array([[0, 1.0], [1.0, 0]])
        rr = cascade_round(R, W, delta=1e-3, rng=np.random.default_rng(2))
        a2 = (rr.s[0] - rr.s[1]) ** 2
        b2 = (rr.t[0] - rr.t[1]) ** 2
        assert rr.objective < 1e-12
        assert b2 - a2 == pytest.approx(1.0, abs=1e-6)
        assert b2 >= 1.0 - 1e-6

    def test_never_worse_than_zero_columns(self):
        rng = np.random.default_rng(3)
        A = rng.normal(size=(12, 12))
        R = A + A.T
        np.fill_diagonal(R, 0)
        W = np.ones((12, 12)) - np.eye(12)
        rr = cascade_round(R, W, SolverOptions(max_iterations=3), rng=rng)
        assert rr.objective <= rr.incoming

    def test_failed_round_is_reset(self):
        R = np.array([[0, 1.0], [1.0, 0]])
        W = np.array([[0, 1.0], [1.0, 0]])
        # a huge start overshoots and zero iterations leave it there
        rr = cascade_round(R, W, SolverOptions(max_iterations=0), delta=10.0,
                           rng=np.random.default_rng(0))
        assert rr.reset
        assert np.all(rr.s == 0) and np.all(rr.t == 0)
        assert rr.objective == rr.incoming

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(4)
        n = 7
        A = rng.normal(size=(n, n))
        R = A + A.T
        np.fill_diagonal(R, 0)
        W = rng.uniform(0.1, 2, (n, n))
        W = W + W.T
        np.fill_diagonal(W, 0)
        worst = 0.0
        for _ in range(100):
            x = rng.normal(size=2 * n)
            _, g = cascade_objective(x, R, W)
            fd = central_difference(lambda z: cascade_objective(z, R, W)[0], x)
            worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
        assert worst <= 1e-4

    def test_objective_matches_definition(self):
        rng = np.random.default_rng(5)
        n = 6
        A = rng.normal(size=(n, n))
        R = A + A.T
        W = np.abs(A + A.T)
        np.fill_diagonal(W, 0)
        x = rng.normal(size=2 * n)
        s, t = x[:n], x[n:]
        E = (s[:, None] - s) ** 2 - (t[:, None] - t) ** 2 - R
        iu = np.triu_indices(n, 1)
        assert cascade_objective(x, R, W)[0] == pytest.approx(np.sum(W[iu] * E[iu] ** 2), rel=1e-12)


class TestEuclidean:
    def test_realizable_metric(self):
        P = np.random.default_rng(6).normal(size=(40, 3))
        res = euclidean_embed(cdist(P, P), 3, SolverOptions(max_iterations=3000))
        assert res.error < 1e-6

    def test_landmark_mds_exact_for_euclidean_input(self):
        P = np.random.default_rng(7).normal(size=(60, 2))
        D = cdist(P, P)
        X = landmark_mds(D, 2, n_landmarks=20)
        np.testing.assert_allclose(cdist(X, X), D, atol=1e-8)

    def test_weights(self):
        D = np.array([[0, 2.0, 1e-12], [2.0, 0, 1.0], [1e-12, 1.0, 0]])
        W = pair_weights(D, scale=1.0)
        assert W[0, 1] == 0.25 and W[0, 2] == 1e12 and np.all(np.diag(W) == 0)

    def test_warm_start_pads_columns(self, small_pipeline):
        D = small_pipeline.D
        W = pair_weights(D, small_pipeline.mesh.scale)
        e3 = euclidean_embed(D, 3, W=W, scale=small_pipeline.mesh.scale)
        e8 = euclidean_embed(D, 8, W=W, init=e3.Q, scale=small_pipeline.mesh.scale)
        assert e8.Q.shape == (len(D), 8)
        assert e8.stress <= e3.stress

    def test_init_validation(self):
        D = cdist(np.eye(4), np.eye(4))
        with pytest.raises(ValueError):
            euclidean_embed(D, 2, init=np.zeros((4, 3)))


class TestPipeline:
    def test_ground_truth(self, small_pipeline):
        D = small_pipeline.D
        assert np.all(np.diag(D) == 0)
        np.testing.assert_array_equal(D, D.T)
        saddles = small_pipeline.classification.saddle_set
        for i in (0, len(saddles) // 2):
            ref = ssad_reference(small_pipeline.mesh, saddles[i], 8).distances[saddles]
            assert np.all(D[i] <= ref * (1 + 1e-9))
            assert np.all(ref <= D[i] * 1.05 + 1e-12)

    def test_shapes_and_history(self, small_pipeline):
        emb = small_pipeline.embedding
        N = small_pipeline.classification.n_saddles
        assert emb.euclidean.shape == (N, 8)
        assert emb.s_block.shape == emb.t_block.shape == (N, 6)
        assert emb.dimension == 8 + 12
        assert len(emb.objective_history) == 7
        assert np.all(np.diff(emb.objective_history) <= 0)
        assert emb.error_history[-1] < emb.error_history[0]

    def test_recorded_values_match_embedding(self, small_pipeline):
        emb, D = small_pipeline.embedding, small_pipeline.D
        W = pair_weights(D, small_pipeline.mesh.scale)
        for p in (0, 3, 6):
            F = emb.distance_matrix(p)
            assert weighted_objective(F, D, W) == pytest.approx(emb.objective_history[p], rel=1e-9)
            assert mean_pair_error(F, D) == pytest.approx(emb.error_history[p], rel=1e-9)

    def test_error_matches_evaluation_module(self, small_pipeline):
        emb, D = small_pipeline.embedding, small_pipeline.D
        iu = np.triu_indices(len(D), 1)
        F = emb.distance_matrix()
        report = mean_relative_error(PairSample(np.column_stack(iu), 0), F[iu], D[iu])
        assert abs(report.mean_relative_error - emb.error_history[-1]) <= 1e-12

    def test_zero_rounds_is_euclidean_stage(self, small_pipeline):
        mesh, cls, D = small_pipeline.mesh, small_pipeline.classification, small_pipeline.D
        emb = geodesic_embedding(mesh, cls, m=8, l=0, D=D)
        eu = euclidean_embed(D, 8, W=pair_weights(D, mesh.scale), scale=mesh.scale)
        np.testing.assert_array_equal(emb.euclidean, eu.Q)
        assert emb.l == 0 and len(emb.objective_history) == 1

    def test_deterministic(self, small_pipeline):
        mesh, cls, D = small_pipeline.mesh, small_pipeline.classification, small_pipeline.D
        a = geodesic_embedding(mesh, cls, m=4, l=2, D=D)
        b = geodesic_embedding(mesh, cls, m=4, l=2, D=D)
        np.testing.assert_array_equal(a.s_block, b.s_block)
        np.testing.assert_array_equal(a.euclidean, b.euclidean)

    def test_prefix_of_longer_run(self, small_pipeline):
        mesh, cls, D = small_pipeline.mesh, small_pipeline.classification, small_pipeline.D
        short = geodesic_embedding(mesh, cls, m=8, l=3, D=D)
        np.testing.assert_array_equal(short.s_block, small_pipeline.embedding.s_block[:, :3])
        np.testing.assert_array_equal(short.objective_history,
                                      small_pipeline.embedding.objective_history[:4])

    def test_metadata(self, small_pipeline):
        md = small_pipeline.embedding.metadata
        assert md["weight_floor"] == pytest.approx(1e-6 * small_pipeline.mesh.scale)
        assert md["cascade_init_halfwidth"] == pytest.approx(1e-3 * math.sqrt(small_pipeline.mesh.scale))
        assert md["m"] == 8 and md["l"] == 6

    def test_truncated(self, small_pipeline):
        emb = small_pipeline.embedding.truncated(2)
        assert emb.l == 2
        np.testing.assert_array_equal(emb.distance_matrix(), small_pipeline.embedding.distance_matrix(2))
        with pytest.raises(ValueError):
            small_pipeline.embedding.truncated(7)

    def test_invalid_arguments(self, small_pipeline):
        mesh, cls, D = small_pipeline.mesh, small_pipeline.classification, small_pipeline.D
        with pytest.raises(ValueError):
            geodesic_embedding(mesh, cls, m=0, l=1, D=D)
        with pytest.raises(ValueError):
            geodesic_embedding(mesh, cls, m=2, l=-1, D=D)
        with pytest.raises(ValueError):
            geodesic_embedding(mesh, cls, m=2, l=1, D=D[:-1, :-1])

    def test_embedding_validation(self):
        with pytest.raises(ValueError):
            Embedding(np.zeros((3, 2)), np.zeros((3, 1)), np.zeros((3, 2)), np.arange(3),
                      np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError):
            Embedding(np.zeros((3, 2)), np.zeros((3, 1)), np.zeros((3, 1)), np.arange(3),
                      np.zeros(3), np.zeros(2))
