"""Tests for the alternating-minimization solver and feature ranking."""

import dataclasses

import numpy as np
import pytest

from gfsel import (
    Hyperparameters,
    InvalidInputError,
    fit,
    objective,
    rank_features,
    reweight_d,
    reweight_q,
    update_w,
)
from gfsel.solver import ROW_NORM_FLOOR, l21_norm
from helpers import charpoly_eigenvalues, make_blobs


def _random_instance(rng, n=7, d=5, c=2):
    Xbar = rng.normal(size=(n, d))
    W, _ = np.linalg.qr(rng.normal(size=(d, c)))
    Z = np.abs(rng.normal(size=(n, n)))
    Z /= Z.sum(axis=1, keepdims=True)
    prior = np.abs(rng.normal(size=(n, n)))
    prior /= prior.sum(axis=1, keepdims=True)
    return Xbar, W, Z, prior


class TestObjective:
    def test_identity_z_kills_reconstruction_term(self):
        rng = np.random.default_rng(5)
        Xbar, W, _, prior = _random_instance(rng)
        alpha, lam = 1.3, 0.4
        value = objective(Xbar, W, np.eye(7), prior, alpha, lam)
        expected = alpha * np.sum((np.eye(7) - prior) ** 2) + lam * l21_norm(W)
        assert value == pytest.approx(expected, abs=1e-12)

    def test_z_equal_prior_kills_tether(self):
        rng = np.random.default_rng(7)
        Xbar, W, _, prior = _random_instance(rng)
        value = objective(Xbar, W, prior, prior, alpha=2.0, lam=0.0)
        projected = Xbar @ W
        expected = l21_norm(projected - prior @ projected)
        assert value == pytest.approx(expected, abs=1e-12)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(11)
        Xbar, W, Z, prior = _random_instance(rng, n=5, d=3, c=2)
        alpha, lam = 0.7, 1.9
        projected = Xbar @ W
        residual = projected - Z @ projected
        term1 = 0.0
        for i in range(residual.shape[0]):
            row = 0.0
            for j in range(residual.shape[1]):
                row += residual[i, j] ** 2
            term1 += row ** 0.5
        term2 = 0.0
        for i in range(5):
            for j in range(5):
                term2 += (Z[i, j] - prior[i, j]) ** 2
        term3 = 0.0
        for i in range(W.shape[0]):
            row = 0.0
            for j in range(W.shape[1]):
                row += W[i, j] ** 2
            term3 += row ** 0.5
        expected = term1 + alpha * term2 + lam * term3
        assert objective(Xbar, W, Z, prior, alpha, lam) == pytest.approx(expected, abs=1e-10)

    def test_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(13)
        Xbar, W, Z, prior = _random_instance(rng)
        with pytest.raises(InvalidInputError):
            objective(Xbar, W[:-1], Z, prior, 1.0, 1.0)


class TestUpdateW:
    def test_diagonal_problem_selects_smallest(self):
        # With P + lam*Q = diag(3, 1, 2) the single bottom eigenvector is e2.
        Xbar = np.zeros((2, 3))
        Z = np.zeros((2, 2))
        dvec = np.ones(2)
        qvec = np.array([3.0, 1.0, 2.0])
        W = update_w(Xbar, Z, dvec, qvec, lam=1.0, c=1)
        np.testing.assert_allclose(W, [[0.0], [1.0], [0.0]], atol=1e-12)

    def test_full_basis_preserves_trace(self):
        rng = np.random.default_rng(17)
        Xbar, _, Z, _ = _random_instance(rng, n=6, d=4)
        dvec = rng.uniform(0.5, 2.0, size=6)
        qvec = rng.uniform(0.5, 2.0, size=4)
        lam = 0.9
        W = update_w(Xbar, Z, dvec, qvec, lam, c=4)
        residual_map = Xbar - Z @ Xbar
        M = residual_map.T @ (dvec[:, None] * residual_map)
        M[np.diag_indices_from(M)] += lam * qvec
        assert np.trace(W.T @ M @ W) == pytest.approx(np.trace(M), rel=1e-10)
        np.testing.assert_allclose(W.T @ W, np.eye(4), atol=1e-8)

    def test_trace_matches_charpoly_eigenvalue_oracle(self):
        rng = np.random.default_rng(19)
        Xbar = rng.normal(size=(10, 8))
        Z = np.abs(rng.normal(size=(10, 10)))
        Z /= Z.sum(axis=1, keepdims=True)
        dvec = rng.uniform(0.2, 1.5, size=10)
        qvec = rng.uniform(0.2, 1.5, size=8)
        lam = 1.1
        W = update_w(Xbar, Z, dvec, qvec, lam, c=3)
        residual_map = Xbar - Z @ Xbar
        M = residual_map.T @ (dvec[:, None] * residual_map)
        M[np.diag_indices_from(M)] += lam * qvec
        M = 0.5 * (M + M.T)
        achieved = np.trace(W.T @ M @ W)
        oracle = charpoly_eigenvalues(M)[:3].sum()
        assert achieved == pytest.approx(oracle, abs=1e-8)

    def test_beats_random_orthonormal_competitors(self):
        rng = np.random.default_rng(23)
        Xbar = rng.normal(size=(9, 8))
        Z = np.abs(rng.normal(size=(9, 9)))
        Z /= Z.sum(axis=1, keepdims=True)
        dvec = rng.uniform(0.2, 1.5, size=9)
        qvec = rng.uniform(0.2, 1.5, size=8)
        W = update_w(Xbar, Z, dvec, qvec, lam=0.8, c=3)
        residual_map = Xbar - Z @ Xbar
        M = residual_map.T @ (dvec[:, None] * residual_map)
        M[np.diag_indices_from(M)] += 0.8 * qvec
        achieved = np.trace(W.T @ M @ W)
        for _ in range(1000):
            V, _ = np.linalg.qr(rng.normal(size=(8, 3)))
            assert achieved <= np.trace(V.T @ M @ V) + 1e-10

    def test_sign_convention(self):
        rng = np.random.default_rng(29)
        Xbar, _, Z, _ = _random_instance(rng, n=8, d=6)
        dvec = rng.uniform(0.5, 2.0, size=8)
        qvec = rng.uniform(0.5, 2.0, size=6)
        W = update_w(Xbar, Z, dvec, qvec, lam=1.0, c=3)
        for col in range(3):
            lead = np.argmax(np.abs(W[:, col]))
            assert W[lead, col] > 0

    def test_too_many_columns_rejected(self):
        with pytest.raises(InvalidInputError):
            update_w(np.zeros((4, 3)), np.zeros((4, 4)), np.ones(4), np.ones(3), 1.0, c=4)

    def test_nonpositive_weights_rejected(self):
        with pytest.raises(InvalidInputError):
            update_w(np.zeros((4, 3)), np.zeros((4, 4)), np.zeros(4), np.ones(3), 1.0, c=2)


class TestReweighting:
    def test_zero_residual_hits_guard(self):
        rng = np.random.default_rng(31)
        Xbar = rng.normal(size=(5, 4))
        W, _ = np.linalg.qr(rng.normal(size=(4, 2)))
        dvec = reweight_d(Xbar, W, np.eye(5))
        np.testing.assert_allclose(dvec, np.full(5, 5e7))

    def test_half_residual_gives_unit_weight(self):
        # A single residual row of norm 0.5 maps to weight 1.
        Xbar = np.array([[0.5, 0.0], [1.0, 0.0]])
        W = np.eye(2)
        Z = np.array([[0.0, 0.0], [0.0, 1.0]])
        dvec = reweight_d(Xbar, W, Z)
        assert dvec[0] == pytest.approx(1.0)

    def test_reweighted_quadratic_recovers_row_norms(self):
        # 2 * D_ii * r_i^2 == r_i whenever the guard is inactive.
        rng = np.random.default_rng(37)
        Xbar, W, Z, _ = _random_instance(rng)
        projected = Xbar @ W
        residual_norms = np.linalg.norm(projected - Z @ projected, axis=1)
        dvec = reweight_d(Xbar, W, Z)
        np.testing.assert_allclose(2.0 * dvec * residual_norms**2, residual_norms, atol=1e-10)

    def test_zero_row_hits_guard(self):
        W = np.array([[0.0, 0.0], [1.0, 0.0]])
        qvec = reweight_q(W)
        assert qvec[0] == pytest.approx(1.0 / (2 * ROW_NORM_FLOOR))

    def test_three_four_five_row(self):
        assert reweight_q(np.array([[3.0, 4.0]]))[0] == pytest.approx(0.1)

    def test_quadratic_trace_is_half_row_norm_sum(self):
        rng = np.random.default_rng(41)
        W = rng.normal(size=(6, 3))
        qvec = reweight_q(W)
        quadratic = np.trace(W.T @ np.diag(qvec) @ W)
        assert quadratic == pytest.approx(0.5 * l21_norm(W), abs=1e-10)


@pytest.fixture(scope="module")
def small_blobs():
    return make_blobs(0, n_per=15, informative=4, noise=8, scale=3.0)


class TestFit:
    def test_deterministic_per_seed(self, small_blobs):
        X, _ = small_blobs
        params = Hyperparameters(clusters=3, k=4, seed=123, max_outer_iters=8)
        first = fit(X, params)
        second = fit(X, params)
        assert np.array_equal(first.W, second.W)
        assert np.array_equal(first.Z, second.Z)
        assert first.objective_history == second.objective_history
        assert first.iterations == second.iterations

    def test_converges_on_blobs(self, small_blobs):
        X, _ = small_blobs
        result = fit(X, Hyperparameters(clusters=3, k=4, seed=1))
        assert result.converged
        assert result.iterations <= 50

    def test_monotone_descent(self, small_blobs):
        X, _ = small_blobs
        result = fit(X, Hyperparameters(clusters=3, k=4, seed=2))
        history = np.asarray(result.objective_history)
        assert np.all(np.diff(history) <= 1e-6 * np.abs(history[:-1]))

    def test_constraints_hold_every_iteration(self, small_blobs):
        X, _ = small_blobs
        result = fit(X, Hyperparameters(clusters=3, k=4, seed=3))
        for stats in result.constraint_trace:
            assert stats.orthonormality_error <= 1e-8
            assert stats.z_min >= -1e-10
            assert stats.z_row_sum_error <= 1e-6

    def test_degenerate_weights_keep_constraints(self, small_blobs):
        # alpha = lam = 0: feasibility comes from construction, not penalties.
        X, _ = small_blobs
        result = fit(X, Hyperparameters(clusters=2, alpha=0.0, lam=0.0, k=4, seed=4))
        np.testing.assert_allclose(result.W.T @ result.W, np.eye(2), atol=1e-8)
        assert result.Z.min() >= -1e-10
        np.testing.assert_allclose(result.Z.sum(axis=1), np.ones(X.shape[0]), atol=1e-6)

    def test_random_z_init_keeps_contract(self, small_blobs):
        X, _ = small_blobs
        params = Hyperparameters(clusters=3, k=4, seed=5, z_init="random", max_outer_iters=10)
        result = fit(X, params)
        history = np.asarray(result.objective_history)
        assert np.all(np.diff(history) <= 1e-6 * np.abs(history[:-1]))
        assert result.Z.min() >= -1e-10

    def test_history_includes_initial_value(self, small_blobs):
        X, _ = small_blobs
        result = fit(X, Hyperparameters(clusters=3, k=4, seed=6, max_outer_iters=5))
        assert len(result.objective_history) == result.iterations + 1

    def test_majorization_touches_objective(self, small_blobs):
        # With D, Q frozen at (W, Z), the weighted quadratic equals half the
        # row-norm sums whenever no row hits the guard.
        rng = np.random.default_rng(43)
        X, _ = small_blobs
        n, d = X.shape
        W, _ = np.linalg.qr(rng.normal(size=(d, 3)))
        Z = np.abs(rng.normal(size=(n, n)))
        Z /= Z.sum(axis=1, keepdims=True)
        dvec = reweight_d(X, W, Z)
        qvec = reweight_q(W)
        projected = X @ W
        residual = projected - Z @ projected
        quadratic = np.trace(residual.T @ np.diag(dvec) @ residual) + np.trace(
            W.T @ np.diag(qvec) @ W
        )
        assert quadratic == pytest.approx(0.5 * l21_norm(residual) + 0.5 * l21_norm(W), rel=1e-9)

    def test_cluster_count_validation(self, small_blobs):
        X, _ = small_blobs
        with pytest.raises(InvalidInputError):
            fit(X, Hyperparameters(clusters=X.shape[1] + 1, k=4))

    def test_neighbour_count_validation(self):
        X = np.random.default_rng(0).normal(size=(5, 3))
        with pytest.raises(InvalidInputError):
            fit(X, Hyperparameters(clusters=2, k=5))

    def test_nonfinite_data_rejected(self):
        X = np.full((6, 3), np.nan)
        with pytest.raises(InvalidInputError):
            fit(X, Hyperparameters(clusters=2, k=2))


class TestHyperparameters:
    def test_negative_weights_rejected(self):
        with pytest.raises(InvalidInputError):
            Hyperparameters(clusters=2, alpha=-0.1)
        with pytest.raises(InvalidInputError):
            Hyperparameters(clusters=2, lam=-0.1)

    def test_bad_mode_rejected(self):
        with pytest.raises(InvalidInputError):
            Hyperparameters(clusters=2, z_init="zeros")

    def test_replace_makes_grid_cells(self):
        base = Hyperparameters(clusters=3)
        cell = dataclasses.replace(base, alpha=0.01, lam=100.0)
        assert cell.alpha == 0.01 and cell.lam == 100.0 and cell.clusters == 3


class TestRankFeatures:
    def test_hand_ordering(self):
        W = np.diag([3.0, 1.0, 2.0])
        ranking = rank_features(W)
        np.testing.assert_array_equal(ranking.order, [0, 2, 1])
        np.testing.assert_allclose(ranking.scores, [3.0, 1.0, 2.0])

    def test_ties_keep_index_order(self):
        ranking = rank_features(np.ones((4, 2)))
        np.testing.assert_array_equal(ranking.order, [0, 1, 2, 3])

    def test_matches_resort_oracle(self):
        rng = np.random.default_rng(47)
        W = rng.normal(size=(12, 3))
        ranking = rank_features(W)
        norms = [float(np.sqrt(np.sum(row**2))) for row in W]
        expected = sorted(range(12), key=lambda i: (-norms[i], i))
        np.testing.assert_array_equal(ranking.order, expected)

    def test_invariant_under_column_sign_flips(self):
        rng = np.random.default_rng(53)
        W = rng.normal(size=(9, 4))
        flipped = W * np.array([1.0, -1.0, -1.0, 1.0])
        np.testing.assert_array_equal(rank_features(W).order, rank_features(flipped).order)
