import logging

import numpy as np
import pytest
from scipy import linalg

from conftest import assert_non_increasing
from grople.dataset import synthetic_dataset
from grople.errors import DegenerateBasisError, DimensionError, PreconditionError, SingularUpdateError
from grople.grouping import GroupPartition
from grople.label_embed import (
    INIT_SCALE,
    apg_fit_group,
    block_row_masks,
    fit_label_embedding,
    l21_norm,
    lipschitz_constant,
    objective,
    row_shrinkage,
    smooth_gradient,
    update_basis,
)
from grople.solver import ApgSettings


def _signs(rng, shape):
    return rng.choice([-1.0, 1.0], size=shape)


def _orthonormal(rng, n, d):
    q, _ = np.linalg.qr(rng.standard_normal((n, d)))
    return q


# building blocks ---------------------------------------------------------------


def test_l21_norm():
    assert l21_norm(np.array([[3.0, 4.0], [0.0, 0.0], [1.0, 0.0]])) == pytest.approx(6.0)


def test_row_shrinkage_hand_values():
    out = row_shrinkage(np.array([[3.0, 4.0], [0.3, 0.4], [0.0, 0.0]]), 1.0)
    np.testing.assert_allclose(out, [[2.4, 3.2], [0.0, 0.0], [0.0, 0.0]])


def test_row_shrinkage_is_the_l21_prox(rng):
    M = rng.standard_normal((6, 4))
    t = 0.8
    P = row_shrinkage(M, t)

    def value(X):
        return 0.5 * np.sum((X - M) ** 2) + t * l21_norm(X)

    best = value(P)
    for _ in range(200):
        assert value(P + 0.05 * rng.standard_normal(P.shape)) >= best - 1e-12


def test_row_shrinkage_rejects_negative_threshold():
    with pytest.raises(PreconditionError):
        row_shrinkage(np.ones((2, 2)), -0.1)


@pytest.mark.parametrize("t", [0.5, 1.0])
@pytest.mark.parametrize("v", [2.0, -1.7, 0.3, -0.5, 0.0])
def test_row_shrinkage_matches_scalar_grid_minimum(v, t):
    grid = np.linspace(-3.0, 3.0, 10001)
    values = 0.5 * (grid - v) ** 2 + t * np.abs(grid)
    best = grid[np.argmin(values)]
    assert abs(row_shrinkage(np.array([[v]]), t)[0, 0] - best) < grid[1] - grid[0]


@pytest.mark.parametrize("v", [(2.0, 1.0), (-0.2, 0.3), (1.2, -1.5), (0.0, -2.5)])
def test_row_shrinkage_matches_planar_grid_minimum(v):
    t = 0.5
    axis = np.linspace(-3.0, 3.0, 101)
    a, b = np.meshgrid(axis, axis, indexing="ij")
    values = 0.5 * ((a - v[0]) ** 2 + (b - v[1]) ** 2) + t * np.hypot(a, b)
    i, j = np.unravel_index(np.argmin(values), values.shape)
    out = row_shrinkage(np.array([v]), t)[0]
    step = axis[1] - axis[0]
    assert abs(out[0] - a[i, j]) < step
    assert abs(out[1] - b[i, j]) < step


@pytest.mark.parametrize("seed", range(100))
def test_update_basis_is_stationary(seed):
    rng = np.random.default_rng(seed)
    n, d, n_labels = rng.integers(1, 13, size=3)
    Y, V = _signs(rng, (n, n_labels)), rng.standard_normal((d, n_labels))
    lam1 = rng.uniform(0.1, 1.0)
    U = update_basis(Y, V, lam1)
    grad = -2.0 * (Y - U @ V) @ V.T + 2.0 * lam1 * U
    assert np.linalg.norm(grad) < 1e-8 * (1.0 + np.linalg.norm(Y))


def test_update_basis_singular_without_ridge():
    with pytest.raises(SingularUpdateError):
        update_basis(np.ones((4, 2)), np.zeros((3, 2)), 0.0)


def test_update_basis_shape_mismatch():
    with pytest.raises(DimensionError):
        update_basis(np.ones((4, 2)), np.ones((3, 5)), 0.1)


@pytest.mark.parametrize("seed", range(50))
def test_smooth_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    U, Yk, Vk = rng.standard_normal((8, 3)), _signs(rng, (8, 2)), rng.standard_normal((3, 2))

    def f(V):
        return float(np.sum((Yk - U @ V) ** 2))

    grad = smooth_gradient(U, Yk, Vk)
    eps = 1e-6
    numeric = np.zeros_like(Vk)
    for idx in np.ndindex(Vk.shape):
        step = np.zeros_like(Vk)
        step[idx] = eps
        numeric[idx] = (f(Vk + step) - f(Vk - step)) / (2 * eps)
    np.testing.assert_allclose(grad, numeric, rtol=1e-6, atol=1e-6)


def test_lipschitz_constant(rng):
    U = rng.standard_normal((10, 4))
    assert lipschitz_constant(U) == pytest.approx(2.0 * np.linalg.norm(U.T @ U, "fro"))
    assert lipschitz_constant(U) >= 2.0 * np.linalg.eigvalsh(U.T @ U).max()


# per-group APG -------------------------------------------------------------------


def test_apg_without_penalty_is_least_squares(rng):
    U, Yk = rng.standard_normal((30, 4)), _signs(rng, (30, 3))
    V = apg_fit_group(U, Yk, 0.0, ApgSettings(max_iter=5000, tol=1e-12))
    expected = linalg.solve(U.T @ U, U.T @ Yk, assume_a="pos")
    np.testing.assert_allclose(V, expected, atol=1e-8)


def test_apg_with_orthonormal_basis_is_row_shrinkage(rng):
    U = _orthonormal(rng, 40, 5)
    Yk = _signs(rng, (40, 3))
    lam2 = 3.0
    V = apg_fit_group(U, Yk, lam2, ApgSettings(max_iter=5000, tol=1e-12))
    # with U^T U = I the problem separates into ||U^T Y - V||^2 + lam2 ||V||_21
    np.testing.assert_allclose(V, row_shrinkage(U.T @ Yk, lam2 / 2.0), atol=1e-6)


def test_apg_zeroes_rows_outside_the_signal(rng):
    U = _orthonormal(rng, 50, 6)
    Yk = np.outer(10.0 * U[:, 0], [1.0, 1.0, -1.0])
    V = apg_fit_group(U, Yk, 1.0, ApgSettings(max_iter=2000, tol=1e-12))
    norms = np.linalg.norm(V, axis=1)
    assert norms[0] > 1.0
    np.testing.assert_array_equal(norms[1:], 0.0)


def test_apg_start_defaults_to_least_squares(rng):
    U, Yk = rng.standard_normal((30, 4)), _signs(rng, (30, 3))
    one_step = ApgSettings(max_iter=1)
    plain = apg_fit_group(U, Yk, 0.5, one_step)
    np.testing.assert_array_equal(plain, apg_fit_group(U, Yk, 0.5, ApgSettings(max_iter=1, gamma=0.0)))
    np.testing.assert_array_equal(plain, apg_fit_group(U, Yk, 0.5, one_step, gamma=0.0))
    # settings.gamma wins over the keyword
    np.testing.assert_array_equal(
        apg_fit_group(U, Yk, 0.5, ApgSettings(max_iter=1, gamma=50.0), gamma=0.0),
        apg_fit_group(U, Yk, 0.5, one_step, gamma=50.0),
    )
    assert not np.allclose(plain, apg_fit_group(U, Yk, 0.5, one_step, gamma=50.0))


def test_fit_starts_each_group_from_the_lam1_ridge(rng):
    Y = _signs(rng, (30, 4))
    lam1 = 5.0
    one_step = ApgSettings(max_iter=1)
    model = fit_label_embedding(Y, GroupPartition.single(4), d=3, lam1=lam1, lam2=0.0,
                                settings=one_step, seed=2, max_outer=1)
    U0 = INIT_SCALE * np.random.default_rng(2).standard_normal((30, 3))
    expected = apg_fit_group(U0, Y, 0.0, ApgSettings(max_iter=1, gamma=lam1))
    np.testing.assert_allclose(model.V, expected)


def test_apg_rejects_zero_basis():
    with pytest.raises(DegenerateBasisError):
        apg_fit_group(np.zeros((5, 2)), np.ones((5, 2)), 1.0)


# full alternation --------------------------------------------------------------


def test_objective_sums_groups(rng):
    Y, U, V = _signs(rng, (10, 4)), rng.standard_normal((10, 2)), rng.standard_normal((2, 4))
    lam1, lam2 = 0.3, 0.7
    split = GroupPartition((0, 1, 0, 1), 2)
    expected = (
        np.sum((Y - U @ V) ** 2)
        + lam1 * np.sum(U * U)
        + lam2 * (l21_norm(V[:, [0, 2]]) + l21_norm(V[:, [1, 3]]))
    )
    assert objective(Y, split, U, V, lam1, lam2) == pytest.approx(expected)


def test_objective_checks_partition_size(rng):
    with pytest.raises(DimensionError):
        objective(np.ones((3, 4)), GroupPartition.single(3), np.ones((3, 2)), np.ones((2, 4)), 0.1, 0.1)


def test_exact_recovery_when_d_covers_the_labels(rng):
    Y = _signs(rng, (30, 3))
    model = fit_label_embedding(
        Y, GroupPartition.single(3), d=3, lam1=1e-8, lam2=1e-8,
        settings=ApgSettings(max_iter=2000, tol=1e-10), outer_tol=1e-12, max_outer=500,
    )
    assert np.linalg.norm(Y - model.reconstruct()) / np.linalg.norm(Y) < 1e-3
    np.testing.assert_array_equal(np.where(model.reconstruct() > 0, 1.0, -1.0), Y)


def test_exact_recovery_without_penalties(rng):
    Y = rng.standard_normal((30, 3)) @ rng.standard_normal((3, 10))
    model = fit_label_embedding(Y, GroupPartition.single(10), d=3, lam1=0.0, lam2=0.0)
    assert not model.collapsed
    assert np.linalg.norm(Y - model.reconstruct()) / np.linalg.norm(Y) < 1e-3


def test_two_groups_with_disjoint_factors_zero_different_rows():
    data = synthetic_dataset(n=300, n_features=20, n_labels=8, n_groups=2, seed=0)
    partition = GroupPartition((0, 0, 0, 0, 1, 1, 1, 1), 2)
    model = fit_label_embedding(data.Y, partition, d=20, lam1=0.001, lam2=1.0)
    assert not model.collapsed
    assert len(model.history) > 1
    first, second = block_row_masks(model.V, partition, threshold=0.0)
    assert first.any() and second.any()
    # some rows of each block are exactly zero, and not the same ones
    assert not first.all() and not second.all()
    assert not np.array_equal(first, second)


def test_objective_history_never_increases(rng):
    Y = _signs(rng, (40, 8))
    partition = GroupPartition((0, 0, 1, 1, 2, 2, 0, 1), 3)
    model = fit_label_embedding(Y, partition, d=5, lam1=0.01, lam2=0.5, max_outer=30, seed=1)
    assert len(model.history) >= 2
    assert_non_increasing(model.history)


def test_fit_is_deterministic(rng):
    Y = _signs(rng, (25, 6))
    partition = GroupPartition((0, 1, 0, 1, 0, 1), 2)
    a = fit_label_embedding(Y, partition, d=4, lam1=0.01, lam2=0.1, seed=5)
    b = fit_label_embedding(Y, partition, d=4, lam1=0.01, lam2=0.1, seed=5)
    np.testing.assert_array_equal(a.U, b.U)
    np.testing.assert_array_equal(a.V, b.V)


def test_threaded_groups_match_serial(rng):
    Y = _signs(rng, (25, 6))
    partition = GroupPartition((0, 1, 2, 0, 1, 2), 3)
    serial = fit_label_embedding(Y, partition, d=4, lam1=0.01, lam2=0.1, max_outer=5)
    threaded = fit_label_embedding(Y, partition, d=4, lam1=0.01, lam2=0.1, max_outer=5, workers=3)
    np.testing.assert_array_equal(serial.V, threaded.V)


def test_huge_sparsity_weight_collapses(rng, caplog):
    Y = _signs(rng, (20, 4))
    with caplog.at_level(logging.WARNING, logger="grople.label_embed"):
        model = fit_label_embedding(Y, GroupPartition.single(4), d=3, lam1=0.01, lam2=1e6)
    assert not np.any(model.V)
    assert not np.any(model.U)
    assert model.history == (pytest.approx(float(np.sum(Y * Y))),)
    assert "collapsed" in caplog.text


def test_block_row_masks(rng):
    V = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 2.0], [0.0, 1e-12, 0.0]])
    masks = block_row_masks(V, GroupPartition((0, 0, 1), 2))
    np.testing.assert_array_equal(masks[0], [True, False, False])
    np.testing.assert_array_equal(masks[1], [False, True, False])


def test_fit_validates_arguments(rng):
    Y = _signs(rng, (5, 3))
    with pytest.raises(PreconditionError):
        fit_label_embedding(Y, GroupPartition.single(3), d=0, lam1=0.1, lam2=0.1)
    with pytest.raises(DimensionError):
        fit_label_embedding(Y, GroupPartition.single(4), d=2, lam1=0.1, lam2=0.1)


# hand-evaluated cases ------------------------------------------------------------


def test_update_basis_hand_values():
    np.testing.assert_allclose(update_basis(np.array([[2.0]]), np.array([[1.0]]), 1.0), [[1.0]])
    Y = np.array([[1.0, -1.0], [-1.0, -1.0], [1.0, 1.0]])
    np.testing.assert_allclose(update_basis(Y, np.eye(2), 0.0), Y)


def test_lipschitz_hand_values():
    assert lipschitz_constant(np.eye(2)) == pytest.approx(2.0 * np.sqrt(2.0))
    assert lipschitz_constant(np.zeros((3, 2))) == 0.0


def test_smooth_gradient_hand_value():
    np.testing.assert_array_equal(smooth_gradient(np.array([[1.0]]), np.array([[1.0]]), np.array([[0.0]])), [[-2.0]])


def test_objective_hand_value():
    Y = np.array([[1.0, -1.0], [-1.0, 1.0]])
    U = np.array([[1.0], [-1.0]])
    V = np.array([[1.0, -1.0]])
    value = objective(Y, GroupPartition.single(2), U, V, 1.0, 1.0)
    assert value == pytest.approx(2.0 + np.sqrt(2.0))
    assert objective(Y, GroupPartition.single(2), np.zeros((2, 1)), np.zeros((1, 2)), 1.0, 1.0) == pytest.approx(4.0)
