import numpy as np
import pytest

from grople.errors import InsufficientDataError, PreconditionError
from grople.feature_embed import (
    FeatureGram,
    correlation_penalty,
    feature_objective,
    feature_smooth_gradient,
    fit_feature_map,
    soft_threshold,
)
from grople.solver import ApgSettings

TIGHT = ApgSettings(max_iter=10000, tol=1e-12)


def test_soft_threshold_hand_values():
    np.testing.assert_array_equal(soft_threshold(np.array([3.0, -0.5, -2.0, 1.0]), 1.0), [2.0, 0.0, -1.0, 0.0])


def test_soft_threshold_is_the_l1_prox(rng):
    M = rng.standard_normal((5, 3))
    t = 0.4
    P = soft_threshold(M, t)

    def value(Z):
        return 0.5 * np.sum((Z - M) ** 2) + t * np.sum(np.abs(Z))

    for _ in range(200):
        assert value(P + 0.05 * rng.standard_normal(P.shape)) >= value(P) - 1e-12


@pytest.mark.parametrize("v", [1.5, -0.2, 0.4, -2.6, 0.0])
def test_soft_threshold_matches_scalar_grid_minimum(v):
    t = 0.4
    grid = np.linspace(-3.0, 3.0, 10001)
    best = grid[np.argmin(0.5 * (grid - v) ** 2 + t * np.abs(grid))]
    assert abs(soft_threshold(np.array([v]), t)[0] - best) < grid[1] - grid[0]


@pytest.mark.parametrize("v", [(1.5, -0.2), (0.3, 0.35), (-2.0, 2.5)])
def test_soft_threshold_matches_planar_grid_minimum(v):
    t = 0.4
    axis = np.linspace(-3.0, 3.0, 101)
    a, b = np.meshgrid(axis, axis, indexing="ij")
    values = 0.5 * ((a - v[0]) ** 2 + (b - v[1]) ** 2) + t * (np.abs(a) + np.abs(b))
    i, j = np.unravel_index(np.argmin(values), values.shape)
    out = soft_threshold(np.array(v), t)
    step = axis[1] - axis[0]
    assert abs(out[0] - a[i, j]) < step
    assert abs(out[1] - b[i, j]) < step


def test_soft_threshold_rejects_negative():
    with pytest.raises(PreconditionError):
        soft_threshold(np.ones(2), -1.0)


# correlation penalty -------------------------------------------------------------


def test_penalty_of_perfectly_correlated_columns(rng):
    u = rng.standard_normal(12)
    R = correlation_penalty(np.column_stack([u, 2.0 * u + 1.0, -u]))
    np.testing.assert_allclose(R, [[0, 0, 2], [0, 0, 2], [2, 2, 0]], atol=1e-12)


def test_penalty_properties(rng):
    R = correlation_penalty(rng.standard_normal((30, 6)))
    assert np.array_equal(R, R.T)
    np.testing.assert_array_equal(np.diag(R), 0.0)
    assert np.all(R >= 0) and np.all(R <= 2)


def test_constant_column_is_uncorrelated(rng):
    U = np.column_stack([rng.standard_normal(10), np.full(10, 3.0)])
    np.testing.assert_allclose(correlation_penalty(U), [[0.0, 1.0], [1.0, 0.0]])


def test_penalty_needs_two_rows():
    with pytest.raises(InsufficientDataError):
        correlation_penalty(np.ones((1, 3)))


# objective and gradient ------------------------------------------------------------


def test_correlation_term_is_pairwise_column_coupling(rng):
    Z = rng.standard_normal((5, 4))
    R = correlation_penalty(rng.standard_normal((20, 4)))
    pairwise = sum(R[i, j] * Z[:, i] @ Z[:, j] for i in range(4) for j in range(4))
    assert pairwise == pytest.approx(np.trace(R @ Z.T @ Z))

    X, U = rng.standard_normal((20, 5)), rng.standard_normal((20, 4))
    coupling = feature_objective(X, U, Z, R, 1.0, 0.0) - feature_objective(X, U, Z, R, 0.0, 0.0)
    assert coupling == pytest.approx(pairwise)


@pytest.mark.parametrize("seed", range(50))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X, U = rng.standard_normal((15, 4)), rng.standard_normal((15, 3))
    Z = rng.standard_normal((4, 3))
    R = correlation_penalty(rng.standard_normal((15, 3)))
    alpha = 0.7

    grad = feature_smooth_gradient(X, U, Z, R, alpha)
    eps = 1e-6
    numeric = np.zeros_like(Z)
    for idx in np.ndindex(Z.shape):
        step = np.zeros_like(Z)
        step[idx] = eps
        numeric[idx] = (
            feature_objective(X, U, Z + step, R, alpha, 0.0) - feature_objective(X, U, Z - step, R, alpha, 0.0)
        ) / (2 * eps)
    np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-5)


# fitting ---------------------------------------------------------------------------


def test_unpenalized_fit_is_least_squares(rng):
    X, U = rng.standard_normal((50, 5)), rng.standard_normal((50, 3))
    feature_map = fit_feature_map(X, U, alpha=0.0, beta=0.0, settings=TIGHT)
    expected = np.linalg.lstsq(X, U, rcond=None)[0]
    np.testing.assert_allclose(feature_map.Z, expected, atol=1e-6)


def test_large_l1_weight_zeroes_the_map(rng):
    X, U = rng.standard_normal((20, 4)), rng.standard_normal((20, 2))
    feature_map = fit_feature_map(X, U, alpha=0.1, beta=1e6)
    np.testing.assert_array_equal(feature_map.Z, 0.0)
    assert feature_map.n_zero == feature_map.Z.size


def test_l1_weight_increases_sparsity(rng):
    X, U = rng.standard_normal((40, 8)), rng.standard_normal((40, 3))
    light = fit_feature_map(X, U, alpha=0.1, beta=0.01)
    heavy = fit_feature_map(X, U, alpha=0.1, beta=50.0)
    assert heavy.n_zero > light.n_zero
    assert heavy.n_zero == heavy.recount_zeros()


def test_fit_lowers_the_objective_below_zero_map(rng):
    X, U = rng.standard_normal((30, 6)), rng.standard_normal((30, 4))
    feature_map = fit_feature_map(X, U, alpha=0.5, beta=0.5)
    R = feature_map.R
    assert feature_objective(X, U, feature_map.Z, R, 0.5, 0.5) < feature_objective(
        X, U, np.zeros_like(feature_map.Z), R, 0.5, 0.5
    )


def test_zero_features_give_zero_map():
    feature_map = fit_feature_map(np.zeros((6, 3)), np.ones((6, 2)) * np.arange(6)[:, None], alpha=0.0, beta=0.1)
    np.testing.assert_array_equal(feature_map.Z, np.zeros((3, 2)))


def test_precomputed_gram_gives_identical_fit(rng):
    X, U = rng.standard_normal((25, 5)), rng.standard_normal((25, 3))
    plain = fit_feature_map(X, U, alpha=0.2, beta=0.3)
    cached = fit_feature_map(X, U, alpha=0.2, beta=0.3, gram=FeatureGram.build(X, U))
    np.testing.assert_array_equal(plain.Z, cached.Z)


def test_zero_penalty_matrix_ignores_alpha(rng):
    X, U = rng.standard_normal((30, 6)), rng.standard_normal((30, 3))
    R = np.zeros((3, 3))
    base = fit_feature_map(X, U, alpha=0.0, beta=0.2, R=R)
    for alpha in (0.1, 1.0, 100.0):
        np.testing.assert_array_equal(fit_feature_map(X, U, alpha=alpha, beta=0.2, R=R).Z, base.Z)


def test_negative_weights_rejected(rng):
    with pytest.raises(PreconditionError):
        fit_feature_map(np.ones((3, 2)), np.ones((3, 2)), alpha=-1.0, beta=0.0)


def test_gradient_hand_value():
    one = np.array([[1.0]])
    np.testing.assert_array_equal(feature_smooth_gradient(one, one, np.array([[0.0]]), np.zeros((1, 1)), 0.0), [[-2.0]])
