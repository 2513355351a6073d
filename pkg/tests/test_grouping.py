import logging
import math

import numpy as np
import pytest

from grople.errors import PreconditionError, TooFewLabelsError
from grople.grouping import (
    GroupPartition,
    canonical_relabel,
    group_labels,
    kmeans_assign,
    normalized_affinity,
    partitions_equivalent,
    self_tuning_affinity,
    spectral_embedding,
)


def _blocky_labels(rng, n=40, blocks=(4, 3, 5), flips=2):
    """Columns that are noisy copies of one prototype per block."""
    columns = []
    for size in blocks:
        prototype = rng.choice([-1.0, 1.0], size=n)
        for _ in range(size):
            col = prototype.copy()
            col[rng.choice(n, size=flips, replace=False)] *= -1
            columns.append(col)
    return np.column_stack(columns)


# affinity --------------------------------------------------------------------


def test_identical_columns_have_unit_affinity(rng):
    y = rng.choice([-1.0, 1.0], size=10)
    Y = np.column_stack([y, y, -y])
    A = self_tuning_affinity(Y, nn=1).A
    assert A[0, 1] == 1.0
    np.testing.assert_array_equal(np.diag(A), 1.0)


def test_kernel_hand_value():
    Y = np.array([[0.0, 1.0], [0.0, 0.0]])
    affinity = self_tuning_affinity(Y, nn=1)
    np.testing.assert_array_equal(affinity.scales, [1.0, 1.0])
    assert affinity.A[0, 1] == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_all_identical_columns_give_all_ones():
    affinity = self_tuning_affinity(np.ones((5, 4)), nn=2)
    np.testing.assert_array_equal(affinity.scales, 1.0)
    np.testing.assert_array_equal(affinity.A, np.ones((4, 4)))


def test_affinity_is_exactly_symmetric_in_unit_interval(rng):
    Y = rng.choice([-1.0, 1.0], size=(30, 9))
    A = self_tuning_affinity(Y).A
    assert np.array_equal(A, A.T)
    assert np.all(A > 0) and np.all(A <= 1)


def test_affinity_needs_two_labels():
    with pytest.raises(TooFewLabelsError):
        self_tuning_affinity(np.ones((5, 1)))


def test_neighbor_order_is_clamped(rng, caplog):
    Y = rng.choice([-1.0, 1.0], size=(12, 3))
    with caplog.at_level(logging.WARNING, logger="grople.grouping"):
        clamped = self_tuning_affinity(Y, nn=7)
    np.testing.assert_array_equal(clamped.A, self_tuning_affinity(Y, nn=2).A)
    assert "clamping" in caplog.text
    with pytest.raises(PreconditionError):
        self_tuning_affinity(Y, nn=0)


# normalization -----------------------------------------------------------------


@pytest.mark.parametrize(
    "A,expected",
    [
        ([[0.0, 1.0], [1.0, 0.0]], [[0.0, 1.0], [1.0, 0.0]]),
        ([[0.0, 4.0], [4.0, 0.0]], [[0.0, 1.0], [1.0, 0.0]]),
        (np.eye(3), np.eye(3)),
    ],
)
def test_normalized_affinity_examples(A, expected):
    np.testing.assert_allclose(normalized_affinity(np.asarray(A)), expected, atol=1e-15)


def test_normalized_spectral_radius(rng):
    M = normalized_affinity(self_tuning_affinity(rng.choice([-1.0, 1.0], size=(25, 10))))
    assert np.array_equal(M, M.T)
    assert np.max(np.abs(np.linalg.eigvalsh(M))) <= 1 + 1e-8


# embedding ---------------------------------------------------------------------


def test_embedding_of_identity_has_unit_rows():
    E = spectral_embedding(np.eye(4), 4)
    np.testing.assert_allclose(np.linalg.norm(E, axis=1), 1.0)


def test_embedding_of_two_blocks():
    block = np.ones((2, 2))
    A = np.block([[block, np.zeros((2, 2))], [np.zeros((2, 2)), block]])
    E = spectral_embedding(normalized_affinity(A), 2)
    np.testing.assert_allclose(E[0], E[1], atol=1e-10)
    np.testing.assert_allclose(E[2], E[3], atol=1e-10)
    assert not np.allclose(E[0], E[2])


def test_embedding_single_column(rng):
    M = normalized_affinity(self_tuning_affinity(rng.choice([-1.0, 1.0], size=(20, 6))))
    E = spectral_embedding(M, 1)
    assert E.shape == (6, 1)
    np.testing.assert_allclose(np.abs(E[:, 0]), 1.0)


def test_embedding_rejects_bad_k():
    with pytest.raises(PreconditionError):
        spectral_embedding(np.eye(3), 4)


# k-means -----------------------------------------------------------------------


def test_kmeans_separates_two_clouds():
    points = np.array([[0, 0], [0, 0.1], [0.1, 0], [10, 10], [10, 10.1], [10.1, 10]], dtype=float)
    partition = kmeans_assign(points, 2, seed=0)
    assert partition.assignment == (0, 0, 0, 1, 1, 1)


def test_kmeans_singletons():
    points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
    partition = kmeans_assign(points, 4, seed=0)
    assert sorted(partition.assignment) == [0, 1, 2, 3]


def test_kmeans_deterministic(rng):
    points = rng.standard_normal((15, 3))
    assert kmeans_assign(points, 4, seed=7) == kmeans_assign(points, 4, seed=7)


# group_labels ------------------------------------------------------------------


def test_single_group(rng):
    partition = group_labels(rng.choice([-1.0, 1.0], size=(10, 5)), 1)
    assert partition.assignment == (0, 0, 0, 0, 0)


def test_duplicate_blocks_are_co_grouped(rng):
    a = rng.choice([-1.0, 1.0], size=20)
    b = rng.choice([-1.0, 1.0], size=20)
    Y = np.column_stack([a, a, a, b, b, b])
    partition = group_labels(Y, 2, seed=0)
    assert partition.assignment == (0, 0, 0, 1, 1, 1)


def test_every_label_alone(rng):
    Y = rng.choice([-1.0, 1.0], size=(30, 5))
    partition = group_labels(Y, 5, seed=0)
    assert sorted(partition.assignment) == [0, 1, 2, 3, 4]


def test_noisy_blocks_recovered(rng):
    Y = _blocky_labels(rng)
    partition = group_labels(Y, 3, seed=0)
    assert partitions_equivalent(partition, GroupPartition((0,) * 4 + (1,) * 3 + (2,) * 5, 3))


def test_column_permutation_equivariance(rng):
    Y = _blocky_labels(rng)
    perm = rng.permutation(Y.shape[1])
    base = group_labels(Y, 3, seed=0)
    permuted = group_labels(Y[:, perm], 3, seed=0)
    expected = GroupPartition(tuple(canonical_relabel(np.asarray(base.assignment)[perm])), 3)
    assert partitions_equivalent(permuted, expected)


def test_group_labels_deterministic(rng):
    Y = rng.choice([-1.0, 1.0], size=(40, 12))
    assert group_labels(Y, 4, seed=3) == group_labels(Y, 4, seed=3)


def test_k_larger_than_l():
    with pytest.raises(PreconditionError):
        group_labels(np.ones((4, 3)), 4)


# partitions --------------------------------------------------------------------


def test_partition_requires_every_group():
    with pytest.raises(PreconditionError):
        GroupPartition((0, 0, 2), 3)


def test_partitions_equivalent_modulo_relabeling():
    assert partitions_equivalent(GroupPartition((1, 1, 0), 2), GroupPartition((0, 0, 1), 2))
    assert not partitions_equivalent(GroupPartition((0, 1, 1), 2), GroupPartition((0, 0, 1), 2))


def test_canonical_relabel():
    np.testing.assert_array_equal(canonical_relabel(np.array([2, 2, 0, 1, 0])), [0, 0, 1, 2, 1])
