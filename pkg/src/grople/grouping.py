"""Label grouping by spectral clustering of the label columns.

Columns of Y are compared with a heat kernel whose scale is self-tuned per
column (distance to the nn-th nearest other column). The normalized
affinity D^-1/2 A D^-1/2 is embedded with its top-K eigenvectors, rows are
normalized, and k-means groups the rows.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist, squareform
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from .errors import DisconnectedLabelError, NumericalFailureError, PreconditionError, TooFewLabelsError

logger = logging.getLogger(__name__)

DEFAULT_NN = 7
DEFAULT_RESTARTS = 10
DEFAULT_MAX_ITER = 300


@dataclass(frozen=True, eq=False)
class AffinityMatrix:
    """Symmetric heat-kernel affinity between label columns plus the local scales."""

    A: np.ndarray
    scales: np.ndarray


@dataclass(frozen=True)
class GroupPartition:
    """Assignment of each of L labels to one of K groups (every group nonempty)."""

    assignment: Tuple[int, ...]
    n_groups: int

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(g) for g in self.assignment))
        if self.n_groups < 1:
            raise PreconditionError(f"group count must be >= 1, got {self.n_groups}")
        used = set(self.assignment)
        if used != set(range(self.n_groups)):
            raise PreconditionError(
                f"assignment must use every group in [0, {self.n_groups}) exactly, got {sorted(used)}"
            )

    @property
    def n_labels(self) -> int:
        return len(self.assignment)

    def members(self, group: int) -> np.ndarray:
        """Column indices of a group in ascending (Y) order."""
        return np.flatnonzero(np.asarray(self.assignment) == group)

    def groups(self) -> List[np.ndarray]:
        return [self.members(k) for k in range(self.n_groups)]

    def sizes(self) -> List[int]:
        return [len(m) for m in self.groups()]

    @classmethod
    def single(cls, n_labels: int) -> "GroupPartition":
        return cls((0,) * n_labels, 1)


def canonical_relabel(labels: np.ndarray) -> np.ndarray:
    """Renumber group ids by first appearance (0, 1, 2, ... in label order)."""
    mapping = {}
    out = np.empty(len(labels), dtype=int)
    for i, g in enumerate(labels):
        if g not in mapping:
            mapping[g] = len(mapping)
        out[i] = mapping[g]
    return out


def partitions_equivalent(a: GroupPartition, b: GroupPartition) -> bool:
    """True when a and b are the same partition up to group renumbering."""
    if a.n_labels != b.n_labels or a.n_groups != b.n_groups:
        return False
    return np.array_equal(canonical_relabel(np.asarray(a.assignment)),
                          canonical_relabel(np.asarray(b.assignment)))


def self_tuning_affinity(Y: np.ndarray, nn: int = DEFAULT_NN) -> AffinityMatrix:
    """
    Heat-kernel affinity A_ij = exp(-||Y_i - Y_j||^2 / (sigma_i sigma_j)) over columns.

    Args:
        Y: Label matrix (N x L)
        nn: Neighbor order for the local scale. Values above L - 1 are
            clamped to L - 1 with a warning, not rejected.

    Raises:
        TooFewLabelsError: L < 2
        PreconditionError: nn < 1
    """
    Y = np.asarray(Y, dtype=float)
    n_labels = Y.shape[1]
    if n_labels < 2:
        raise TooFewLabelsError(f"affinity needs at least 2 labels, got {n_labels}")
    if nn < 1:
        raise PreconditionError(f"neighbor order must be >= 1, got {nn}")
    if nn > n_labels - 1:
        logger.warning(f"Neighbor order {nn} exceeds L-1={n_labels - 1}; clamping")
        nn = n_labels - 1

    # squareform(pdist) is exactly symmetric with a zero diagonal
    sq_dist = squareform(pdist(Y.T, metric="sqeuclidean"))
    # position 0 of each sorted row is the column itself (distance 0)
    scales = np.sqrt(np.sort(sq_dist, axis=1)[:, nn])

    if np.any(scales == 0):
        positive = scales[scales > 0]
        fill = positive.min() if positive.size else 1.0
        logger.warning(f"{int(np.sum(scales == 0))} label columns have duplicates; sigma set to {fill:.6g}")
        scales = np.where(scales > 0, scales, fill)

    A = np.exp(-sq_dist / np.outer(scales, scales))
    # keep entries strictly positive under underflow
    A = np.maximum(A, np.finfo(float).tiny)
    return AffinityMatrix(A=A, scales=scales)


def normalized_affinity(A) -> np.ndarray:
    """
    Return D^-1/2 A D^-1/2 with D_ii = sum_j A_ij (exactly symmetric).

    Raises:
        DisconnectedLabelError: some row of A sums to zero
    """
    A = np.asarray(A.A if isinstance(A, AffinityMatrix) else A, dtype=float)
    degrees = A.sum(axis=1)
    if np.any(degrees <= 0):
        raise DisconnectedLabelError(
            f"labels {np.flatnonzero(degrees <= 0).tolist()} have zero affinity to every label"
        )
    inv_sqrt = 1.0 / np.sqrt(degrees)
    M = inv_sqrt[:, None] * A * inv_sqrt[None, :]
    return 0.5 * (M + M.T)


def spectral_embedding(M: np.ndarray, n_groups: int) -> np.ndarray:
    """
    Rows of the top-K eigenvectors of M, each row scaled to unit norm.

    Eigenvector signs are fixed so the largest-magnitude entry of each column
    is positive. Zero rows stay zero.

    Raises:
        NumericalFailureError: the symmetric eigensolver did not converge
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if not 1 <= n_groups <= n:
        raise PreconditionError(f"K must lie in [1, {n}], got {n_groups}")
    try:
        _, vectors = linalg.eigh(M, subset_by_index=[n - n_groups, n - 1])
    except linalg.LinAlgError as e:
        raise NumericalFailureError(f"eigendecomposition failed: {e}")

    vectors = vectors[:, ::-1]
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(n_groups)])
    vectors = vectors * np.where(signs == 0, 1.0, signs)

    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)


def _repair_empty_groups(points: np.ndarray, labels: np.ndarray, n_groups: int) -> np.ndarray:
    """Reseed each missing group with the point farthest from its centroid."""
    labels = labels.copy()
    for missing in range(n_groups):
        if np.any(labels == missing):
            continue
        centroids = np.array([
            points[labels == g].mean(axis=0) if np.any(labels == g) else np.zeros(points.shape[1])
            for g in range(n_groups)
        ])
        distances = np.linalg.norm(points - centroids[labels], axis=1)
        # only take points from groups that keep at least one member
        counts = np.bincount(labels, minlength=n_groups)
        distances[counts[labels] <= 1] = -1.0
        donor = int(np.argmax(distances))
        logger.warning(f"Group {missing} came out empty; reseeded with label {donor}")
        labels[donor] = missing
    return labels


def kmeans_assign(
    points: np.ndarray,
    n_groups: int,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    max_iter: int = DEFAULT_MAX_ITER,
) -> GroupPartition:
    """
    Lloyd k-means from k-means++ seeds, best of ``restarts`` by inertia.

    Groups are numbered canonically (by first appearance in row order) and
    empty groups are repaired, so the result is deterministic for a seed.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not 1 <= n_groups <= n:
        raise PreconditionError(f"K must lie in [1, {n}], got {n_groups}")
    if n_groups == 1:
        return GroupPartition.single(n)

    model = KMeans(
        n_clusters=n_groups,
        init="k-means++",
        n_init=restarts,
        max_iter=max_iter,
        tol=0.0,
        algorithm="lloyd",
        random_state=seed,
    )
    with warnings.catch_warnings():
        # duplicate points can leave fewer distinct clusters than K
        warnings.simplefilter("ignore", category=ConvergenceWarning)
        labels = model.fit_predict(points)

    labels = _repair_empty_groups(points, np.asarray(labels, dtype=int), n_groups)
    return GroupPartition(tuple(canonical_relabel(labels)), n_groups)


def group_labels(
    Y: np.ndarray,
    n_groups: int,
    seed: int = 0,
    nn: int = DEFAULT_NN,
    restarts: int = DEFAULT_RESTARTS,
) -> GroupPartition:
    """
    Partition the label columns of Y into K groups.

    Args:
        Y: Label matrix (N x L) in {-1, +1}
        n_groups: K, 1 <= K <= L
        seed: k-means seed
        nn: Neighbor order of the self-tuned kernel scale
        restarts: k-means restarts

    Returns:
        GroupPartition (K = 1 returns the all-zeros partition directly)
    """
    Y = np.asarray(Y, dtype=float)
    n_labels = Y.shape[1]
    if not 1 <= n_groups <= n_labels:
        raise PreconditionError(f"K must lie in [1, L={n_labels}], got {n_groups}")
    if n_groups == 1:
        return GroupPartition.single(n_labels)

    affinity = self_tuning_affinity(Y, nn)
    embedding = spectral_embedding(normalized_affinity(affinity), n_groups)
    partition = kmeans_assign(embedding, n_groups, seed=seed, restarts=restarts)
    logger.info(f"Grouped {n_labels} labels into {n_groups} groups, sizes {partition.sizes()}")
    return partition
