"""Multi-label evaluation metrics and rank-based method comparison.

Label matrices use the {-1, +1} convention; +1 entries are positives.

Degenerate cases (0/0 in the textbook formulas) follow fixed conventions
under ``degenerate="default"``:

    accuracy     instance with no actual and no predicted positive -> 1
    example F1   instance with no actual and no predicted positive -> 1,
                 otherwise p + r = 0 -> 0
    macro F1     label with TP = FP = FN = 0 -> 0
    micro F1     2TP + FP + FN = 0 -> 1

Under ``degenerate="skip"`` those instances (labels) are left out of the
mean instead; an input where every instance (label) is degenerate falls
back to the default value.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import (
    DegenerateStatisticError,
    DimensionError,
    IncompleteTableError,
    PreconditionError,
)

logger = logging.getLogger(__name__)

Degenerate = Literal["default", "skip"]
METRIC_NAMES: Tuple[str, ...] = ("accuracy", "example_f1", "macro_f1", "micro_f1")

# Studentized range statistic over sqrt(2), two-tailed Nemenyi test
NEMENYI_Q: Dict[float, Tuple[float, ...]] = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920),
}


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    example_f1: float
    macro_f1: float
    micro_f1: float
    n_instances: int
    n_labels: int

    def as_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


@dataclass(frozen=True, eq=False)
class RankTable:
    """Methods x datasets scores with per-dataset ranks (1 = best)."""

    scores: np.ndarray
    ranks: np.ndarray
    methods: Tuple[str, ...]
    datasets: Tuple[str, ...]

    @property
    def n_methods(self) -> int:
        return self.scores.shape[0]

    @property
    def n_datasets(self) -> int:
        return self.scores.shape[1]

    @property
    def average(self) -> np.ndarray:
        return self.ranks.mean(axis=1)

    def average_by_method(self) -> Dict[str, float]:
        return {m: float(r) for m, r in zip(self.methods, self.average)}


def _positives(Y: np.ndarray, Y_hat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    Y, Y_hat = np.asarray(Y), np.asarray(Y_hat)
    if Y.ndim != 2 or Y.shape != Y_hat.shape:
        raise DimensionError(f"label matrices must share a 2-D shape, got {Y.shape} and {Y_hat.shape}")
    if Y.shape[0] == 0:
        raise PreconditionError("metrics need at least one instance")
    for name, M in (("Y", Y), ("Y_hat", Y_hat)):
        if not np.all((M == 1) | (M == -1)):
            raise PreconditionError(f"{name} entries must be -1 or +1")
    return Y == 1, Y_hat == 1


def _mean(values: np.ndarray, degenerate_mask: np.ndarray, degenerate: Degenerate, fallback: float) -> float:
    if degenerate == "skip":
        kept = values[~degenerate_mask]
        return float(kept.mean()) if kept.size else fallback
    if degenerate != "default":
        raise PreconditionError(f"unknown degenerate convention {degenerate!r}")
    return float(values.mean())


def accuracy(Y: np.ndarray, Y_hat: np.ndarray, degenerate: Degenerate = "default") -> float:
    """Mean over instances of |y and y_hat| / |y or y_hat| on positive sets."""
    actual, predicted = _positives(Y, Y_hat)
    inter = np.sum(actual & predicted, axis=1)
    union = np.sum(actual | predicted, axis=1)
    empty = union == 0
    values = np.divide(inter, union, out=np.ones(len(union)), where=~empty)
    return _mean(values, empty, degenerate, 1.0)


def example_f1(Y: np.ndarray, Y_hat: np.ndarray, degenerate: Degenerate = "default") -> float:
    """Mean per-instance F1, 2 |y and y_hat| / (|y| + |y_hat|)."""
    actual, predicted = _positives(Y, Y_hat)
    inter = np.sum(actual & predicted, axis=1)
    total = np.sum(actual, axis=1) + np.sum(predicted, axis=1)
    empty = total == 0
    # with p = inter/|y_hat| and r = inter/|y|, 2pr/(p+r) reduces to this ratio,
    # which is 0 whenever exactly one of the two sets is empty
    values = np.divide(2 * inter, total, out=np.ones(len(total)), where=~empty)
    return _mean(values, empty, degenerate, 1.0)


def macro_f1(Y: np.ndarray, Y_hat: np.ndarray, degenerate: Degenerate = "default") -> float:
    """Mean per-label F1, 2TP / (2TP + FP + FN)."""
    actual, predicted = _positives(Y, Y_hat)
    tp = np.sum(actual & predicted, axis=0)
    fp = np.sum(~actual & predicted, axis=0)
    fn = np.sum(actual & ~predicted, axis=0)
    denom = 2 * tp + fp + fn
    empty = denom == 0
    values = np.divide(2 * tp, denom, out=np.zeros(len(denom)), where=~empty)
    return _mean(values, empty, degenerate, 0.0)


def micro_f1(Y: np.ndarray, Y_hat: np.ndarray, degenerate: Degenerate = "default") -> float:
    """F1 of TP/FP/FN pooled over every (instance, label) cell."""
    actual, predicted = _positives(Y, Y_hat)
    tp = int(np.sum(actual & predicted))
    fp = int(np.sum(~actual & predicted))
    fn = int(np.sum(actual & ~predicted))
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 1.0
    return 2 * tp / denom


def evaluate(Y: np.ndarray, Y_hat: np.ndarray, degenerate: Degenerate = "default") -> MetricReport:
    Y = np.asarray(Y)
    return MetricReport(
        accuracy=accuracy(Y, Y_hat, degenerate),
        example_f1=example_f1(Y, Y_hat, degenerate),
        macro_f1=macro_f1(Y, Y_hat, degenerate),
        micro_f1=micro_f1(Y, Y_hat, degenerate),
        n_instances=Y.shape[0],
        n_labels=Y.shape[1],
    )


# Rank statistics ---------------------------------------------------------------


def average_ranks(
    scores,
    higher_is_better: bool = True,
    methods: Optional[Sequence[str]] = None,
    datasets: Optional[Sequence[str]] = None,
) -> RankTable:
    """
    Rank methods per dataset (1 = best), mid-ranks for ties.

    Args:
        scores: Methods x datasets matrix
        higher_is_better: Rank the largest score first
        methods: Row names (default m0, m1, ...)
        datasets: Column names (default d0, d1, ...)

    Raises:
        IncompleteTableError: a cell is missing (NaN/None)
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 2:
        raise DimensionError(f"score table must be 2-D, got shape {scores.shape}")
    n_methods, n_datasets = scores.shape
    if n_methods < 2 or n_datasets < 1:
        raise PreconditionError(f"need >= 2 methods and >= 1 dataset, got {n_methods} x {n_datasets}")
    missing = np.argwhere(np.isnan(scores))
    if missing.size:
        raise IncompleteTableError(f"score table has missing cells at {missing.tolist()}")

    methods = tuple(methods) if methods is not None else tuple(f"m{i}" for i in range(n_methods))
    datasets = tuple(datasets) if datasets is not None else tuple(f"d{j}" for j in range(n_datasets))
    if len(methods) != n_methods or len(datasets) != n_datasets:
        raise DimensionError("method/dataset names do not match the table shape")

    keyed = -scores if higher_is_better else scores
    ranks = stats.rankdata(keyed, method="average", axis=0)
    return RankTable(scores=scores, ranks=ranks, methods=methods, datasets=datasets)


def friedman_chi2(table: RankTable) -> float:
    """Friedman chi^2_F from the average ranks R_j."""
    k, n = table.n_methods, table.n_datasets
    R = table.average
    return 12.0 * n / (k * (k + 1)) * (float(np.sum(R * R)) - k * (k + 1) ** 2 / 4.0)


def friedman_statistic(table: RankTable) -> Tuple[float, float]:
    """
    (chi^2_F, F_F) with the Iman-Davenport correction
    F_F = (N - 1) chi^2_F / (N (K - 1) - chi^2_F).

    Raises:
        DegenerateStatisticError: the F_F denominator vanishes
    """
    k, n = table.n_methods, table.n_datasets
    if n < 2:
        raise PreconditionError(f"Friedman statistic needs >= 2 datasets, got {n}")
    chi2 = friedman_chi2(table)
    denom = n * (k - 1) - chi2
    if abs(denom) <= 1e-12 * n * (k - 1):
        raise DegenerateStatisticError(
            f"Iman-Davenport denominator is zero (chi2_F = N(K-1) = {n * (k - 1)})"
        )
    return chi2, (n - 1) * chi2 / denom


def friedman_critical_value(n_methods: int, n_datasets: int, alpha: float = 0.05) -> float:
    """Upper-alpha point of F with (K-1, (K-1)(N-1)) degrees of freedom."""
    if n_methods < 2 or n_datasets < 2:
        raise PreconditionError(f"need K >= 2 and N >= 2, got K={n_methods}, N={n_datasets}")
    if not 0 < alpha < 1:
        raise PreconditionError(f"alpha must lie in (0, 1), got {alpha}")
    dfn = n_methods - 1
    return float(stats.f.ppf(1.0 - alpha, dfn, dfn * (n_datasets - 1)))


def nemenyi_q(n_methods: int, alpha: float = 0.05) -> float:
    """Critical q_alpha for 2 <= K <= 10 and alpha in {0.05, 0.10}."""
    table = NEMENYI_Q.get(round(alpha, 2))
    if table is None or not 2 <= n_methods <= len(table) + 1:
        raise PreconditionError(
            f"no q_alpha tabulated for K={n_methods}, alpha={alpha} (K in [2, 10], alpha in {{0.05, 0.10}})"
        )
    return table[n_methods - 2]


def nemenyi_cd(n_methods: int, n_datasets: int, q_alpha: float) -> float:
    """Critical difference q_alpha * sqrt(K (K + 1) / (6 N))."""
    if n_methods < 2 or n_datasets < 1 or q_alpha < 0:
        raise PreconditionError(
            f"need K >= 2, N >= 1, q_alpha >= 0; got K={n_methods}, N={n_datasets}, q={q_alpha}"
        )
    return q_alpha * float(np.sqrt(n_methods * (n_methods + 1) / (6.0 * n_datasets)))
