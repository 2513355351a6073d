"""End-to-end GroPLE classifier.

fit:     group_labels -> fit_label_embedding -> correlation_penalty(U)
         -> fit_feature_map(X, U)
predict: sign(X Z V) with sign(0) = -1 (or per-label thresholds when
         calibrated)
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dataset import MultiLabelDataset, Standardizer, design_matrix
from .errors import DimensionError, PreconditionError
from .feature_embed import FeatureGram, correlation_penalty, fit_feature_map
from .grouping import DEFAULT_NN, DEFAULT_RESTARTS, GroupPartition, group_labels
from .label_embed import (
    ZERO_ROW_THRESHOLD,
    LabelEmbeddingModel,
    block_row_masks,
    fit_label_embedding,
)
from .metrics import Degenerate, MetricReport, evaluate
from .solver import ApgSettings

logger = logging.getLogger(__name__)

DEFAULT_QUANTILES = 21


@dataclass(frozen=True)
class GropleParams:
    """Hyperparameters; the label-side defaults are the fixed published values."""

    d: int = 100
    n_groups: int = 10
    lam1: float = 0.001
    lam2: float = 1.0
    alpha: float = 0.1
    beta: float = 0.1
    nn: int = DEFAULT_NN
    kmeans_restarts: int = DEFAULT_RESTARTS
    standardize: bool = False
    bias: bool = False
    keep_u: bool = False
    settings: ApgSettings = field(default_factory=ApgSettings)
    outer_tol: float = 1e-5
    outer_max_iter: int = 50

    def __post_init__(self):
        if self.d < 1 or self.n_groups < 1:
            raise PreconditionError(f"d and n_groups must be >= 1, got d={self.d}, K={self.n_groups}")
        for name in ("lam1", "lam2", "alpha", "beta"):
            if getattr(self, name) < 0:
                raise PreconditionError(f"{name} must be >= 0, got {getattr(self, name)}")

    def as_dict(self) -> dict:
        return {
            "d": self.d,
            "n_groups": self.n_groups,
            "lam1": self.lam1,
            "lam2": self.lam2,
            "alpha": self.alpha,
            "beta": self.beta,
            "nn": self.nn,
            "kmeans_restarts": self.kmeans_restarts,
            "standardize": self.standardize,
            "bias": self.bias,
            "keep_u": self.keep_u,
            "apg_max_iter": self.settings.max_iter,
            "apg_tol": self.settings.tol,
            "outer_tol": self.outer_tol,
            "outer_max_iter": self.outer_max_iter,
        }

    @classmethod
    def from_dict(cls, values: dict) -> "GropleParams":
        values = dict(values)
        settings = ApgSettings(
            max_iter=int(values.pop("apg_max_iter", 500)), tol=float(values.pop("apg_tol", 1e-5))
        )
        return cls(settings=settings, **values)


@dataclass(frozen=True, eq=False)
class GropleClassifier:
    """Fitted model: X -> sign(design(X) Z V)."""

    Z: np.ndarray
    V: np.ndarray
    partition: GroupPartition
    label_names: Tuple[str, ...]
    params: GropleParams
    seed: int
    n_features: int
    standardizer: Optional[Standardizer] = None
    thresholds: Optional[np.ndarray] = None
    U: Optional[np.ndarray] = None
    history: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "label_names", tuple(self.label_names))
        if self.Z.shape[1] != self.V.shape[0]:
            raise DimensionError(f"Z has {self.Z.shape[1]} columns but V has {self.V.shape[0]} rows")
        if self.V.shape[1] != len(self.label_names):
            raise DimensionError(f"V has {self.V.shape[1]} columns for {len(self.label_names)} labels")
        expected_rows = self.n_features + (1 if self.params.bias else 0)
        if self.Z.shape[0] != expected_rows:
            raise DimensionError(f"Z has {self.Z.shape[0]} rows, expected {expected_rows}")
        if self.thresholds is not None and self.thresholds.shape != (len(self.label_names),):
            raise DimensionError("one threshold per label is required")

    @property
    def n_labels(self) -> int:
        return len(self.label_names)

    @property
    def collapsed(self) -> bool:
        """The label embedding shrank to V = 0, so every score is 0."""
        return not np.any(self.V)

    def nonzero_row_masks(self, threshold: float = ZERO_ROW_THRESHOLD) -> List[np.ndarray]:
        return block_row_masks(self.V, self.partition, threshold)


def fit(
    train: MultiLabelDataset,
    params: GropleParams = GropleParams(),
    seed: int = 0,
    embedding: Optional[LabelEmbeddingModel] = None,
    gram: Optional[FeatureGram] = None,
    workers: int = 1,
) -> GropleClassifier:
    """
    Fit the three stages on a training set.

    Args:
        train: Training data
        params: Hyperparameters
        seed: Seed for k-means and the U initialization
        embedding: Label embedding fitted on ``train.Y`` to reuse (its
            d, K, lam1, lam2 take precedence over ``params``)
        gram: Gram matrices of (design(train.X), embedding.U) to reuse
        workers: Threads for the per-group APG solves

    Raises:
        PreconditionError: K > L
    """
    if params.n_groups > train.n_labels:
        raise PreconditionError(f"K={params.n_groups} exceeds the label count L={train.n_labels}")

    standardizer = Standardizer.fit(train.X) if params.standardize else None
    X = design_matrix(train.X, standardizer, params.bias)

    if embedding is None:
        partition = group_labels(
            train.Y, params.n_groups, seed=seed, nn=params.nn, restarts=params.kmeans_restarts
        )
        embedding = fit_label_embedding(
            train.Y,
            partition,
            params.d,
            params.lam1,
            params.lam2,
            settings=params.settings,
            seed=seed,
            outer_tol=params.outer_tol,
            max_outer=params.outer_max_iter,
            workers=workers,
        )
    else:
        if embedding.U.shape[0] != train.n_instances or embedding.V.shape[1] != train.n_labels:
            raise DimensionError(
                f"embedding U {embedding.U.shape} / V {embedding.V.shape} does not match the training set"
            )
        params = replace(
            params, d=embedding.d, n_groups=embedding.partition.n_groups,
            lam1=embedding.lam1, lam2=embedding.lam2,
        )

    R = correlation_penalty(embedding.U)
    feature_map = fit_feature_map(
        X, embedding.U, params.alpha, params.beta, settings=replace(params.settings, gamma=None),
        R=R, gram=gram,
    )
    logger.info(
        f"Fitted GroPLE on {train.name}: d={embedding.d} K={embedding.partition.n_groups} "
        f"alpha={params.alpha:g} beta={params.beta:g}, {feature_map.n_zero} zeros in Z"
    )
    return GropleClassifier(
        Z=feature_map.Z,
        V=embedding.V,
        partition=embedding.partition,
        label_names=train.label_names,
        params=params,
        seed=seed,
        n_features=train.n_features,
        standardizer=standardizer,
        U=embedding.U if params.keep_u else None,
        history=embedding.history,
    )


def score(model: GropleClassifier, X_test: np.ndarray) -> np.ndarray:
    """Real-valued scores X Z V (N_test x L)."""
    X_test = np.asarray(X_test, dtype=float)
    if X_test.ndim != 2 or X_test.shape[1] != model.n_features:
        raise DimensionError(f"X_test must have {model.n_features} columns, got shape {X_test.shape}")
    X = design_matrix(X_test, model.standardizer, model.params.bias)
    return X @ model.Z @ model.V


def decide(scores: np.ndarray, thresholds: Optional[np.ndarray] = None) -> np.ndarray:
    """+1 where a score is above its threshold (default 0), else -1."""
    scores = np.asarray(scores, dtype=float)
    cut = 0.0 if thresholds is None else np.asarray(thresholds, dtype=float)
    return np.where(scores > cut, 1.0, -1.0)


def predict(model: GropleClassifier, X_test: np.ndarray) -> np.ndarray:
    return decide(score(model, X_test), model.thresholds)


def _label_f1(actual: np.ndarray, predicted: np.ndarray) -> float:
    tp = np.sum(actual & predicted)
    denom = 2 * tp + np.sum(~actual & predicted) + np.sum(actual & ~predicted)
    return 1.0 if denom == 0 else 2 * tp / denom


def calibrate_thresholds(
    model: GropleClassifier,
    X: np.ndarray,
    Y: np.ndarray,
    n_quantiles: int = DEFAULT_QUANTILES,
) -> GropleClassifier:
    """
    Per label, pick the decision threshold that maximizes that label's
    training F1 among 0 and the score quantiles.

    Ties keep the candidate closest to 0, so an already optimal sign rule
    is left unchanged.
    """
    if n_quantiles < 2:
        raise PreconditionError(f"n_quantiles must be >= 2, got {n_quantiles}")
    scores = score(model, X)
    Y = np.asarray(Y)
    if Y.shape != scores.shape:
        raise DimensionError(f"Y {Y.shape} does not match the score shape {scores.shape}")

    levels = np.linspace(0.0, 1.0, n_quantiles)
    thresholds = np.zeros(model.n_labels)
    for j in range(model.n_labels):
        actual = Y[:, j] == 1
        candidates = np.concatenate([[0.0], np.quantile(scores[:, j], levels)])
        candidates = candidates[np.argsort(np.abs(candidates), kind="stable")]
        values = [_label_f1(actual, scores[:, j] > t) for t in candidates]
        thresholds[j] = candidates[int(np.argmax(values))]
    logger.info(f"Calibrated thresholds: {int(np.count_nonzero(thresholds))} of {model.n_labels} moved off 0")
    return replace(model, thresholds=thresholds)


def label_space_approximation(
    Y: np.ndarray, U: np.ndarray, V: np.ndarray, degenerate: Degenerate = "default"
) -> MetricReport:
    """The four metrics of sign(U V) against the training labels."""
    U, V = np.asarray(U, dtype=float), np.asarray(V, dtype=float)
    if U.shape[1] != V.shape[0]:
        raise DimensionError(f"U {U.shape} and V {V.shape} do not conform")
    return evaluate(Y, decide(U @ V), degenerate)


def label_sets(Y_hat: np.ndarray, label_names: Sequence[str]) -> List[List[str]]:
    """Predicted label names per instance."""
    return [[name for name, v in zip(label_names, row) if v == 1] for row in np.asarray(Y_hat)]
