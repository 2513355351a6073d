"""Ridge binary relevance: one closed-form ridge regression per label."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from .dataset import Standardizer, design_matrix
from .errors import DimensionError, NumericalFailureError, PreconditionError
from .predictor import decide

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RidgeBRModel:
    W: np.ndarray
    lam: float
    label_names: Tuple[str, ...]
    n_features: int
    standardizer: Optional[Standardizer] = None
    bias: bool = False

    def __post_init__(self):
        object.__setattr__(self, "label_names", tuple(self.label_names))
        if self.W.shape[1] != len(self.label_names):
            raise DimensionError(f"W has {self.W.shape[1]} columns for {len(self.label_names)} labels")


def fit_ridge_br(
    X: np.ndarray,
    Y: np.ndarray,
    lam: float,
    label_names: Optional[Sequence[str]] = None,
    standardize: bool = False,
    bias: bool = False,
) -> RidgeBRModel:
    """
    W = (X^T X + lam I)^-1 X^T Y, all labels in one symmetric solve.

    Raises:
        PreconditionError: lam <= 0
    """
    if not lam > 0:
        raise PreconditionError(f"ridge weight must be > 0, got {lam}")
    X, Y = np.asarray(X, dtype=float), np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise DimensionError(f"X {X.shape} and Y {Y.shape} must be 2-D with equal rows")

    standardizer = Standardizer.fit(X) if standardize else None
    A = design_matrix(X, standardizer, bias)
    try:
        W = linalg.solve(A.T @ A + lam * np.eye(A.shape[1]), A.T @ Y, assume_a="pos")
    except linalg.LinAlgError as e:
        raise NumericalFailureError(f"ridge solve failed: {e}")

    names = tuple(label_names) if label_names is not None else tuple(f"label{j}" for j in range(Y.shape[1]))
    logger.info(f"Fitted ridge BR: lam={lam:g}, {A.shape[1]} x {Y.shape[1]} weights")
    return RidgeBRModel(W=W, lam=lam, label_names=names, n_features=X.shape[1],
                        standardizer=standardizer, bias=bias)


def score_ridge_br(model: RidgeBRModel, X_test: np.ndarray) -> np.ndarray:
    X_test = np.asarray(X_test, dtype=float)
    if X_test.ndim != 2 or X_test.shape[1] != model.n_features:
        raise DimensionError(f"X_test must have {model.n_features} columns, got shape {X_test.shape}")
    return design_matrix(X_test, model.standardizer, model.bias) @ model.W


def predict_ridge_br(model: RidgeBRModel, X_test: np.ndarray) -> np.ndarray:
    return decide(score_ridge_br(model, X_test))
