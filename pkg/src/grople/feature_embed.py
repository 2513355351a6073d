"""Sparse linear map from feature space onto the embedded label points.

Minimizes

    ||X Z - U||_F^2 + alpha * trace(R Z^T Z) + beta * ||Z||_1

with R = 1 - corr(U) so that strongly correlated latent dimensions get
similar coefficient columns. Solved with the shared APG loop and
elementwise soft-thresholding.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import DimensionError, InsufficientDataError, PreconditionError
from .solver import ApgSettings, accelerated_proximal_gradient

logger = logging.getLogger(__name__)

# Initialization ridge, relative to the mean diagonal of X^T X
INIT_RIDGE = 1e-4


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Fitted map Z (D x d) with its weights and penalty matrix."""

    Z: np.ndarray
    alpha: float
    beta: float
    R: np.ndarray
    n_zero: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n_zero", int(np.count_nonzero(self.Z == 0)))

    def recount_zeros(self) -> int:
        return int(np.count_nonzero(self.Z == 0))


@dataclass(frozen=True, eq=False)
class FeatureGram:
    """X^T X, X^T U and ||U||^2, reusable across (alpha, beta) fits."""

    XtX: np.ndarray
    XtU: np.ndarray
    u_sq: float

    @classmethod
    def build(cls, X: np.ndarray, U: np.ndarray) -> "FeatureGram":
        X, U = np.asarray(X, dtype=float), np.asarray(U, dtype=float)
        if X.ndim != 2 or U.ndim != 2 or X.shape[0] != U.shape[0]:
            raise DimensionError(f"X {X.shape} and U {U.shape} must share their row count")
        return cls(X.T @ X, X.T @ U, float(np.sum(U * U)))


def correlation_penalty(U: np.ndarray) -> np.ndarray:
    """
    R = 1 - C where C is the Pearson correlation between columns of U.

    Zero-variance columns correlate 0 with every other column and 1 with
    themselves; the diagonal of R is 0.

    Raises:
        InsufficientDataError: U has fewer than two rows
    """
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[0] < 2:
        raise InsufficientDataError(f"correlation needs at least 2 rows, got shape {U.shape}")

    centered = U - U.mean(axis=0)
    norms = np.sqrt(np.sum(centered * centered, axis=0))
    denom = np.outer(norms, norms)
    C = np.divide(centered.T @ centered, denom, out=np.zeros_like(denom), where=denom > 0)
    C = np.clip(C, -1.0, 1.0)
    np.fill_diagonal(C, 1.0)

    R = 1.0 - C
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 0.0)
    return R


def feature_smooth_gradient(
    X: np.ndarray, U: np.ndarray, Z: np.ndarray, R: np.ndarray, alpha: float
) -> np.ndarray:
    """Gradient 2 X^T (X Z - U) + 2 alpha Z R of the smooth part (R symmetric)."""
    X, U, Z, R = (np.asarray(M, dtype=float) for M in (X, U, Z, R))
    if X.shape[0] != U.shape[0] or X.shape[1] != Z.shape[0] or Z.shape[1] != U.shape[1] \
            or R.shape != (Z.shape[1], Z.shape[1]):
        raise DimensionError(
            f"shapes X {X.shape}, U {U.shape}, Z {Z.shape}, R {R.shape} do not conform"
        )
    return 2.0 * X.T @ (X @ Z - U) + 2.0 * alpha * Z @ R


def soft_threshold(M: np.ndarray, t: float) -> np.ndarray:
    """Elementwise sign(m) * max(|m| - t, 0); the prox of t ||.||_1."""
    if t < 0:
        raise PreconditionError(f"threshold must be >= 0, got {t}")
    M = np.asarray(M, dtype=float)
    return np.sign(M) * np.maximum(np.abs(M) - t, 0.0)


def feature_objective(
    X: np.ndarray, U: np.ndarray, Z: np.ndarray, R: np.ndarray, alpha: float, beta: float
) -> float:
    residual = np.asarray(X) @ Z - U
    return (
        float(np.sum(residual * residual))
        + alpha * float(np.trace(R @ Z.T @ Z))
        + beta * float(np.sum(np.abs(Z)))
    )


def fit_feature_map(
    X: np.ndarray,
    U: np.ndarray,
    alpha: float,
    beta: float,
    settings: ApgSettings = ApgSettings(),
    R: Optional[np.ndarray] = None,
    gram: Optional[FeatureGram] = None,
) -> FeatureMap:
    """
    Fit Z by APG with step 1 / L_Z, L_Z = 2 (||X^T X||_F + alpha ||R||_F).

    Args:
        X: Features (N x D)
        U: Embedded points (N x d)
        alpha: Correlation weight (>= 0)
        beta: l1 weight (>= 0)
        settings: Stopping rules (``gamma`` is not used here)
        R: Penalty matrix; computed from U when omitted
        gram: Precomputed Gram matrices for (X, U)

    Returns:
        FeatureMap with the exact-zero count recorded

    Raises:
        NumericalFailureError: an iterate is not finite
    """
    if alpha < 0 or beta < 0:
        raise PreconditionError(f"alpha and beta must be >= 0, got {alpha}, {beta}")
    if gram is None:
        gram = FeatureGram.build(X, U)
    if R is None:
        R = correlation_penalty(U)
    XtX, XtU = gram.XtX, gram.XtU
    n_features, d = XtU.shape

    lipschitz = 2.0 * (float(np.linalg.norm(XtX, "fro")) + alpha * float(np.linalg.norm(R, "fro")))
    if lipschitz == 0:
        # X = 0 and no coupling: every Z fits equally, the l1 term picks 0
        return FeatureMap(np.zeros((n_features, d)), alpha, beta, R)

    gamma = INIT_RIDGE * float(np.trace(XtX)) / n_features
    system = XtX + gamma * np.eye(n_features)
    try:
        Z0 = linalg.solve(system, XtU, assume_a="pos")
    except linalg.LinAlgError:
        Z0 = linalg.lstsq(system, XtU)[0]

    def gradient(Z: np.ndarray) -> np.ndarray:
        return 2.0 * (XtX @ Z - XtU) + 2.0 * alpha * (Z @ R)

    def prox(Z: np.ndarray, step: float) -> np.ndarray:
        return soft_threshold(Z, beta * step)

    def composite(Z: np.ndarray) -> float:
        smooth = gram.u_sq - 2.0 * np.sum(Z * XtU) + np.sum(Z * (XtX @ Z))
        return (
            max(float(smooth), 0.0)
            + alpha * float(np.sum(R * (Z.T @ Z)))
            + beta * float(np.sum(np.abs(Z)))
        )

    result = accelerated_proximal_gradient(Z0, gradient, prox, composite, lipschitz, settings)
    feature_map = FeatureMap(result.x, alpha, beta, R)
    logger.debug(
        f"feature map alpha={alpha:g} beta={beta:g}: {result.iterations} iterations, "
        f"{feature_map.n_zero}/{result.x.size} zeros"
    )
    return feature_map
