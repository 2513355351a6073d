"""Group-sparse label embedding.

Minimizes

    sum_k ||Y^k - U V^k||_F^2 + lam1 ||U||_F^2 + lam2 sum_k ||V^k||_{2,1}

by alternating a closed-form U update with one APG solve per label group.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg

from .errors import (
    DegenerateBasisError,
    DimensionError,
    NumericalFailureError,
    PreconditionError,
    SingularUpdateError,
)
from .grouping import GroupPartition
from .solver import ApgSettings, accelerated_proximal_gradient

logger = logging.getLogger(__name__)

ZERO_ROW_THRESHOLD = 1e-8
INIT_SCALE = 0.01


@dataclass(frozen=True, eq=False)
class LabelEmbeddingModel:
    """Basis U (N x d), coefficients V (d x L) and the objective history."""

    U: np.ndarray
    V: np.ndarray
    partition: GroupPartition
    lam1: float
    lam2: float
    d: int
    seed: int
    history: Tuple[float, ...] = ()

    def blocks(self) -> List[np.ndarray]:
        """Per-group coefficient blocks V^k (columns in Y order)."""
        return [self.V[:, idx] for idx in self.partition.groups()]

    @property
    def collapsed(self) -> bool:
        """Every row of V shrank to zero (and U with it)."""
        return not np.any(self.V)

    def reconstruct(self) -> np.ndarray:
        return self.U @ self.V

    def nonzero_row_masks(self, threshold: float = ZERO_ROW_THRESHOLD) -> List[np.ndarray]:
        return nonzero_row_masks(self, threshold)


def l21_norm(M: np.ndarray) -> float:
    """Sum of row Euclidean norms."""
    return float(np.sum(np.linalg.norm(M, axis=1)))


def _check_2d(name: str, M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {M.shape}")
    return M


def update_basis(Y: np.ndarray, V: np.ndarray, lam1: float) -> np.ndarray:
    """
    Closed-form U = Y V^T (V V^T + lam1 I)^-1, via a symmetric solve.

    Raises:
        SingularUpdateError: V V^T is singular and lam1 = 0
    """
    Y, V = _check_2d("Y", Y), _check_2d("V", V)
    if Y.shape[1] != V.shape[1]:
        raise DimensionError(f"Y has {Y.shape[1]} columns but V has {V.shape[1]}")
    if lam1 < 0:
        raise PreconditionError(f"lam1 must be >= 0, got {lam1}")

    gram = V @ V.T + lam1 * np.eye(V.shape[0])
    try:
        # (V V^T + lam1 I) U^T = V Y^T
        return linalg.solve(gram, V @ Y.T, assume_a="pos").T
    except linalg.LinAlgError as e:
        if lam1 == 0:
            raise SingularUpdateError(f"V V^T is singular ({e}); use lam1 > 0")
        raise NumericalFailureError(f"U update failed: {e}")


def lipschitz_constant(U: np.ndarray) -> float:
    """Frobenius bound 2 ||U^T U||_F on the Lipschitz constant of the V gradient."""
    U = _check_2d("U", U)
    return 2.0 * float(np.linalg.norm(U.T @ U, "fro"))


def smooth_gradient(U: np.ndarray, Yk: np.ndarray, Vk: np.ndarray) -> np.ndarray:
    """Gradient 2 (U^T U V^k - U^T Y^k) of ||Y^k - U V^k||_F^2."""
    U, Yk, Vk = _check_2d("U", U), _check_2d("Yk", Yk), _check_2d("Vk", Vk)
    if U.shape[0] != Yk.shape[0] or U.shape[1] != Vk.shape[0] or Yk.shape[1] != Vk.shape[1]:
        raise DimensionError(f"shapes U {U.shape}, Yk {Yk.shape}, Vk {Vk.shape} do not conform")
    return 2.0 * (U.T @ (U @ Vk) - U.T @ Yk)


def row_shrinkage(M: np.ndarray, t: float) -> np.ndarray:
    """Row-wise v * (||v|| - t)_+ / ||v||; the prox of t ||.||_{2,1}."""
    if t < 0:
        raise PreconditionError(f"threshold must be >= 0, got {t}")
    M = np.asarray(M, dtype=float)
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    factor = np.divide(np.maximum(norms - t, 0.0), norms, out=np.zeros_like(norms), where=norms > 0)
    return M * factor


def _ridge_init(UtU: np.ndarray, UtY: np.ndarray, gamma: float) -> np.ndarray:
    """(U^T U + gamma I)^-1 U^T Y, falling back to least squares when singular."""
    system = UtU + gamma * np.eye(UtU.shape[0])
    try:
        return linalg.solve(system, UtY, assume_a="pos")
    except linalg.LinAlgError:
        return linalg.lstsq(system, UtY)[0]


def apg_fit_group(
    U: np.ndarray,
    Yk: np.ndarray,
    lam2: float,
    settings: ApgSettings = ApgSettings(),
    gamma: Optional[float] = None,
) -> np.ndarray:
    """
    Solve min_V ||Y^k - U V||_F^2 + lam2 ||V||_{2,1} with APG.

    Args:
        U: Basis (N x d)
        Yk: Label block of one group (N x L_k)
        lam2: Group-sparsity weight (>= 0)
        settings: Stopping rules; ``settings.gamma`` overrides ``gamma``
        gamma: Initialization ridge used when settings.gamma is None. Left
            unset, the start is the plain least-squares V (gamma = 0);
            fit_label_embedding passes lam1 here through ``settings``.

    Raises:
        DegenerateBasisError: U is zero
        NumericalFailureError: an iterate is not finite
    """
    U, Yk = _check_2d("U", U), _check_2d("Yk", Yk)
    if U.shape[0] != Yk.shape[0]:
        raise DimensionError(f"U has {U.shape[0]} rows but Yk has {Yk.shape[0]}")
    if lam2 < 0:
        raise PreconditionError(f"lam2 must be >= 0, got {lam2}")

    UtU = U.T @ U
    UtY = U.T @ Yk
    y_sq = float(np.sum(Yk * Yk))
    lipschitz = 2.0 * float(np.linalg.norm(UtU, "fro"))
    if lipschitz == 0:
        raise DegenerateBasisError("basis U is zero; the V subproblem has no curvature")

    if settings.gamma is not None:
        gamma = settings.gamma
    V0 = _ridge_init(UtU, UtY, gamma or 0.0)

    def gradient(V: np.ndarray) -> np.ndarray:
        return 2.0 * (UtU @ V - UtY)

    def prox(V: np.ndarray, step: float) -> np.ndarray:
        return row_shrinkage(V, lam2 * step)

    def composite(V: np.ndarray) -> float:
        # ||Y - UV||^2 expanded with the Gram matrices
        smooth = y_sq - 2.0 * np.sum(V * UtY) + np.sum(V * (UtU @ V))
        return max(float(smooth), 0.0) + lam2 * l21_norm(V)

    result = accelerated_proximal_gradient(V0, gradient, prox, composite, lipschitz, settings)
    if not result.converged:
        logger.debug(f"APG stopped at max_iter={settings.max_iter} without meeting tol")
    return result.x


def objective(
    Y: np.ndarray,
    partition: GroupPartition,
    U: np.ndarray,
    V: np.ndarray,
    lam1: float,
    lam2: float,
) -> float:
    """Label-embedding objective summed over the partition's groups."""
    Y, U, V = _check_2d("Y", Y), _check_2d("U", U), _check_2d("V", V)
    if Y.shape != (U.shape[0], V.shape[1]) or U.shape[1] != V.shape[0]:
        raise DimensionError(f"shapes Y {Y.shape}, U {U.shape}, V {V.shape} do not conform")
    if partition.n_labels != Y.shape[1]:
        raise DimensionError(f"partition covers {partition.n_labels} labels, Y has {Y.shape[1]}")

    total = lam1 * float(np.sum(U * U))
    for idx in partition.groups():
        residual = Y[:, idx] - U @ V[:, idx]
        total += float(np.sum(residual * residual)) + lam2 * l21_norm(V[:, idx])
    return total


def _group_value(U: np.ndarray, Yk: np.ndarray, Vk: np.ndarray, lam2: float) -> float:
    residual = Yk - U @ Vk
    return float(np.sum(residual * residual)) + lam2 * l21_norm(Vk)


def fit_label_embedding(
    Y: np.ndarray,
    partition: GroupPartition,
    d: int,
    lam1: float,
    lam2: float,
    settings: ApgSettings = ApgSettings(),
    seed: int = 0,
    outer_tol: float = 1e-5,
    max_outer: int = 50,
    workers: int = 1,
) -> LabelEmbeddingModel:
    """
    Alternate per-group APG solves for V with the closed-form U update.

    U starts as 0.01 * N(0, 1) from ``seed``. Each outer iteration solves every
    V^k (gamma defaults to lam1), keeps it only if it does not raise that
    group's objective at the current U, then updates U. Stops when the
    relative objective change falls below ``outer_tol`` or after
    ``max_outer`` iterations.

    Args:
        Y: Label matrix (N x L)
        partition: Label groups
        d: Latent dimension
        lam1: Ridge weight on U
        lam2: Group-sparsity weight on each V^k
        settings: Inner APG settings
        seed: Seed of the U initialization
        outer_tol: Relative objective change that stops the outer loop
        max_outer: Outer iteration cap
        workers: Threads for the per-group solves

    Returns:
        LabelEmbeddingModel with the recorded objective history
    """
    Y = _check_2d("Y", Y)
    if d < 1:
        raise PreconditionError(f"d must be >= 1, got {d}")
    if lam1 < 0 or lam2 < 0:
        raise PreconditionError(f"lam1 and lam2 must be >= 0, got {lam1}, {lam2}")
    if partition.n_labels != Y.shape[1]:
        raise DimensionError(f"partition covers {partition.n_labels} labels, Y has {Y.shape[1]}")

    if settings.gamma is None:
        settings = replace(settings, gamma=lam1)
    rng = np.random.default_rng(seed)
    U = INIT_SCALE * rng.standard_normal((Y.shape[0], d))
    V = np.zeros((d, Y.shape[1]))
    groups = partition.groups()
    history: List[float] = []

    for outer in range(max_outer):
        if workers > 1:
            candidates = Parallel(n_jobs=workers, prefer="threads")(
                delayed(apg_fit_group)(U, Y[:, idx], lam2, settings) for idx in groups
            )
        else:
            candidates = [apg_fit_group(U, Y[:, idx], lam2, settings) for idx in groups]

        for idx, Vk in zip(groups, candidates):
            if outer > 0 and _group_value(U, Y[:, idx], Vk, lam2) > _group_value(U, Y[:, idx], V[:, idx], lam2):
                continue
            V[:, idx] = Vk

        if not np.any(V):
            # every row shrank away: U = 0, V = 0 is stationary
            U = np.zeros_like(U)
            history.append(objective(Y, partition, U, V, lam1, lam2))
            logger.warning(f"Label embedding collapsed to zero at outer iteration {outer + 1} (lam2={lam2})")
            break

        U = update_basis(Y, V, lam1)
        value = objective(Y, partition, U, V, lam1, lam2)
        history.append(value)
        logger.debug(f"outer {outer + 1}: objective {value:.8g}")

        if len(history) > 1:
            previous = history[-2]
            if abs(previous - value) / max(abs(previous), np.finfo(float).tiny) < outer_tol:
                break

    return LabelEmbeddingModel(
        U=U, V=V.copy(), partition=partition, lam1=lam1, lam2=lam2, d=d, seed=seed,
        history=tuple(history),
    )


def block_row_masks(
    V: np.ndarray, partition: GroupPartition, threshold: float = ZERO_ROW_THRESHOLD
) -> List[np.ndarray]:
    """Per group, True where a row of V^k has l2-norm above ``threshold``."""
    V = _check_2d("V", V)
    if partition.n_labels != V.shape[1]:
        raise DimensionError(f"partition covers {partition.n_labels} labels, V has {V.shape[1]}")
    return [np.linalg.norm(V[:, idx], axis=1) > threshold for idx in partition.groups()]


def nonzero_row_masks(model: LabelEmbeddingModel, threshold: float = ZERO_ROW_THRESHOLD) -> List[np.ndarray]:
    return block_row_masks(model.V, model.partition, threshold)
