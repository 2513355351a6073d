"""Accelerated proximal gradient loop shared by the label and feature solvers.

Momentum follows the two-sequence scheme

    G_t     = X_t + ((b_{t-1} - 1) / b_t) (X_t - X_{t-1})
    X_{t+1} = prox(G_t - grad(G_t) / L, 1 / L)
    b_{t+1} = (1 + sqrt(1 + 4 b_t^2)) / 2

with b_0 = b_1 = 1 and X_0 = X_1 = the caller's initial point.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import NumericalFailureError, PreconditionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ApgSettings:
    """Stopping rules and initialization ridge for the APG loop.

    ``gamma`` is the ridge used only to build the initial point; None means
    "use the caller's default" (lam1 for the label solver).
    """

    max_iter: int = 500
    tol: float = 1e-5
    gamma: Optional[float] = None
    track_best: bool = False

    def __post_init__(self):
        if self.max_iter < 1:
            raise PreconditionError(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.tol > 0:
            raise PreconditionError(f"tol must be > 0, got {self.tol}")
        if self.gamma is not None and self.gamma < 0:
            raise PreconditionError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class ApgResult:
    x: np.ndarray
    iterations: int
    converged: bool
    objective_history: Tuple[float, ...]
    # True when the last iterate was replaced by the best one
    guarded: bool = False


def accelerated_proximal_gradient(
    x0: np.ndarray,
    gradient: Callable[[np.ndarray], np.ndarray],
    prox: Callable[[np.ndarray, float], np.ndarray],
    objective: Callable[[np.ndarray], float],
    lipschitz: float,
    settings: ApgSettings,
) -> ApgResult:
    """
    Minimize smooth + nonsmooth from ``x0``.

    Args:
        x0: Initial point (used for both X_0 and X_1)
        gradient: Gradient of the smooth part
        prox: ``prox(v, step)`` = proximal map of ``step * h`` at v
        objective: Composite objective, evaluated once per iteration
        lipschitz: Lipschitz constant of the gradient (> 0)
        settings: Stopping rules

    Returns:
        ApgResult holding the last iterate, or the best one if
        ``settings.track_best`` is set or the last iterate ended above
        the starting objective.
    """
    if not lipschitz > 0:
        raise PreconditionError(f"Lipschitz constant must be > 0, got {lipschitz}")
    step = 1.0 / lipschitz

    x_prev = x_cur = x0
    b_prev = b_cur = 1.0
    f0 = float(objective(x0))
    history = [f0]
    best_f, best_x = f0, x0
    converged = False
    iterations = 0

    for t in range(1, settings.max_iter + 1):
        g = x_cur + ((b_prev - 1.0) / b_cur) * (x_cur - x_prev)
        x_next = prox(g - step * gradient(g), step)
        if not np.all(np.isfinite(x_next)):
            raise NumericalFailureError(f"non-finite iterate at APG iteration {t}")

        b_prev, b_cur = b_cur, (1.0 + math.sqrt(1.0 + 4.0 * b_cur * b_cur)) / 2.0
        change = np.linalg.norm(x_next - x_cur) / (1.0 + np.linalg.norm(x_cur))
        x_prev, x_cur = x_cur, x_next
        iterations = t

        f = float(objective(x_cur))
        history.append(f)
        if f < best_f:
            best_f, best_x = f, x_cur
        if change < settings.tol:
            converged = True
            break

    if settings.track_best:
        return ApgResult(best_x, iterations, converged, tuple(history))
    if history[-1] > f0:
        # FISTA is not monotone; never hand back a point worse than the start
        logger.warning(
            f"APG ended above its starting objective ({history[-1]:.6g} > {f0:.6g}); "
            "returning best iterate"
        )
        return ApgResult(best_x, iterations, converged, tuple(history), guarded=True)
    return ApgResult(x_cur, iterations, converged, tuple(history))
