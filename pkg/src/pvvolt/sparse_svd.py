"""Rank-one factorization with an l1 penalty on the left (day) vector.

``procedure`` alternates

    x <- argmin_x ||H - x y^T||_F^2 + alpha * ||x||_1      (soft threshold)
    y <- H^T x / ||x||

starting from the dominant singular pair of ``H``, then normalizes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, ZeroMatrix, ZeroVector

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class SparseSvdConfig:
    alpha: float = DEFAULT_ALPHA
    epsilon: float = 1e-6
    max_iterations: int = 500

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("SparseSvdConfig.alpha must be >= 0")
        if not self.epsilon > 0:
            raise ValueError("SparseSvdConfig.epsilon must be > 0")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("SparseSvdConfig.max_iterations must be an integer >= 1")


@dataclass(frozen=True)
class SparseFactor:
    """One ``(x, y, sigma)`` triple.

    ``zero_solution`` is set when the thresholded ``x`` collapsed to the zero
    vector; ``x`` is then all zeros and ``sigma`` is 0.
    """

    x: np.ndarray
    y: np.ndarray
    sigma: float
    iterations: int
    converged: bool
    zero_solution: bool = False

    @property
    def support(self) -> int:
        return int(np.count_nonzero(self.x))


def objective(H, x, y, alpha: float) -> float:
    """Penalized fit ``||H - x y^T||_F^2 + alpha ||x||_1``."""
    H = np.asarray(H, dtype=float)
    return float(np.sum((H - np.outer(x, y)) ** 2) + alpha * np.abs(x).sum())


def dominant_pair(H, tol: float = 1e-10, max_iterations: int = 1_000_000):
    """Largest singular value and its unit singular vectors by power iteration on H^T H.

    Starts from the normalized column-sum vector (or the largest column if
    the column sums cancel) and stops once ``||G y - mu y|| <= tol * mu``,
    with ``mu`` the Rayleigh quotient of ``G = H^T H``.
    """
    H = np.asarray(H, dtype=float)
    scale = np.linalg.norm(H)
    if H.size == 0 or scale == 0.0:
        raise ZeroMatrix("dominant_pair needs a nonzero matrix")
    Hs = H / scale
    G = Hs.T @ Hs
    y = Hs.sum(axis=0)
    if np.linalg.norm(y) <= 1e-8:
        y = Hs[np.argmax(np.abs(Hs).sum(axis=1))].copy()
    y /= np.linalg.norm(y)
    Gy = G @ y
    if np.linalg.norm(Gy) == 0.0:
        # Start vector in the null space; restart from the strongest row.
        y = Hs[np.argmax(np.linalg.norm(Hs, axis=1))].copy()
        y /= np.linalg.norm(y)
        Gy = G @ y
    for it in range(max_iterations):
        mu = float(y @ Gy)
        if np.linalg.norm(Gy - mu * y) <= tol * mu:
            break
        y = Gy / np.linalg.norm(Gy)
        Gy = G @ y
    else:
        raise NoConvergence(f"power iteration did not converge in {max_iterations} steps")
    hy = H @ y
    sigma = float(np.linalg.norm(hy))
    x, y = canonical_sign(hy / sigma, y)
    return x, y, sigma


def update_x(H, y, alpha: float) -> np.ndarray:
    """Exact minimizer of ``||H - x y^T||_F^2 + alpha ||x||_1`` over ``x``.

    The objective separates over rows; each coordinate is the soft-thresholded
    projection ``sign(g) * max(|g| - alpha/2, 0) / ||y||^2`` with ``g = H y``.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    yy = float(y @ y)
    if yy == 0.0:
        raise ZeroVector("update_x needs a nonzero y")
    g = H @ y
    return np.sign(g) * np.maximum(np.abs(g) - alpha / 2.0, 0.0) / yy


def update_y(H, x) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    x = np.asarray(x, dtype=float)
    nx = np.linalg.norm(x)
    if nx == 0.0:
        raise ZeroVector("update_y needs a nonzero x")
    return H.T @ x / nx


def canonical_sign(x, y):
    """Flip ``(x, y)`` together so that sum(x) >= 0, ties broken by the largest |x_i|."""
    total = float(np.sum(x))
    if total < 0 or (total == 0 and x.size and x[np.argmax(np.abs(x))] < 0):
        return -x, -y
    return x, y


def procedure(H, config: SparseSvdConfig = SparseSvdConfig(), trace: list | None = None) -> SparseFactor:
    """Sparse left / dense right singular triple of ``H``.

    If ``trace`` is a list, the ``(x, y)`` iterates are appended to it,
    starting with the dominant pair.
    """
    H = np.asarray(H, dtype=float)
    x, y, _ = dominant_pair(H)
    if trace is not None:
        trace.append((x.copy(), y.copy()))
    converged = False
    it = 0
    for it in range(1, config.max_iterations + 1):
        x_new = update_x(H, y, config.alpha)
        if not np.any(x_new):
            log.debug("l1 step zeroed x at iteration %d", it)
            return SparseFactor(
                x=np.zeros(H.shape[0]), y=y / np.linalg.norm(y), sigma=0.0,
                iterations=it, converged=False, zero_solution=True,
            )
        y = update_y(H, x_new)
        step = np.linalg.norm(x_new - x)
        x = x_new
        if trace is not None:
            trace.append((x.copy(), y.copy()))
        if step < config.epsilon:
            converged = True
            break
    if not converged:
        log.warning("sparse rank-one procedure stopped after %d iterations", it)
    x1 = x / np.linalg.norm(x)
    ny = np.linalg.norm(y)
    if ny == 0.0:
        raise ZeroVector("right vector vanished")
    y1 = y / ny
    x1, y1 = canonical_sign(x1, y1)
    # y is built from H^T x, so x1^T H y1 = ||H^T x1||^2 / ||H^T x1|| >= 0.
    sigma = float(x1 @ H @ y1)
    return SparseFactor(x=x1, y=y1, sigma=sigma, iterations=it, converged=converged)
