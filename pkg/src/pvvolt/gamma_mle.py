"""Gamma maximum-likelihood fitting in the shape/scale parameterization.

Density: ``w**(shape-1) * exp(-w/scale) / (Gamma(shape) * scale**shape)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSample, DomainError, NoConvergence, NonPositive

SHAPE_MIN = 1e-6
SHAPE_MAX = 1e6

# Bernoulli-number coefficients B_2k / (2k) for the digamma asymptotic series.
_DIGAMMA_COEF = (
    1.0 / 12,
    -1.0 / 120,
    1.0 / 252,
    -1.0 / 240,
    1.0 / 132,
    -691.0 / 32760,
    1.0 / 12,
)
# B_2k for the trigamma series sum B_2k / z**(2k+1).
_TRIGAMMA_COEF = (
    1.0 / 6,
    -1.0 / 30,
    1.0 / 42,
    -1.0 / 30,
    5.0 / 66,
    -691.0 / 2730,
    7.0 / 6,
)
_SHIFT_TO = 10.0


def digamma(z: float) -> float:
    """Logarithmic derivative of the gamma function for ``z > 0``."""
    z = float(z)
    if not z > 0 or not math.isfinite(z):
        raise DomainError(f"digamma needs a finite z > 0, got {z}")
    acc = 0.0
    while z < _SHIFT_TO:
        acc -= 1.0 / z
        z += 1.0
    inv2 = 1.0 / (z * z)
    series = 0.0
    power = inv2
    for c in _DIGAMMA_COEF:
        series += c * power
        power *= inv2
    return acc + math.log(z) - 0.5 / z - series


def trigamma(z: float) -> float:
    z = float(z)
    if not z > 0 or not math.isfinite(z):
        raise DomainError(f"trigamma needs a finite z > 0, got {z}")
    acc = 0.0
    while z < _SHIFT_TO:
        acc += 1.0 / (z * z)
        z += 1.0
    inv = 1.0 / z
    inv2 = inv * inv
    series = 0.0
    power = inv2 * inv
    for c in _TRIGAMMA_COEF:
        series += c * power
        power *= inv2
    return acc + inv + 0.5 * inv2 + series


@dataclass(frozen=True)
class GammaParams:
    shape: float
    scale: float

    def __post_init__(self):
        for name in ("shape", "scale"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"GammaParams.{name} must be finite and > 0, got {v}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale

    @property
    def variance(self) -> float:
        return self.shape * self.scale**2

    @property
    def rate(self) -> float:
        return 1.0 / self.scale


def _positive_samples(samples) -> np.ndarray:
    w = np.asarray(samples, dtype=float).ravel()
    if w.size == 0:
        raise DegenerateSample("empty sample")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise NonPositive("gamma samples must be finite and > 0")
    return w


def likelihood_expression(samples, shape: float, theta: float) -> float:
    """``(shape-1) sum log w - theta sum w + n shape log theta - n log Gamma(shape)``.

    Here ``theta`` multiplies the samples, i.e. it acts as a rate.
    """
    w = _positive_samples(samples)
    n = w.size
    return (
        (shape - 1.0) * math.fsum(np.log(w))
        - theta * math.fsum(w)
        + n * shape * math.log(theta)
        - n * math.lgamma(shape)
    )


def log_likelihood(samples, params: GammaParams) -> float:
    """Gamma log-likelihood of ``samples`` under shape/scale ``params``."""
    return likelihood_expression(samples, params.shape, params.rate)


def stationarity_residuals(samples, params: GammaParams) -> tuple[float, float]:
    """Residuals of the two likelihood equations at ``params``.

    ``sum log w - n log(scale) - n digamma(shape)`` and
    ``scale - sum w / (n shape)``; both vanish at the maximum.
    """
    w = _positive_samples(samples)
    n = w.size
    r_shape = math.fsum(np.log(w)) - n * math.log(params.scale) - n * digamma(params.shape)
    r_scale = params.scale - math.fsum(w) / (n * params.shape)
    return r_shape, r_scale


def minka_start(s: float) -> float:
    """Closed-form approximation to the shape given ``s = log(mean) - mean(log)``."""
    return (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)


def fit_gamma(samples, max_newton: int = 100, tol: float = 1e-14) -> GammaParams:
    """Maximum-likelihood shape and scale.

    Solves ``log(shape) - digamma(shape) = log(mean) - mean(log w)`` by Newton
    steps from Minka's starting point, falling back to bisection whenever a
    step leaves the bracket. The scale then follows as ``mean / shape``.
    """
    w = _positive_samples(samples)
    n = w.size
    if n < 2:
        raise DegenerateSample("need at least two samples")
    if np.all(w == w[0]):
        raise DegenerateSample("all samples are equal")
    mean = math.fsum(w) / n
    mean_log = math.fsum(np.log(w)) / n
    s = math.log(mean) - mean_log
    if not s > 0:
        # Jensen gap lost to rounding; the sample is effectively constant.
        raise DegenerateSample(f"log(mean) - mean(log) = {s:.3g} is not positive")

    def f(a):
        return math.log(a) - digamma(a) - s

    # f is strictly decreasing in the shape: f(lo) > 0 > f(hi) brackets the root.
    lo, hi = SHAPE_MIN, SHAPE_MAX
    if f(hi) > 0:
        raise NoConvergence(f"shape exceeds {SHAPE_MAX:g} (s = {s:.3g})")
    a = min(max(minka_start(s), lo), hi)
    for _ in range(max_newton):
        fa = f(a)
        if fa > 0:
            lo = a
        else:
            hi = a
        if abs(fa) <= tol * max(1.0, s):
            break
        step = fa / (1.0 / a - trigamma(a))
        a_new = a - step
        if not lo < a_new < hi:
            a_new = 0.5 * (lo + hi)
        if a_new == a:
            break
        a = a_new
    else:
        raise NoConvergence(f"shape Newton iteration did not converge in {max_newton} steps")
    return GammaParams(shape=a, scale=mean / a)


def sample_gamma(params: GammaParams, count: int, seed) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    return rng.gamma(params.shape, params.scale, size=count)
