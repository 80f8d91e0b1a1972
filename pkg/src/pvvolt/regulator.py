"""Load-tap-changer control of a PCC voltage trace.

The tap acts as a multiplicative gain held constant over windows of
``window_minutes``. The conventional controller divides by the window's
reference voltage. The stochastic controller divides by the voltage the
fitted model expects, ``reference + beta * p(T) + gamma``, where ``gamma`` is
the mean of the model residual conditioned on a probability band around the
observed residual ``v_d(T)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DivisionNearZero,
    EmptyConditioningSet,
    EmptyDistribution,
    NonPositiveVoltage,
    ShapeError,
)
from .voltage_model import CompositeDistribution, cdf, cdf_derivative

MEAN = "mean"
START = "start"
SAMPLING_MODES = (MEAN, START)

TAP_STEP = 0.00625
TAP_LIMIT = 0.10


@dataclass(frozen=True)
class RegulatorConfig:
    """Controller settings.

    ``sampling`` picks the window reference: the window average (``mean``)
    or the first minute of the window (``start``). ``tap_step`` rounds the
    gain to discrete taps within +/-10 %; ``None`` keeps it continuous.
    """

    window_minutes: int = 30
    delta: float = 0.05
    composite: CompositeDistribution | None = None
    beta: float = 0.0
    reference: float = 0.0
    sampling: str = MEAN
    tap_step: float | None = None

    def __post_init__(self):
        if int(self.window_minutes) != self.window_minutes or self.window_minutes < 1:
            raise ConfigError(f"RegulatorConfig.window_minutes must be an integer >= 1, got {self.window_minutes}")
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ConfigError(f"RegulatorConfig.delta must be > 0, got {self.delta}")
        if self.sampling not in SAMPLING_MODES:
            raise ConfigError(f"RegulatorConfig.sampling must be one of {SAMPLING_MODES}, got {self.sampling!r}")
        if self.tap_step is not None and not self.tap_step > 0:
            raise ConfigError(f"RegulatorConfig.tap_step must be > 0, got {self.tap_step}")


@dataclass(frozen=True)
class RegulatorTrace:
    output_voltage: np.ndarray
    ltc_position: np.ndarray
    window_boundaries: list
    windows: list = field(default_factory=list)


def window_bounds(length: int, window_minutes: int) -> list:
    return [(s, min(s + window_minutes, length)) for s in range(0, length, window_minutes)]


def _reference(x: np.ndarray, start: int, stop: int, sampling: str) -> float:
    return float(x[start]) if sampling == START else float(np.mean(x[start:stop]))


def _quantize(ltc: float, step: float | None) -> float:
    if step is None:
        return ltc
    taps = round((ltc - 1.0) / step)
    limit = round(TAP_LIMIT / step)
    return 1.0 + step * max(-limit, min(limit, taps))


def _check_voltage(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ShapeError("voltage trace must be a non-empty vector")
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise NonPositiveVoltage("voltage trace must be finite and strictly positive")
    return v


def _trace(v: np.ndarray, bounds: list, gains: list, windows: list) -> RegulatorTrace:
    ltc = np.empty_like(v)
    for (start, stop), g in zip(bounds, gains):
        ltc[start:stop] = g
    return RegulatorTrace(ltc * v, ltc, [b[0] for b in bounds], windows)


def conventional_regulator(v, config: RegulatorConfig = RegulatorConfig()) -> RegulatorTrace:
    v = _check_voltage(v)
    bounds = window_bounds(v.size, config.window_minutes)
    gains, windows = [], []
    for start, stop in bounds:
        v_ref = _reference(v, start, stop, config.sampling)
        gains.append(_quantize(1.0 / v_ref, config.tap_step))
        windows.append({"start": start, "stop": stop, "v_ref": v_ref})
    return _trace(v, bounds, gains, windows)


def _quantile(samples: np.ndarray, prob: float) -> float:
    """``min{z : F(z) >= prob}`` for the empirical CDF of sorted ``samples``."""
    n = samples.size
    # Guard against p*n landing a hair above an integer through rounding.
    idx = int(math.ceil(prob * n - 1e-9)) - 1
    return float(samples[min(max(idx, 0), n - 1)])


def quantile_window(dist: CompositeDistribution, v_d: float, delta: float) -> tuple[float, float]:
    """Band ``(n1, n2)`` whose CDF levels sit ``delta * F'(v_d)`` either side of ``F(v_d)``.

    Levels are clamped to [0, 1]. ``n2`` is the supremum of ``{z : F(z) < level}``,
    which on a step CDF is the quantile at that level.
    """
    if dist is None or dist.count == 0:
        raise EmptyDistribution("quantile_window needs a nonempty distribution")
    if not delta > 0:
        raise ValueError("delta must be > 0")
    f = float(cdf(dist, v_d))
    margin = delta * float(cdf_derivative(dist, v_d))
    lo = min(max(f - margin, 0.0), 1.0)
    hi = min(max(f + margin, 0.0), 1.0)
    return _quantile(dist.samples, lo), _quantile(dist.samples, hi)


def conditional_mean(dist: CompositeDistribution, n1: float, n2: float) -> float:
    """Mean of the samples in ``(n1, n2]``."""
    s = dist.samples
    lo = np.searchsorted(s, n1, side="right")
    hi = np.searchsorted(s, n2, side="right")
    if hi <= lo:
        raise EmptyConditioningSet(
            f"no samples in ({n1:.6g}, {n2:.6g}]; delta is too small for {dist.count} samples"
        )
    return float(np.mean(s[lo:hi]))


def stochastic_regulator(v, p, config: RegulatorConfig) -> RegulatorTrace:
    v = _check_voltage(v)
    p = np.asarray(p, dtype=float)
    if p.shape != v.shape:
        raise ShapeError(f"power {p.shape} and voltage {v.shape} differ in shape")
    if config.composite is None:
        raise EmptyDistribution("stochastic regulator needs a composite distribution")
    bounds = window_bounds(v.size, config.window_minutes)
    gains, windows = [], []
    for start, stop in bounds:
        v_ref = _reference(v, start, stop, config.sampling)
        p_ref = _reference(p, start, stop, config.sampling)
        predicted = config.reference + config.beta * p_ref
        v_d = v_ref - predicted
        n1, n2 = quantile_window(config.composite, v_d, config.delta)
        gamma = conditional_mean(config.composite, n1, n2)
        denom = predicted + gamma
        if abs(denom) < 1e-9:
            raise DivisionNearZero(f"expected voltage {denom:.3g} too close to zero in window {start}")
        gains.append(_quantize(1.0 / denom, config.tap_step))
        windows.append(
            {"start": start, "stop": stop, "v_ref": v_ref, "p_ref": p_ref,
             "v_d": v_d, "n1": n1, "n2": n2, "gamma": gamma}
        )
    return _trace(v, bounds, gains, windows)


def ltc_variation(trace) -> float:
    """Total tap movement ``sum_t |LTC(t) - LTC(t-1)|``."""
    ltc = np.asarray(getattr(trace, "ltc_position", trace), dtype=float)
    if ltc.size < 2:
        raise ShapeError("ltc_variation needs at least two positions")
    return float(np.sum(np.abs(np.diff(ltc))))
