"""Stochastic PCC voltage model.

The voltage is regressed on net power through the origin; the residuals are
split by cluster and sign, and each subset gets a gamma fit. The model reads

    v - reference = beta * p + sum_k (pi_k+ * u_k+ - pi_k- * u_k-)

where ``reference`` is the nominal voltage removed before fitting (0 when
the input is already a deviation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AllZeroPower, EmptyDistribution, PvVoltError, ShapeError
from .gamma_mle import GammaParams, fit_gamma

PLUS = "+"
MINUS = "-"
SIGNS = (PLUS, MINUS)

SUM = "sum"
MIXTURE = "mixture"
MODES = (SUM, MIXTURE)

DEFAULT_SAMPLE_COUNT = 10**6
MIN_SAMPLE_COUNT = 10**4


@dataclass(frozen=True)
class Component:
    k: int
    sign: str
    weight: float
    count: int
    params: GammaParams | None = None

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "s": self.sign,
            "pi": self.weight,
            "lambda": None if self.params is None else self.params.shape,
            "theta": None if self.params is None else self.params.scale,
            "n": self.count,
        }


@dataclass(frozen=True)
class VoltageModel:
    beta: float
    components: tuple
    reference: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        total = math.fsum(c.weight for c in self.components)
        if self.components and abs(total - 1.0) > 1e-12:
            raise ValueError(f"component weights sum to {total!r}, not 1")
        for c in self.components:
            empty = c.count == 0
            if c.weight < 0 or empty != (c.weight == 0) or (c.params is None and not empty):
                raise ValueError(f"component ({c.k}, {c.sign}) has inconsistent weight/params")

    def component(self, k: int, sign: str) -> Component:
        for c in self.components:
            if c.k == k and c.sign == sign:
                return c
        raise KeyError((k, sign))

    @property
    def weight_sum(self) -> float:
        return math.fsum(c.weight for c in self.components)

    def to_json(self) -> dict:
        return {
            "beta": self.beta,
            "reference": self.reference,
            "components": [c.to_json() for c in self.components],
        }

    @classmethod
    def from_json(cls, data: dict) -> "VoltageModel":
        comps = []
        for c in data["components"]:
            params = None if c["lambda"] is None else GammaParams(c["lambda"], c["theta"])
            comps.append(Component(int(c["k"]), c["s"], float(c["pi"]), int(c["n"]), params))
        return cls(float(data["beta"]), tuple(comps), float(data.get("reference", 0.0)))


class SubsetFitError(PvVoltError):
    def __init__(self, k, sign, cause):
        self.k, self.sign, self.cause = k, sign, cause
        super().__init__(f"gamma fit failed for subset ({k}, {sign}): {cause}")


def fit_beta(P, V) -> float:
    """Least-squares slope through the origin, ``sum(v p) / sum(p^2)``."""
    p = np.asarray(P, dtype=float)
    v = np.asarray(V, dtype=float)
    if p.shape != v.shape:
        raise ShapeError(f"power {p.shape} and voltage {v.shape} differ in shape")
    pp = math.fsum((p * p).ravel())
    if pp == 0.0:
        raise AllZeroPower("all power samples are zero")
    return math.fsum((v * p).ravel()) / pp


def residuals(P, V, beta: float, reference: float = 0.0) -> np.ndarray:
    return np.asarray(V, dtype=float) - reference - beta * np.asarray(P, dtype=float)


def partition_residuals(P, V, beta: float, clusters: Sequence, reference: float = 0.0) -> dict:
    """Map ``(k, sign)`` to the absolute residuals of the cells in that subset.

    ``clusters`` lists day indices (rows of ``P``) per cluster, numbered from
    ``k = 1``. Zero residuals go to the ``+`` subset.
    """
    r = residuals(P, V, beta, reference)
    m = r.shape[0]
    out = {}
    for k, days in enumerate(clusters, start=1):
        days = np.asarray(days, dtype=int)
        if days.size and (days.min() < 0 or days.max() >= m):
            raise IndexError(f"cluster {k} references days outside [0, {m})")
        cells = r[days].ravel()
        out[(k, PLUS)] = np.abs(cells[cells >= 0])
        out[(k, MINUS)] = np.abs(cells[cells < 0])
    return out


def fit_model(P, V, clusters: Sequence, reference: float = 0.0, beta: float | None = None) -> VoltageModel:
    """Regression slope, subset weights and per-subset gamma fits for one consumer."""
    p = np.asarray(P, dtype=float)
    v = np.asarray(V, dtype=float)
    if beta is None:
        beta = fit_beta(p, v - reference)
    subsets = partition_residuals(p, v, beta, clusters, reference)
    total = sum(s.size for s in subsets.values())
    if total == 0:
        raise EmptyDistribution("no cells fall inside any cluster")
    comps = []
    for (k, sign), values in subsets.items():
        count = int(values.size)
        weight = count / total
        params = None
        if count:
            # An exactly zero residual has no gamma likelihood; it still counts toward the weight.
            positive = values[values > 0]
            try:
                params = fit_gamma(positive / weight)
            except PvVoltError as exc:
                raise SubsetFitError(k, sign, exc) from exc
        comps.append(Component(k, sign, weight, count, params))
    return VoltageModel(float(beta), tuple(comps), float(reference))


# --- Monte-Carlo distribution of the residual term -------------------------


@dataclass(frozen=True)
class CompositeDistribution:
    """Sorted Monte-Carlo draws of ``n = sum pi+ u+ - pi- u-``."""

    samples: np.ndarray
    seed: int | None = None
    mode: str = SUM
    bandwidth: float = field(init=False)

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=float).ravel())
        if s.size == 0:
            raise EmptyDistribution("composite distribution has no samples")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        sd = float(np.std(s, ddof=1)) if s.size > 1 else 0.0
        object.__setattr__(self, "bandwidth", 1.06 * sd * s.size ** (-0.2))

    @classmethod
    def from_samples(cls, samples, seed=None, mode=SUM) -> "CompositeDistribution":
        return cls(np.asarray(samples, dtype=float), seed, mode)

    @property
    def count(self) -> int:
        return self.samples.size

    def cdf(self, z):
        return cdf(self, z)

    def pdf(self, z):
        return cdf_derivative(self, z)


def build_composite(
    model: VoltageModel, sample_count: int = DEFAULT_SAMPLE_COUNT, seed=0, mode: str = SUM
) -> CompositeDistribution:
    """Draw ``sample_count`` realizations of the residual term.

    In ``sum`` mode every nonempty component contributes an independent draw
    to each realization. In ``mixture`` mode each realization picks one
    component with probability equal to its weight.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if sample_count < MIN_SAMPLE_COUNT:
        raise ValueError(f"sample_count must be >= {MIN_SAMPLE_COUNT}")
    active = [c for c in model.components if c.params is not None and c.weight > 0]
    if not active:
        raise EmptyDistribution("model has no fitted components")
    ss = np.random.SeedSequence(seed)
    streams = [np.random.default_rng(s) for s in ss.spawn(len(active) + 1)]
    draws = [
        (1.0 if c.sign == PLUS else -1.0) * c.weight * streams[i].gamma(c.params.shape, c.params.scale, sample_count)
        for i, c in enumerate(active)
    ]
    if mode == SUM:
        n = np.sum(draws, axis=0)
    else:
        weights = np.array([c.weight for c in active])
        pick = streams[-1].choice(len(active), size=sample_count, p=weights / weights.sum())
        n = np.asarray(draws)[pick, np.arange(sample_count)]
    return CompositeDistribution(n, seed, mode)


def cdf(dist: CompositeDistribution, z):
    """Right-continuous empirical CDF."""
    return np.searchsorted(dist.samples, z, side="right") / dist.count


def cdf_derivative(dist: CompositeDistribution, z, floor: float = 1e-12):
    """Centered difference of the empirical CDF over the Silverman bandwidth."""
    h = dist.bandwidth
    if h <= 0:
        return np.maximum(np.zeros_like(np.asarray(z, dtype=float)), floor)
    return np.maximum((cdf(dist, np.add(z, h)) - cdf(dist, np.subtract(z, h))) / (2.0 * h), floor)


def qq_points(sample_a, sample_b) -> np.ndarray:
    """Order-statistic pairs ``(a_(i), b_(i))`` as an ``(n, 2)`` array."""
    a = np.sort(np.asarray(sample_a, dtype=float).ravel())
    b = np.sort(np.asarray(sample_b, dtype=float).ravel())
    if a.size != b.size:
        raise ShapeError(f"Q-Q samples differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise ShapeError("Q-Q needs at least two points")
    return np.column_stack([a, b])


def qq_max_deviation(points: np.ndarray, trim: float = 0.0) -> float:
    """Largest ``|y - x|`` over the Q-Q points, ignoring a ``trim`` fraction in each tail."""
    n = points.shape[0]
    lo = int(math.floor(trim * n))
    hi = n - lo
    sel = points[lo:hi]
    return float(np.max(np.abs(sel[:, 1] - sel[:, 0])))


def interquartile_range(sample) -> float:
    q1, q3 = np.percentile(np.asarray(sample, dtype=float), [25, 75])
    return float(q3 - q1)


def ks_distance(sample_a, sample_b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    a = np.sort(np.asarray(sample_a, dtype=float).ravel())
    b = np.sort(np.asarray(sample_b, dtype=float).ravel())
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))
