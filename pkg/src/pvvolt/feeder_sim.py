"""Synthetic per-minute net power and PCC voltage on a radial low-voltage feeder.

Bus voltages follow the squared-magnitude drop along the line,

    V[k+1]**2 = V[k]**2 - 2 * (R[k] * P[k, k+1] + X[k] * Q[k, k+1]),

where ``P[k, k+1]`` is everything drawn downstream of segment ``k``. Loads and
cloud attenuation are discrete Markov chains stepped once per minute.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import KW, PU_VOLT, DayMatrix, save_day_matrix
from .errors import NonMonotonic, NonPositiveSquaredVoltage, ShapeError

# Table I: capacity (kW) and impedance to the transformer (ohm), in table order.
TABLE_ONE_CAPACITY_KW = (1.9, 3.9, 7.3, 11.6, 9.2)
TABLE_ONE_IMPEDANCE_OHM = (0.077, 0.060, 0.053, 0.025, 0.011)

DEFAULT_BASE_KVA = 10.0
DEFAULT_BASE_VOLTAGE_V = 240.0
DEFAULT_LOAD_LEVELS = (0.4, 0.7, 1.0, 1.3, 1.6)
DEFAULT_ATTENUATION_STATES = (1.0, 0.6, 0.2)


@dataclass(frozen=True)
class Segment:
    resistance_pu: float
    reactance_pu: float = 0.0


@dataclass(frozen=True)
class Consumer:
    id: str
    pv_capacity_kw: float


@dataclass(frozen=True)
class FeederTopology:
    """Chain feeder. ``segments[k]`` feeds ``consumers[k]`` from the bus upstream of it.

    ``reactive_compensator_kvar`` is carried for completeness and never used.
    """

    segments: tuple
    consumers: tuple
    source_voltage_pu: float = 1.0
    base_kva: float = DEFAULT_BASE_KVA
    reactive_compensator_kvar: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "consumers", tuple(self.consumers))
        if not self.segments or len(self.segments) != len(self.consumers):
            raise ShapeError(
                f"need equal, positive numbers of segments and consumers, "
                f"got {len(self.segments)} and {len(self.consumers)}"
            )
        for k, s in enumerate(self.segments):
            if s.resistance_pu < 0 or s.reactance_pu < 0:
                raise ValueError(f"segment {k} has negative impedance")
        if self.source_voltage_pu <= 0:
            raise ValueError("source voltage must be positive")
        if self.base_kva <= 0:
            raise ValueError("base power must be positive")
        ids = [c.id for c in self.consumers]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate consumer ids in {ids}")

    @property
    def N(self) -> int:
        return len(self.consumers)

    @property
    def resistances(self) -> np.ndarray:
        return np.array([s.resistance_pu for s in self.segments])

    @property
    def reactances(self) -> np.ndarray:
        return np.array([s.reactance_pu for s in self.segments])

    @property
    def cumulative_resistance(self) -> np.ndarray:
        return np.cumsum(self.resistances)

    @property
    def cumulative_reactance(self) -> np.ndarray:
        return np.cumsum(self.reactances)


def segment_impedances_from_cumulative(cumulative) -> np.ndarray:
    """Split impedances-to-transformer into per-segment impedances.

    >>> segment_impedances_from_cumulative([0.5])
    array([0.5])
    """
    z = np.sort(np.asarray(cumulative, dtype=float))
    if z.size == 0 or np.any(z <= 0):
        raise ValueError("cumulative impedances must all be positive")
    if np.any(np.diff(z) <= 0):
        raise NonMonotonic(f"cumulative impedances are not distinct: {z.tolist()}")
    return np.diff(z, prepend=0.0)


def ohms_to_pu(ohms, base_kva: float = DEFAULT_BASE_KVA, base_voltage_v: float = DEFAULT_BASE_VOLTAGE_V):
    z_base = base_voltage_v**2 / (base_kva * 1000.0)
    return np.asarray(ohms, dtype=float) / z_base


def topology_from_table(
    capacities_kw: Sequence[float],
    impedances_ohm: Sequence[float],
    ids: Sequence[str] | None = None,
    *,
    base_kva: float = DEFAULT_BASE_KVA,
    base_voltage_v: float = DEFAULT_BASE_VOLTAGE_V,
    x_over_r: float = 0.0,
    source_voltage_pu: float = 1.0,
) -> FeederTopology:
    """Build a chain feeder from per-consumer impedance-to-transformer values.

    Consumers are placed in ascending impedance order, closest to the
    transformer first. Each impedance magnitude is split into R and X with the
    given X/R ratio.
    """
    if len(capacities_kw) != len(impedances_ohm):
        raise ShapeError("capacities and impedances differ in length")
    if ids is None:
        ids = [f"{c:g}kW" for c in capacities_kw]
    order = np.argsort(impedances_ohm, kind="stable")
    z_seg = ohms_to_pu(segment_impedances_from_cumulative(impedances_ohm), base_kva, base_voltage_v)
    r = z_seg / np.hypot(1.0, x_over_r)
    x = r * x_over_r
    segments = [Segment(float(ri), float(xi)) for ri, xi in zip(r, x)]
    consumers = [Consumer(str(ids[i]), float(capacities_kw[i])) for i in order]
    return FeederTopology(segments, consumers, source_voltage_pu=source_voltage_pu, base_kva=base_kva)


def table_one_topology(**kwargs) -> FeederTopology:
    return topology_from_table(TABLE_ONE_CAPACITY_KW, TABLE_ONE_IMPEDANCE_OHM, **kwargs)


def _squared_voltages(topology: FeederTopology, p_pu: np.ndarray, q_pu: np.ndarray) -> np.ndarray:
    # Downstream aggregate on each segment: reversed cumulative sum over the last axis.
    flow_p = np.cumsum(p_pu[..., ::-1], axis=-1)[..., ::-1]
    flow_q = np.cumsum(q_pu[..., ::-1], axis=-1)[..., ::-1]
    drop = 2.0 * (topology.resistances * flow_p + topology.reactances * flow_q)
    return topology.source_voltage_pu**2 - np.cumsum(drop, axis=-1)


def solve_feeder_voltages(topology: FeederTopology, net_powers, reactive_powers=None) -> np.ndarray:
    """Per-unit PCC voltage of every consumer for one snapshot of net powers (kW)."""
    p = np.asarray(net_powers, dtype=float)
    q = np.zeros_like(p) if reactive_powers is None else np.asarray(reactive_powers, dtype=float)
    if p.shape != (topology.N,) or q.shape != (topology.N,):
        raise ShapeError(f"expected {topology.N} net and reactive powers, got {p.shape} and {q.shape}")
    v2 = _squared_voltages(topology, p / topology.base_kva, q / topology.base_kva)
    bad = np.flatnonzero(v2 <= 0)
    if bad.size:
        k = int(bad[0])
        raise NonPositiveSquaredVoltage(
            f"squared voltage {v2[k]:.6g} <= 0 at consumer {topology.consumers[k].id}", bus=k
        )
    return np.sqrt(v2)


# --- stochastic processes ---------------------------------------------------


def clear_sky_profile(
    minutes_per_day: int = 1440, sunrise: int = 360, sunset: int = 1110, peak: float = 0.85
) -> np.ndarray:
    """Output per kW of installed capacity; zero outside ``[sunrise, sunset)``."""
    t = np.arange(minutes_per_day) + 0.5
    shape = np.sin(np.pi * (t - sunrise) / (sunset - sunrise))
    profile = peak * np.clip(shape, 0.0, None) ** 1.2
    profile[(t < sunrise) | (t >= sunset)] = 0.0
    return profile


def persistent_transition(states: int, stay: float) -> np.ndarray:
    """Birth-death chain that stays put with probability ``stay``."""
    a = np.zeros((states, states))
    for i in range(states):
        neighbours = [j for j in (i - 1, i + 1) if 0 <= j < states]
        a[i, i] = stay
        for j in neighbours:
            a[i, j] = (1.0 - stay) / len(neighbours)
    return a


def default_cloud_transition() -> np.ndarray:
    return np.array(
        [
            [0.990, 0.008, 0.002],
            [0.030, 0.955, 0.015],
            [0.010, 0.030, 0.960],
        ]
    )


def _check_transition(name: str, a: np.ndarray, states: int) -> None:
    if a.shape != (states, states):
        raise ShapeError(f"{name} must be {states}x{states}, got {a.shape}")
    if np.any(a < 0) or np.any(np.abs(a.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError(f"{name} is not row-stochastic")


@dataclass(frozen=True)
class ConsumerProcessParams:
    """Load and PV processes for one consumer.

    ``pv_clear_sky_profile`` is output per kW of capacity, so a consumer's
    clear-sky generation is the profile times its capacity.
    """

    load_mean_kw: float
    load_markov_transition: np.ndarray
    pv_clear_sky_profile: np.ndarray
    cloud_markov_transition: np.ndarray = field(default_factory=default_cloud_transition)
    seed: int = 0
    load_levels: tuple = DEFAULT_LOAD_LEVELS
    attenuation_states: tuple = DEFAULT_ATTENUATION_STATES

    def __post_init__(self):
        for name in ("load_markov_transition", "pv_clear_sky_profile", "cloud_markov_transition"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "load_levels", tuple(float(x) for x in self.load_levels))
        object.__setattr__(self, "attenuation_states", tuple(float(x) for x in self.attenuation_states))
        if self.load_mean_kw < 0:
            raise ValueError("load_mean_kw must be >= 0")
        _check_transition("load_markov_transition", self.load_markov_transition, len(self.load_levels))
        _check_transition("cloud_markov_transition", self.cloud_markov_transition, len(self.attenuation_states))
        if any(not 0.0 <= a <= 1.0 for a in self.attenuation_states):
            raise ValueError("attenuation states must lie in [0, 1]")
        if self.pv_clear_sky_profile.ndim != 1 or np.any(self.pv_clear_sky_profile < 0):
            raise ValueError("clear-sky profile must be a non-negative vector")


def default_process_params(
    minutes_per_day: int = 1440, load_mean_kw: float = 0.8, seed: int = 0
) -> ConsumerProcessParams:
    return ConsumerProcessParams(
        load_mean_kw=load_mean_kw,
        load_markov_transition=persistent_transition(len(DEFAULT_LOAD_LEVELS), 0.9),
        pv_clear_sky_profile=clear_sky_profile(minutes_per_day),
        seed=seed,
    )


def stationary_distribution(a: np.ndarray) -> np.ndarray:
    s = a.shape[0]
    # Solve pi (A - I) = 0 with sum(pi) = 1 in the least-squares sense.
    lhs = np.vstack([(a - np.eye(s)).T, np.ones(s)])
    rhs = np.zeros(s + 1)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _run_chains(transition: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Step one chain per row of ``uniforms`` (days x minutes); returns state indices."""
    cum = np.cumsum(transition, axis=1)
    cum[:, -1] = 1.0
    start = np.cumsum(stationary_distribution(transition))
    start[-1] = 1.0
    days, minutes = uniforms.shape
    states = np.empty((days, minutes), dtype=np.intp)
    current = np.searchsorted(start, uniforms[:, 0], side="right")
    states[:, 0] = current
    for t in range(1, minutes):
        current = (cum[current] <= uniforms[:, t, None]).sum(axis=1)
        states[:, t] = current
    return states


@dataclass(frozen=True)
class SimulationResult:
    ids: tuple
    power: tuple
    voltage: tuple

    def __post_init__(self):
        for p, v in zip(self.power, self.voltage):
            if p.shape != v.shape:
                raise ShapeError("power and voltage matrices differ in shape")

    def consumer(self, key) -> tuple[DayMatrix, DayMatrix]:
        k = self.ids.index(key) if isinstance(key, str) else key
        return self.power[k], self.voltage[k]


def _day_uniforms(seed: int, day: int, labels: Sequence[int], minutes: int) -> np.ndarray:
    out = np.empty((len(labels), minutes))
    for row, label in enumerate(labels):
        out[row] = np.random.default_rng([seed, day, label]).random(minutes)
    return out


def simulate_days(
    topology: FeederTopology,
    params: Sequence[ConsumerProcessParams],
    days: int,
    minutes_per_day: int,
    seed: int,
    *,
    shared_cloud: bool = True,
) -> SimulationResult:
    """Simulate ``days`` x ``minutes_per_day`` of net power and voltage for every consumer.

    Each day draws from its own stream derived from ``(seed, day, label)``,
    so days can be produced in any order with identical results. With
    ``shared_cloud`` one weather chain (taken from the first consumer's
    parameters) attenuates every PV system on the feeder.
    """
    if days < 1 or minutes_per_day < 2:
        raise ValueError("need days >= 1 and minutes_per_day >= 2")
    if len(params) != topology.N:
        raise ShapeError(f"{len(params)} process parameter sets for {topology.N} consumers")
    for k, prm in enumerate(params):
        if prm.pv_clear_sky_profile.shape != (minutes_per_day,):
            raise ShapeError(f"consumer {k}: clear-sky profile has {prm.pv_clear_sky_profile.size} entries")

    n_cons = topology.N
    # Stream labels: load chains use 2*s+1, cloud chains 2*s+2, shared weather 0.
    load_labels = [2 * p.seed + 1 for p in params]
    cloud_labels = [0] if shared_cloud else [2 * p.seed + 2 for p in params]
    labels = load_labels + cloud_labels
    if len(set(labels)) != len(labels):
        raise ValueError("consumer process seeds must be distinct")
    uniforms = np.stack([_day_uniforms(seed, d, labels, minutes_per_day) for d in range(days)])

    power = np.empty((n_cons, days, minutes_per_day))
    for k, prm in enumerate(params):
        load_state = _run_chains(prm.load_markov_transition, uniforms[:, k])
        load = prm.load_mean_kw * np.asarray(prm.load_levels)[load_state]
        cloud_prm = params[0] if shared_cloud else prm
        c = 0 if shared_cloud else k
        if k == 0 or not shared_cloud:
            cloud_state = _run_chains(cloud_prm.cloud_markov_transition, uniforms[:, n_cons + c])
            attenuation = np.asarray(cloud_prm.attenuation_states)[cloud_state]
        generation = attenuation * prm.pv_clear_sky_profile * topology.consumers[k].pv_capacity_kw
        power[k] = load - generation

    p_pu = np.moveaxis(power, 0, -1) / topology.base_kva
    v2 = _squared_voltages(topology, p_pu, np.zeros_like(p_pu))
    if np.any(v2 <= 0):
        d, t, k = (int(i) for i in np.argwhere(v2 <= 0)[0])
        raise NonPositiveSquaredVoltage(
            f"squared voltage <= 0 at consumer {topology.consumers[k].id}, day {d}, minute {t}",
            bus=k,
            day=d,
            minute=t,
        )
    voltage = np.moveaxis(np.sqrt(v2), -1, 0)
    return SimulationResult(
        ids=tuple(c.id for c in topology.consumers),
        power=tuple(DayMatrix(power[k], KW) for k in range(n_cons)),
        voltage=tuple(DayMatrix(voltage[k], PU_VOLT) for k in range(n_cons)),
    )


def write_result(result: SimulationResult, directory) -> list[Path]:
    directory = Path(directory)
    written = []
    for cid, p, v in zip(result.ids, result.power, result.voltage):
        for stem, matrix in (("power", p), ("voltage", v)):
            path = directory / f"{stem}_{cid}.csv"
            save_day_matrix(path, matrix)
            written.append(path)
    return written
