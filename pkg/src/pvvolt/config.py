"""Run configuration: one JSON document, strictly validated."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import feeder_sim as fs
from .dataset import WINDOW_END, WINDOW_START
from .errors import ConfigError
from .regulator import RegulatorConfig
from .sparse_svd import SparseSvdConfig
from .voltage_model import MIN_SAMPLE_COUNT, MODES

SEED_ENV = "PVVOLT_SEED"
OUT_ENV = "PVVOLT_OUT"


@dataclass(frozen=True)
class ConsumerConfig:
    id: str
    pv_capacity_kw: float
    impedance_ohm: float
    load_mean_kw: float = 0.8


@dataclass(frozen=True)
class FeederConfig:
    consumers: tuple
    source_voltage_pu: float = 1.0
    base_kva: float = fs.DEFAULT_BASE_KVA
    base_voltage_v: float = fs.DEFAULT_BASE_VOLTAGE_V
    x_over_r: float = 0.0


@dataclass(frozen=True)
class ProcessConfig:
    days: int = 160
    minutes_per_day: int = 1440
    shared_cloud: bool = True
    load_stay_probability: float = 0.9
    load_levels: tuple = fs.DEFAULT_LOAD_LEVELS
    attenuation_states: tuple = fs.DEFAULT_ATTENUATION_STATES
    cloud_transition: tuple | None = None
    sunrise_minute: int = 360
    sunset_minute: int = 1110
    clear_sky_peak: float = 0.85


@dataclass(frozen=True)
class AnalysisConfig:
    window_start: int = WINDOW_START
    window_end: int = WINDOW_END


@dataclass(frozen=True)
class SparseSvdSection:
    alpha: float = 0.05
    epsilon: float = 1e-6
    max_iterations: int = 500


@dataclass(frozen=True)
class ClusteringConfig:
    max_clusters: int = 3
    spectrum_count: int = 10


@dataclass(frozen=True)
class ModelConfig:
    sample_count: int = 10**6
    mode: str = "sum"
    reference_voltage_pu: float = 1.0


@dataclass(frozen=True)
class RegulatorSection:
    consumer: str | None = None
    window_minutes: int = 30
    delta: float = 0.05
    sampling: str = "mean"
    tap_step: float | None = None
    midday_start: int = 660
    midday_end: int = 840


@dataclass(frozen=True)
class RunConfig:
    feeder: FeederConfig
    process: ProcessConfig = field(default_factory=ProcessConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    sparse_svd: SparseSvdSection = field(default_factory=SparseSvdSection)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    regulator: RegulatorSection = field(default_factory=RegulatorSection)
    seed: int = 0
    output_dir: str = "out"

    # --- derived objects ---------------------------------------------------

    @property
    def ids(self) -> list:
        return [c.id for c in self.topology().consumers]

    def topology(self) -> fs.FeederTopology:
        f = self.feeder
        return fs.topology_from_table(
            [c.pv_capacity_kw for c in f.consumers],
            [c.impedance_ohm for c in f.consumers],
            [c.id for c in f.consumers],
            base_kva=f.base_kva,
            base_voltage_v=f.base_voltage_v,
            x_over_r=f.x_over_r,
            source_voltage_pu=f.source_voltage_pu,
        )

    def process_params(self) -> list:
        """Process parameters in feeder order (ascending impedance)."""
        p = self.process
        by_id = {c.id: (i, c) for i, c in enumerate(self.feeder.consumers)}
        profile = fs.clear_sky_profile(p.minutes_per_day, p.sunrise_minute, p.sunset_minute, p.clear_sky_peak)
        load_t = fs.persistent_transition(len(p.load_levels), p.load_stay_probability)
        cloud_t = fs.default_cloud_transition() if p.cloud_transition is None else np.array(p.cloud_transition)
        out = []
        for consumer in self.topology().consumers:
            i, c = by_id[consumer.id]
            out.append(
                fs.ConsumerProcessParams(
                    load_mean_kw=c.load_mean_kw,
                    load_markov_transition=load_t,
                    pv_clear_sky_profile=profile,
                    cloud_markov_transition=cloud_t,
                    seed=i,
                    load_levels=p.load_levels,
                    attenuation_states=p.attenuation_states,
                )
            )
        return out

    def svd_config(self) -> SparseSvdConfig:
        s = self.sparse_svd
        return SparseSvdConfig(s.alpha, s.epsilon, s.max_iterations)

    def regulator_config(self, composite=None, beta=0.0, reference=0.0) -> RegulatorConfig:
        r = self.regulator
        return RegulatorConfig(
            window_minutes=r.window_minutes, delta=r.delta, composite=composite, beta=beta,
            reference=reference, sampling=r.sampling, tap_step=r.tap_step,
        )

    @property
    def regulated_consumer(self) -> str:
        if self.regulator.consumer is not None:
            return self.regulator.consumer
        # Default: the PCC farthest from the transformer.
        return self.ids[-1]

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


# --- loading -------------------------------------------------------------------

_SECTIONS = {
    "feeder": FeederConfig,
    "process": ProcessConfig,
    "analysis": AnalysisConfig,
    "sparse_svd": SparseSvdSection,
    "clustering": ClusteringConfig,
    "model": ModelConfig,
    "regulator": RegulatorSection,
}

# Names used in error messages, matching the objects each section feeds.
_DISPLAY = {
    "RunConfig": "RunConfig",
    "FeederConfig": "FeederTopology",
    "ConsumerConfig": "Consumer",
    "ProcessConfig": "ConsumerProcessParams",
    "AnalysisConfig": "Analysis",
    "SparseSvdSection": "SparseSvdConfig",
    "ClusteringConfig": "Clustering",
    "ModelConfig": "VoltageModel",
    "RegulatorSection": "RegulatorConfig",
}


def _build(cls, data, where: str):
    name = _DISPLAY[cls.__name__]
    if not isinstance(data, dict):
        raise ConfigError(f"{where or name}: expected an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {unknown}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"{name}.{f.name} is required")
            continue
        value = data[f.name]
        if cls is RunConfig and f.name in _SECTIONS:
            value = _build(_SECTIONS[f.name], value, f.name)
        elif cls is FeederConfig and f.name == "consumers":
            if not isinstance(value, list) or not value:
                raise ConfigError("FeederTopology.consumers must be a non-empty list")
            value = tuple(_build(ConsumerConfig, c, f"consumers[{i}]") for i, c in enumerate(value))
        elif isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[f.name] = value
    return cls(**kwargs)


def _require(ok: bool, message: str):
    if not ok:
        raise ConfigError(message)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def validate(cfg: RunConfig) -> RunConfig:
    """Re-check every module-level constraint; raises ``ConfigError``."""
    _require(_is_int(cfg.seed) and cfg.seed >= 0, "RunConfig.seed must be a non-negative integer")
    p, a, r, m = cfg.process, cfg.analysis, cfg.regulator, cfg.model
    _require(_is_int(p.days) and p.days >= 1, "ConsumerProcessParams.days must be >= 1")
    _require(_is_int(p.minutes_per_day) and p.minutes_per_day >= 2, "ConsumerProcessParams.minutes_per_day must be >= 2")
    _require(0 <= p.load_stay_probability <= 1, "ConsumerProcessParams.load_stay_probability must lie in [0, 1]")
    _require(0 <= p.sunrise_minute < p.sunset_minute <= p.minutes_per_day, "ConsumerProcessParams: need 0 <= sunrise < sunset <= minutes_per_day")
    _require(
        _is_int(a.window_start) and _is_int(a.window_end) and 0 <= a.window_start < a.window_end <= p.minutes_per_day,
        "Analysis.window_start/window_end must satisfy 0 <= start < end <= minutes_per_day",
    )
    _require(a.window_end - a.window_start >= 2, "Analysis window must span at least two minutes")
    _require(_is_int(cfg.clustering.max_clusters) and cfg.clustering.max_clusters >= 2, "Clustering.max_clusters must be >= 2")
    _require(_is_int(cfg.clustering.spectrum_count) and cfg.clustering.spectrum_count >= 1, "Clustering.spectrum_count must be >= 1")
    _require(_is_int(m.sample_count) and m.sample_count >= MIN_SAMPLE_COUNT, f"VoltageModel.sample_count must be >= {MIN_SAMPLE_COUNT}")
    _require(m.mode in MODES, f"VoltageModel.mode must be one of {MODES}")
    _require(
        a.window_start <= r.midday_start < r.midday_end <= a.window_end,
        "RegulatorConfig.midday_start/midday_end must lie inside the analysis window",
    )
    ids = [c.id for c in cfg.feeder.consumers]
    _require(r.consumer is None or r.consumer in ids, f"RegulatorConfig.consumer {r.consumer!r} is not one of {ids}")
    for c in cfg.feeder.consumers:
        _require(isinstance(c.id, str) and c.id and all(ch.isalnum() or ch in "._-" for ch in c.id),
                 f"Consumer.id {c.id!r} must be a non-empty file-name-safe string")
        _require(c.pv_capacity_kw >= 0, f"Consumer.pv_capacity_kw must be >= 0 ({c.id})")
        _require(c.load_mean_kw >= 0, f"Consumer.load_mean_kw must be >= 0 ({c.id})")
    try:
        cfg.topology()
        cfg.process_params()
        cfg.svd_config()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.regulator_config()
    return cfg


def load_config(path, seed: int | None = None, output_dir: str | None = None) -> RunConfig:
    """Read, override and validate a config file.

    Precedence for the seed and the output directory: explicit argument,
    then ``PVVOLT_SEED`` / ``PVVOLT_OUT``, then the file.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    cfg = _build(RunConfig, data, "")
    overrides = {}
    env_seed = os.environ.get(SEED_ENV)
    if seed is None and env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env_seed!r} is not an integer") from None
    if seed is not None:
        overrides["seed"] = seed
    output_dir = output_dir if output_dir is not None else os.environ.get(OUT_ENV)
    if output_dir is not None:
        overrides["output_dir"] = output_dir
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    try:
        return validate(cfg)
    except TypeError as exc:
        raise ConfigError(f"RunConfig: {exc}") from None
