"""Scenario configuration: JSON schema, presets and ``key=value`` overrides.

Unknown keys are rejected at every nesting level and the error names the
dotted path of the offending key.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..errors import ConfigInvalid
from ..models import cv_dynamics, deg2_to_rad2

STRATEGY_KINDS = ("event_triggered", "full_rate", "random", "periodic")
# linear_xi puts every sensor on the xi coordinate; used to exercise the observability check.
SENSOR_KINDS = ("linear_split", "toa_doa", "linear_xi")


@dataclass(frozen=True)
class DynamicsConfig:
    T: float = 1.0
    q_diag: tuple[float, ...] = (16.0, 1.0, 16.0, 1.0)

    def build(self):
        return cv_dynamics(self.T, self.q_diag)


@dataclass(frozen=True)
class NoiseConfig:
    linear_var: float = 3.0  # m^2
    toa_var: float = 9.0  # m^2
    doa_var_deg2: float = 0.01  # deg^2, converted to rad^2 before use

    @property
    def doa_var_rad2(self) -> float:
        return deg2_to_rad2(self.doa_var_deg2)


@dataclass(frozen=True)
class PriorConfig:
    mean_offset_std: tuple[float, ...] = (100.0, 5.0, 100.0, 5.0)
    cov_diag: tuple[float, ...] = (100.0**2, 5.0**2, 100.0**2, 5.0**2)


@dataclass(frozen=True)
class InitialStateConfig:
    # Initial position is uniform over the centred sub-area of this relative size.
    position_fraction: float = 0.5
    speed_std: float = 10.0  # m/s per axis


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "event_triggered"
    tau: float | None = 0.5
    rate: float | None = None
    delta_margin: float = 0.0
    # Flattening weight for silent neighbours under random/periodic schedules.
    delta: float | None = None


@dataclass(frozen=True)
class SweepConfig:
    strategies: tuple[str, ...] = ("event_triggered", "random", "periodic")
    rates: tuple[float, ...] = (0.7, 0.5, 0.3, 0.1)
    calibration_trials: int = 20
    tolerance: float = 0.02


@dataclass(frozen=True)
class ScenarioConfig:
    area: tuple[float, ...] = (5000.0, 5000.0)
    node_count: int = 20
    sensor_count: int = 6
    sensor_kind: str = "linear_split"
    comm_radius: float = 1500.0
    dynamics: DynamicsConfig = field(default_factory=DynamicsConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    horizon: int = 200
    consensus_steps: int = 1
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    trials: int = 100
    rng_seed: int = 0
    prior: PriorConfig = field(default_factory=PriorConfig)
    initial_state: InitialStateConfig = field(default_factory=InitialStateConfig)
    graph: str | None = None
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        validate(self)

    def with_strategy(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, strategy=StrategyConfig(**changes))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return _to_plain(dataclasses.asdict(self))


_NESTED = {
    "dynamics": DynamicsConfig,
    "noise": NoiseConfig,
    "strategy": StrategyConfig,
    "prior": PriorConfig,
    "initial_state": InitialStateConfig,
    "sweep": SweepConfig,
}


def _to_plain(obj):
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _build(cls, d: Any, path: str):
    if not isinstance(d, dict):
        raise ConfigInvalid(f"{path or 'config'}: expected an object, got {type(d).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - set(names))
    if unknown:
        where = ", ".join(f"{path}.{k}" if path else k for k in unknown)
        raise ConfigInvalid(f"unknown config key(s): {where}")
    kwargs = {}
    for k, v in d.items():
        key_path = f"{path}.{k}" if path else k
        if cls is ScenarioConfig and k in _NESTED:
            kwargs[k] = _build(_NESTED[k], v, key_path)
        elif isinstance(v, list):
            kwargs[k] = tuple(v)
        else:
            kwargs[k] = v
    try:
        return cls(**kwargs)
    except ConfigInvalid:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"{path or 'config'}: {exc}") from exc


def _require(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigInvalid(f"{key}: {msg}")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _positive_reals(v, n: int | None = None) -> bool:
    try:
        vals = [float(x) for x in v]
    except (TypeError, ValueError):
        return False
    return (n is None or len(vals) == n) and all(x > 0 and math.isfinite(x) for x in vals)


def validate(cfg: ScenarioConfig) -> None:
    _require(_positive_reals(cfg.area, 2), "area", "must be two positive lengths in m")
    _require(_is_int(cfg.node_count) and cfg.node_count >= 1, "node_count", "must be a positive integer")
    _require(
        _is_int(cfg.sensor_count) and 1 <= cfg.sensor_count <= cfg.node_count,
        "sensor_count",
        "must be an integer in [1, node_count]",
    )
    _require(cfg.sensor_kind in SENSOR_KINDS, "sensor_kind", f"must be one of {SENSOR_KINDS}")
    _require(cfg.comm_radius > 0, "comm_radius", "must be positive")
    _require(_is_int(cfg.horizon) and cfg.horizon >= 1, "horizon", "must be an integer >= 1")
    _require(_is_int(cfg.consensus_steps) and cfg.consensus_steps >= 1, "consensus_steps", "must be >= 1")
    _require(_is_int(cfg.trials) and cfg.trials >= 1, "trials", "must be an integer >= 1")
    _require(_is_int(cfg.rng_seed) and cfg.rng_seed >= 0, "rng_seed", "must be a nonnegative integer")
    _require(cfg.dynamics.T > 0, "dynamics.T", "must be positive")
    _require(_positive_reals(cfg.dynamics.q_diag, 4), "dynamics.q_diag", "must be 4 positive reals")
    for k in ("linear_var", "toa_var", "doa_var_deg2"):
        _require(getattr(cfg.noise, k) > 0, f"noise.{k}", "must be positive")
    _require(_positive_reals(cfg.prior.cov_diag, 4), "prior.cov_diag", "must be 4 positive reals")
    _require(
        len(cfg.prior.mean_offset_std) == 4 and all(s >= 0 for s in cfg.prior.mean_offset_std),
        "prior.mean_offset_std",
        "must be 4 nonnegative reals",
    )
    _require(0 < cfg.initial_state.position_fraction <= 1, "initial_state.position_fraction", "must be in (0, 1]")
    _require(cfg.initial_state.speed_std >= 0, "initial_state.speed_std", "must be >= 0")
    st = cfg.strategy
    _require(st.kind in STRATEGY_KINDS, "strategy.kind", f"must be one of {STRATEGY_KINDS}")
    if st.kind == "event_triggered":
        _require(st.tau is not None and st.tau >= 0, "strategy.tau", "event_triggered needs tau >= 0")
        _require(st.delta_margin >= 0, "strategy.delta_margin", "must be >= 0")
    if st.kind in ("random", "periodic"):
        _require(st.rate is not None and 0 < st.rate <= 1, "strategy.rate", "must be in (0, 1]")
    if st.delta is not None:
        _require(st.delta >= 0, "strategy.delta", "must be >= 0")
    sw = cfg.sweep
    for s in sw.strategies:
        _require(s in STRATEGY_KINDS, "sweep.strategies", f"unknown strategy {s!r}")
    for r in sw.rates:
        _require(0 < r <= 1, "sweep.rates", f"rate {r} outside (0, 1]")
    _require(_is_int(sw.calibration_trials) and sw.calibration_trials >= 1, "sweep.calibration_trials", "must be >= 1")
    _require(sw.tolerance > 0, "sweep.tolerance", "must be positive")


def from_dict(d: dict) -> ScenarioConfig:
    return _build(ScenarioConfig, d, "")


def load_config(path) -> ScenarioConfig:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: not valid JSON ({exc})") from exc
    return from_dict(d)


def parse_override(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ConfigInvalid(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(d: dict, overrides) -> dict:
    d = copy.deepcopy(d)
    for item in overrides:
        keys, value = parse_override(item)
        node = d
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigInvalid(f"override {item!r}: {k} is not an object")
        node[keys[-1]] = value
    return d


PRESETS: dict[str, dict] = {
    "tiny": {
        "node_count": 3,
        "sensor_count": 2,
        "comm_radius": 5000.0,
        "horizon": 5,
        "trials": 1,
    },
    "desk": {},
    "desk-nonlinear": {"sensor_kind": "toa_doa"},
    "paper-linear": {"node_count": 100, "sensor_count": 20, "comm_radius": 800.0, "trials": 200},
    "paper-nonlinear": {
        "node_count": 100,
        "sensor_count": 20,
        "comm_radius": 800.0,
        "trials": 200,
        "sensor_kind": "toa_doa",
    },
}


def preset_dict(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigInvalid(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return copy.deepcopy(PRESETS[name])


def preset(name: str, **changes) -> ScenarioConfig:
    d = preset_dict(name)
    d.update(changes)
    return from_dict(d)
