"""Scenario construction: network deployment, sensor assignment, truth and trial inputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import OddSensorCount
from ..models import LinearDynamics, MeasurementModel, SensorKind, measure
from ..network import ConsensusWeights, NetworkGraph, build_geometric_graph, metropolis_weights
from .config import ScenarioConfig
from .schedule import schedule

# Spawn-key tags keep every random stream independent of the others and of trial count.
_GRAPH, _SENSORS, _TRIAL = 0, 1, 2
_TRUTH, _PRIOR, _NOISE, _SCHEDULE = 0, 1, 2, 3


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))


def trial_rngs(seed: int, trial: int) -> dict[str, np.random.Generator]:
    def gen(tag):
        return np.random.default_rng(seed_sequence(seed, _TRIAL, trial, tag))

    return {
        "truth": gen(_TRUTH),
        "prior": gen(_PRIOR),
        "noise": gen(_NOISE),
        "schedule": gen(_SCHEDULE),
    }


@dataclass(frozen=True, eq=False)
class Scenario:
    cfg: ScenarioConfig
    dynamics: LinearDynamics
    graph: NetworkGraph
    weights: ConsensusWeights
    sensor_ids: tuple[int, ...]  # sorted sensor node ids
    sensors: tuple[MeasurementModel, ...]  # aligned with sensor_ids

    def sensor_of(self, node: int) -> MeasurementModel | None:
        try:
            return self.sensors[self.sensor_ids.index(node)]
        except ValueError:
            return None


def assign_sensors(cfg: ScenarioConfig, graph: NetworkGraph, rng: np.random.Generator) -> list[MeasurementModel]:
    """Models for the sorted sensor nodes: half of kind A, half of kind B, shuffled by ``rng``."""
    ids = sorted(graph.sensor_nodes)
    if cfg.sensor_kind == "linear_xi":
        return [MeasurementModel(SensorKind.LINEAR_XI, cfg.noise.linear_var) for _ in ids]
    if len(ids) % 2:
        raise OddSensorCount(f"sensor count must be even, got {len(ids)}")
    half = len(ids) // 2
    flags = np.array([True] * half + [False] * half)
    rng.shuffle(flags)
    models = []
    for node, first in zip(ids, flags):
        pos = graph.positions[node]
        if cfg.sensor_kind == "linear_split":
            kind = SensorKind.LINEAR_XI if first else SensorKind.LINEAR_ETA
            models.append(MeasurementModel(kind, cfg.noise.linear_var))
        elif first:
            models.append(MeasurementModel(SensorKind.TOA, cfg.noise.toa_var, pos))
        else:
            models.append(MeasurementModel(SensorKind.DOA, cfg.noise.doa_var_rad2, pos))
    return models


def build_scenario(cfg: ScenarioConfig, graph: NetworkGraph | None = None) -> Scenario:
    """Deployment shared by every trial of ``cfg``."""
    if graph is None:
        if cfg.graph is not None:
            graph = NetworkGraph.load(cfg.graph)
        else:
            graph_seed = int(seed_sequence(cfg.rng_seed, _GRAPH).generate_state(1)[0])
            graph = build_geometric_graph(
                cfg.node_count, cfg.sensor_count, cfg.area, cfg.comm_radius, graph_seed
            )
    sensors = assign_sensors(cfg, graph, np.random.default_rng(seed_sequence(cfg.rng_seed, _SENSORS)))
    return Scenario(
        cfg=cfg,
        dynamics=cfg.dynamics.build(),
        graph=graph,
        weights=metropolis_weights(graph) if graph.is_symmetric() else _uniform_weights(graph),
        sensor_ids=tuple(sorted(graph.sensor_nodes)),
        sensors=tuple(sensors),
    )


def _uniform_weights(graph: NetworkGraph) -> ConsensusWeights:
    """Equal weights over self and in-neighbours, for directed graphs loaded from file."""
    n = graph.node_count
    pi = np.zeros((n, n))
    for i in range(n):
        nb = graph.in_neighbors(i)
        w = 1.0 / (1 + len(nb))
        pi[i, list(nb)] = w
        pi[i, i] = 1.0 - w * len(nb)
    return ConsensusWeights(pi)


def _psd_sqrt(Q: np.ndarray) -> np.ndarray:
    """Factor F with F F^T = Q; Cholesky when Q is PD, eigen-based for singular Q."""
    try:
        return np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(Q)
        return v * np.sqrt(np.clip(w, 0.0, None))


def simulate_truth(cfg: ScenarioConfig, rng: np.random.Generator, dynamics: LinearDynamics | None = None) -> np.ndarray:
    """Target trajectory, shape (horizon, 4)."""
    d = dynamics if dynamics is not None else cfg.dynamics.build()
    w, h = cfg.area
    f = cfg.initial_state.position_fraction
    lo = np.array([w, h]) * (1 - f) / 2
    hi = np.array([w, h]) * (1 + f) / 2
    pos = rng.uniform(lo, hi)
    vel = rng.normal(0.0, cfg.initial_state.speed_std, size=2)
    x = np.array([pos[0], vel[0], pos[1], vel[1]])
    chol_q = _psd_sqrt(d.Q)
    out = np.empty((cfg.horizon, 4))
    out[0] = x
    noise = rng.standard_normal((cfg.horizon - 1, 4)) @ chol_q.T
    for k in range(1, cfg.horizon):
        x = d.A @ x + noise[k - 1]
        out[k] = x
    return out


@dataclass(frozen=True, eq=False)
class TrialInputs:
    truth: np.ndarray  # (horizon, 4)
    prior_means: np.ndarray  # (N, 4)
    prior_cov: np.ndarray  # (4, 4)
    measurements: np.ndarray  # (horizon, n_sensors), aligned with Scenario.sensor_ids
    schedule: np.ndarray | None  # (horizon, L, N) permissions, random/periodic only


def draw_trial_inputs(scn: Scenario, trial: int) -> TrialInputs:
    """All randomness consumed by one trial, drawn up front from per-trial streams."""
    cfg = scn.cfg
    rngs = trial_rngs(cfg.rng_seed, trial)
    truth = simulate_truth(cfg, rngs["truth"], scn.dynamics)
    n = scn.graph.node_count
    offsets = rngs["prior"].standard_normal((n, 4)) * np.asarray(cfg.prior.mean_offset_std)
    prior_means = truth[0] + offsets
    std = np.sqrt([m.noise_var for m in scn.sensors])
    noise = rngs["noise"].standard_normal((cfg.horizon, len(scn.sensors))) * std
    ys = np.empty_like(noise)
    for k in range(cfg.horizon):
        for s, m in enumerate(scn.sensors):
            ys[k, s] = measure(m, truth[k], noise[k, s])
    st = cfg.strategy
    sched = None
    if st.kind in ("random", "periodic"):
        sched = schedule(st.kind, st.rate, n, cfg.horizon, cfg.consensus_steps, rngs["schedule"])
    return TrialInputs(truth, prior_means, np.diag(cfg.prior.cov_diag), ys, sched)
