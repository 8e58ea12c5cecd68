"""Sensor-network topology, consensus weights, and assumption checks.

Arcs are ordered pairs ``(i, j)`` meaning node ``j`` receives from node
``i``; the in-neighbours of ``i`` are ``{j : (j, i) in arcs}``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import AsymmetricGraph, CannotConnect, ConfigInvalid, NonPositiveInput
from .models import LinearDynamics, MeasurementModel, jacobian

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class NetworkGraph:
    node_count: int
    arcs: frozenset
    sensor_nodes: frozenset
    positions: np.ndarray
    seed: int | None = None
    radius: float | None = None
    _in: tuple = field(init=False, repr=False)
    _out: tuple = field(init=False, repr=False)

    def __post_init__(self):
        n = int(self.node_count)
        if n < 1:
            raise NonPositiveInput("network needs at least one node")
        arcs = frozenset((int(i), int(j)) for i, j in self.arcs)
        for i, j in arcs:
            if i == j:
                raise ConfigInvalid(f"self-arc ({i}, {i}) not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise ConfigInvalid(f"arc ({i}, {j}) references a node outside 0..{n - 1}")
        sensors = frozenset(int(s) for s in self.sensor_nodes)
        if not sensors <= set(range(n)):
            raise ConfigInvalid("sensor_nodes must be a subset of the nodes")
        pos = np.array(self.positions, dtype=float).reshape(n, 2)
        pos.setflags(write=False)
        ins = [[] for _ in range(n)]
        outs = [[] for _ in range(n)]
        for i, j in sorted(arcs):
            ins[j].append(i)
            outs[i].append(j)
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "arcs", arcs)
        object.__setattr__(self, "sensor_nodes", sensors)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "_in", tuple(tuple(a) for a in ins))
        object.__setattr__(self, "_out", tuple(tuple(a) for a in outs))

    def in_neighbors(self, i: int) -> tuple[int, ...]:
        return self._in[i]

    def out_neighbors(self, i: int) -> tuple[int, ...]:
        return self._out[i]

    def is_symmetric(self) -> bool:
        return all((j, i) in self.arcs for i, j in self.arcs)

    def sorted_arcs(self) -> list[tuple[int, int]]:
        return sorted(self.arcs)

    def to_dict(self) -> dict:
        return {
            "node_count": self.node_count,
            "positions": self.positions.tolist(),
            "arcs": [list(a) for a in self.sorted_arcs()],
            "sensor_nodes": sorted(self.sensor_nodes),
            "seed": self.seed,
            "radius": self.radius,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkGraph":
        known = {"node_count", "positions", "arcs", "sensor_nodes", "seed", "radius"}
        unknown = set(d) - known
        if unknown:
            raise ConfigInvalid(f"unknown graph key(s): {sorted(unknown)}")
        try:
            return cls(
                node_count=d["node_count"],
                arcs=frozenset(tuple(a) for a in d["arcs"]),
                sensor_nodes=frozenset(d["sensor_nodes"]),
                positions=np.asarray(d["positions"], dtype=float),
                seed=d.get("seed"),
                radius=d.get("radius"),
            )
        except KeyError as exc:
            raise ConfigInvalid(f"graph document missing key {exc.args[0]!r}") from exc

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "NetworkGraph":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _disk_arcs(positions: np.ndarray, radius: float) -> frozenset:
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    ii, jj = np.nonzero(dist <= radius)
    return frozenset((int(i), int(j)) for i, j in zip(ii, jj) if i != j)


def build_geometric_graph(
    n: int,
    sensor_count: int,
    area: Sequence[float],
    radius: float,
    rng_seed: int,
) -> NetworkGraph:
    """Random geometric graph, with the radius grown 10% at a time until strongly connected."""
    if n < 2:
        raise NonPositiveInput(f"need at least 2 nodes, got {n}")
    if not 0 <= sensor_count <= n:
        raise NonPositiveInput(f"sensor_count {sensor_count} must lie in [0, {n}]")
    if radius <= 0:
        raise NonPositiveInput(f"radius must be positive, got {radius}")
    width, height = float(area[0]), float(area[1])
    rng = np.random.default_rng(rng_seed)
    positions = rng.uniform((0.0, 0.0), (width, height), size=(n, 2))
    sensors = frozenset(int(s) for s in rng.choice(n, size=sensor_count, replace=False))
    diag = math.hypot(width, height)
    r = min(float(radius), diag)
    while True:
        g = NetworkGraph(n, _disk_arcs(positions, r), sensors, positions, seed=rng_seed, radius=r)
        if is_strongly_connected(g):
            return g
        if r >= diag:
            raise CannotConnect(f"graph still disconnected at radius {r} (area diagonal)")
        r = min(r * 1.1, diag)


def _reach(adj: Sequence[Sequence[int]], start: int) -> set[int]:
    seen = {start}
    todo = deque([start])
    while todo:
        u = todo.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return seen


def is_strongly_connected(g: NetworkGraph) -> bool:
    n = g.node_count
    if n == 1:
        return True
    # A forward and a backward search from one node suffice for any digraph.
    out_adj = [g.out_neighbors(i) for i in range(n)]
    in_adj = [g.in_neighbors(i) for i in range(n)]
    return len(_reach(out_adj, 0)) == n and len(_reach(in_adj, 0)) == n


@dataclass(frozen=True, eq=False)
class ConsensusWeights:
    pi: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        if pi.ndim != 2 or pi.shape[0] != pi.shape[1]:
            raise ConfigInvalid(f"consensus matrix must be square, got {pi.shape}")
        if np.any(pi < 0):
            raise ConfigInvalid("consensus weights must be nonnegative")
        if np.any(np.abs(pi.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ConfigInvalid("consensus matrix rows must sum to 1")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    def row(self, i: int) -> np.ndarray:
        return self.pi[i]

    def conforms_to(self, g: NetworkGraph) -> bool:
        """Positive exactly on the diagonal-or-in-neighbour pattern of ``g``."""
        n = g.node_count
        if self.pi.shape != (n, n):
            return False
        for i in range(n):
            allowed = set(g.in_neighbors(i)) | {i}
            for j in range(n):
                if j in allowed and j != i and self.pi[i, j] <= 0:
                    return False
                if j not in allowed and self.pi[i, j] != 0:
                    return False
        return True


def metropolis_weights(g: NetworkGraph) -> ConsensusWeights:
    if not g.is_symmetric():
        raise AsymmetricGraph("Metropolis weights need a symmetric arc set")
    n = g.node_count
    deg = [len(g.in_neighbors(i)) for i in range(n)]
    pi = np.zeros((n, n))
    for i in range(n):
        for j in g.in_neighbors(i):
            pi[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
        pi[i, i] = 1.0 - pi[i].sum()
    return ConsensusWeights(pi)


def is_primitive(w: ConsensusWeights, max_power: int) -> bool:
    """Some power up to ``max_power`` of the zero pattern of Pi is all-positive."""
    pattern = (w.pi > 0).astype(np.int64)
    power = pattern.copy()
    for _ in range(max(1, int(max_power))):
        if np.all(power > 0):
            return True
        nxt = ((power @ pattern) > 0).astype(np.int64)
        if np.array_equal(nxt, power):
            return False  # fixed zero pattern, never fills in
        power = nxt
    return False


def observability_matrix(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    blocks = [C]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return np.vstack(blocks)


def check_collective_observability(
    d: LinearDynamics,
    sensors: Iterable[MeasurementModel],
    nominal_state: Sequence[float] | None = None,
) -> bool:
    """Rank test on the stacked observation rows of every sensor.

    Range and bearing sensors contribute their Jacobian at ``nominal_state``.
    """
    rows = []
    for m in sensors:
        if m.kind.is_linear:
            rows.append(m.H)
        else:
            if nominal_state is None:
                raise ConfigInvalid("nonlinear sensors need a nominal state for the observability check")
            rows.append(jacobian(m, np.asarray(nominal_state, dtype=float)))
    if not rows:
        return False
    obs = observability_matrix(d.A, np.vstack(rows))
    s = np.linalg.svd(obs, compute_uv=False)
    rank = int(np.sum(s > 1e-8 * s[0])) if s[0] > 0 else 0
    return rank == d.A.shape[0]
