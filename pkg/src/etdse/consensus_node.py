"""Per-node state machine of event-triggered consensus on posteriors.

Each time step a node runs

1. correction with its own measurement (sensor nodes only),
2. L consensus steps: decide whether to broadcast (KLD trigger), then fuse
   its local density with what it received, substituting a flattened copy
   of the stored reference for every silent in-neighbour,
3. prediction of its local density, its own reference and its stored
   copies of every in-neighbour's reference.

Because all nodes share the dynamics model, node ``i``'s copy of ``j``'s
reference evolves exactly like ``j``'s own ``self_reference``; nothing but
the broadcasts themselves is ever exchanged.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import ProtocolError, UnknownSender
from .gauss_info import GaussianInfo, flatten, fuse, to_info, to_moment
from .local_filter import FilterBelief, correct_ekf, predict_info
from .models import LinearDynamics, MeasurementModel
from .trigger import TriggerCalibration, should_transmit

_HEADER = struct.Struct("<qqqq")


@dataclass(frozen=True, eq=False)
class BroadcastMessage:
    sender: int
    time_index: int
    consensus_step: int
    density: GaussianInfo

    def to_bytes(self) -> bytes:
        """sender, k, l, n as int64 then q and the upper triangle of Omega as float64, all little-endian."""
        n = self.density.dim
        iu = np.triu_indices(n)
        payload = np.concatenate([self.density.info_vec, self.density.info_mat[iu]]).astype("<f8")
        return _HEADER.pack(self.sender, self.time_index, self.consensus_step, n) + payload.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "BroadcastMessage":
        sender, k, ell, n = _HEADER.unpack_from(buf)
        body = np.frombuffer(buf, dtype="<f8", offset=_HEADER.size)
        expected = n + n * (n + 1) // 2
        if body.size != expected:
            raise ValueError(f"message body has {body.size} floats, expected {expected}")
        q = body[:n].astype(float)
        omega = np.zeros((n, n))
        iu = np.triu_indices(n)
        omega[iu] = body[n:]
        omega = omega + np.triu(omega, 1).T
        return cls(int(sender), int(k), int(ell), GaussianInfo(q, omega))


def message_nbytes(dim: int) -> int:
    return _HEADER.size + 8 * (dim + dim * (dim + 1) // 2)


@dataclass(frozen=True, eq=False)
class NodeState:
    node_id: int
    local: GaussianInfo
    in_neighbors: tuple[int, ...]
    weights_row: np.ndarray
    calib: TriggerCalibration
    sensor: MeasurementModel | None = None
    self_reference: GaussianInfo | None = None
    neighbor_references: Mapping[int, GaussianInfo | None] = field(default_factory=dict)
    belief_time: int = 0
    consensus_step: int = 0

    @property
    def is_sensor(self) -> bool:
        return self.sensor is not None


def init_node(
    node_id: int,
    prior: GaussianInfo,
    in_neighbors: Sequence[int],
    weights_row: np.ndarray,
    calib: TriggerCalibration,
    sensor: MeasurementModel | None = None,
) -> NodeState:
    """Node at k = 0 with no reference yet; its first decision is a forced broadcast."""
    row = np.array(weights_row, dtype=float)
    row.setflags(write=False)
    nbrs = tuple(int(j) for j in in_neighbors)
    return NodeState(
        node_id=node_id,
        local=prior,
        in_neighbors=nbrs,
        weights_row=row,
        calib=calib,
        sensor=sensor,
        neighbor_references={j: None for j in nbrs},
    )


def node_correct(s: NodeState, measurement: tuple[float, MeasurementModel] | None) -> NodeState:
    if measurement is None:
        if s.is_sensor:
            raise ProtocolError(f"sensor node {s.node_id} needs a measurement")
        return s
    if not s.is_sensor:
        raise ProtocolError(f"communication node {s.node_id} was given a measurement")
    y, model = measurement
    belief = correct_ekf(FilterBelief(to_moment(s.local), s.belief_time), y, model)
    return replace(s, local=to_info(belief.density))


def decide_and_pack(
    s: NodeState, scheduled: bool | None = None
) -> tuple[bool, BroadcastMessage | None, NodeState]:
    """Transmission decision for the current consensus step.

    ``scheduled`` overrides the KLD trigger with an externally chosen
    decision (random/periodic strategies). A node without a reference
    always broadcasts.
    """
    if s.self_reference is None:
        c = True
    elif scheduled is not None:
        c = bool(scheduled)
    else:
        c = should_transmit(s.local, s.self_reference, s.calib.tau)
    if not c:
        return False, None, s
    msg = BroadcastMessage(s.node_id, s.belief_time, s.consensus_step, s.local)
    return True, msg, replace(s, self_reference=s.local)


def node_fuse(s: NodeState, inbox: Mapping[int, BroadcastMessage | None]) -> NodeState:
    """Consensus step; silent in-neighbours enter through their flattened reference."""
    for j, msg in inbox.items():
        if j not in s.neighbor_references:
            raise UnknownSender(f"node {s.node_id} got an inbox entry for non-neighbour {j}")
        if msg is not None and msg.sender != j:
            raise UnknownSender(f"inbox slot {j} holds a message from {msg.sender}")
    refs = dict(s.neighbor_references)
    terms = [(float(s.weights_row[s.node_id]), s.local)]
    for j in s.in_neighbors:
        msg = inbox.get(j)
        if msg is not None:
            refs[j] = msg.density
            density = msg.density
        else:
            ref = refs[j]
            if ref is None:
                raise ProtocolError(f"node {s.node_id} has no reference for silent neighbour {j}")
            density = flatten(ref, s.calib.delta)
        terms.append((float(s.weights_row[j]), density))
    return replace(
        s,
        local=fuse(terms),
        neighbor_references=refs,
        consensus_step=s.consensus_step + 1,
    )


def node_predict(s: NodeState, d: LinearDynamics) -> NodeState:
    refs = {j: (None if r is None else predict_info(r, d)) for j, r in s.neighbor_references.items()}
    return replace(
        s,
        local=predict_info(s.local, d),
        self_reference=None if s.self_reference is None else predict_info(s.self_reference, d),
        neighbor_references=refs,
        belief_time=s.belief_time + 1,
        consensus_step=0,
    )


def consensus_round(
    states: Sequence[NodeState],
    scheduled: Sequence[bool] | None = None,
) -> tuple[list[NodeState], list[bool], list[BroadcastMessage | None]]:
    """One synchronous consensus step over all nodes.

    Every decision is taken against the pre-round states before any fusion.
    """
    decisions, messages, packed = [], [], []
    for i, s in enumerate(states):
        c, msg, s2 = decide_and_pack(s, None if scheduled is None else scheduled[i])
        decisions.append(c)
        messages.append(msg)
        packed.append(s2)
    fused = [node_fuse(s, {j: messages[j] for j in s.in_neighbors}) for s in packed]
    return fused, decisions, messages


def reference_violations(states: Sequence[NodeState], atol: float = 1e-12) -> list[tuple[int, int]]:
    """Arcs (j, i) where i's copy of j's reference differs from j's own."""
    bad = []
    for s in states:
        for j, ref in s.neighbor_references.items():
            own = states[j].self_reference
            if (ref is None) != (own is None):
                bad.append((j, s.node_id))
            elif ref is not None and not ref.allclose(own, atol=atol):
                bad.append((j, s.node_id))
    return bad

