"""Target dynamics and sensor models for the planar tracking scenario.

State layout is ``[xi, xi_dot, eta, eta_dot]`` (m, m/s, m, m/s). Every
sensor produces one scalar per step: a Cartesian coordinate, a range
(TOA) or a bearing (DOA).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveInput, NotPositiveDefinite, SensorCoincidesWithTarget

STATE_DIM = 4
RANGE_EPS = 1e-6  # m
A_DET_MIN = 1e-9

H_XI = np.array([1.0, 0.0, 0.0, 0.0])
H_ETA = np.array([0.0, 0.0, 1.0, 0.0])
H_XI.setflags(write=False)
H_ETA.setflags(write=False)


def deg2_to_rad2(var_deg2: float) -> float:
    return var_deg2 * (math.pi / 180.0) ** 2


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    w = np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)
    if np.ndim(w) == 0:
        return float(w)
    return w


@dataclass(frozen=True, eq=False)
class LinearDynamics:
    A: np.ndarray
    Q: np.ndarray
    T: float = 1.0

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        Q = np.array(self.Q, dtype=float)
        if abs(np.linalg.det(A)) <= A_DET_MIN:
            raise NonPositiveInput("transition matrix A must be invertible")
        if not np.allclose(Q, Q.T):
            raise NotPositiveDefinite("process noise Q must be symmetric")
        try:
            np.linalg.cholesky(Q)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite("process noise Q must be positive definite") from exc
        A.setflags(write=False)
        Q.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Q", Q)


def cv_dynamics(T: float = 1.0, q_diag=(16.0, 1.0, 16.0, 1.0)) -> LinearDynamics:
    """Constant-velocity model in both planar coordinates."""
    q_diag = np.asarray(q_diag, dtype=float)
    if T <= 0:
        raise NonPositiveInput(f"sampling interval must be positive, got {T}")
    if q_diag.shape != (STATE_DIM,) or np.any(q_diag <= 0):
        raise NonPositiveInput(f"q_diag must be 4 positive reals, got {q_diag.tolist()}")
    A = np.eye(STATE_DIM)
    A[0, 1] = T
    A[2, 3] = T
    return LinearDynamics(A, np.diag(q_diag), float(T))


class SensorKind(str, enum.Enum):
    LINEAR_XI = "linear_xi"
    LINEAR_ETA = "linear_eta"
    TOA = "toa"
    DOA = "doa"

    @property
    def is_linear(self) -> bool:
        return self in (SensorKind.LINEAR_XI, SensorKind.LINEAR_ETA)


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    kind: SensorKind
    noise_var: float
    sensor_pos: np.ndarray | None = field(default=None)

    def __post_init__(self):
        kind = SensorKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not self.noise_var > 0:
            raise NonPositiveInput(f"noise variance must be positive, got {self.noise_var}")
        if kind.is_linear:
            pos = None if self.sensor_pos is None else np.array(self.sensor_pos, dtype=float)
        else:
            if self.sensor_pos is None:
                raise NonPositiveInput(f"{kind.value} sensor needs a position")
            pos = np.array(self.sensor_pos, dtype=float).reshape(2)
        if pos is not None:
            pos.setflags(write=False)
        object.__setattr__(self, "sensor_pos", pos)

    @property
    def H(self) -> np.ndarray:
        """Fixed observation row of a linear sensor."""
        if self.kind is SensorKind.LINEAR_XI:
            return H_XI
        if self.kind is SensorKind.LINEAR_ETA:
            return H_ETA
        raise TypeError(f"{self.kind.value} sensor has no fixed observation row")


def _offset(m: MeasurementModel, x: np.ndarray) -> tuple[float, float, float]:
    dxi = float(x[0] - m.sensor_pos[0])
    deta = float(x[2] - m.sensor_pos[1])
    r = math.hypot(dxi, deta)
    if r <= RANGE_EPS:
        raise SensorCoincidesWithTarget(
            f"target within {RANGE_EPS} m of {m.kind.value} sensor at {m.sensor_pos.tolist()}"
        )
    return dxi, deta, r


def measure(m: MeasurementModel, x, noise: float = 0.0) -> float:
    x = np.asarray(x, dtype=float)
    if m.kind is SensorKind.LINEAR_XI:
        return float(x[0]) + noise
    if m.kind is SensorKind.LINEAR_ETA:
        return float(x[2]) + noise
    dxi, deta, r = _offset(m, x)
    if m.kind is SensorKind.TOA:
        return r + noise
    return wrap_angle(math.atan2(deta, dxi)) + noise


def jacobian(m: MeasurementModel, x) -> np.ndarray:
    """1x4 observation Jacobian (returned as a flat 4-vector)."""
    if m.kind.is_linear:
        return m.H.copy()
    dxi, deta, r = _offset(m, np.asarray(x, dtype=float))
    if m.kind is SensorKind.TOA:
        return np.array([dxi / r, 0.0, deta / r, 0.0])
    r2 = r * r
    return np.array([-deta / r2, 0.0, dxi / r2, 0.0])


def innovation(m: MeasurementModel, y: float, x) -> float:
    """Measurement residual at state ``x``; bearings are wrapped into (-pi, pi]."""
    e = y - measure(m, x)
    if m.kind is SensorKind.DOA:
        e = wrap_angle(e)
    return e
