"""Kalman/EKF correction and prediction for a single node.

Measurements are scalar; a vector measurement is processed as a sequence
of scalar updates. Covariance updates use the Joseph form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InnovationCovarianceNotPositive, NonPositiveInput
from .gauss_info import GaussianInfo, GaussianMoment, symmetrize, to_info, to_moment
from .models import LinearDynamics, MeasurementModel, innovation, jacobian


@dataclass(frozen=True, eq=False)
class FilterBelief:
    density: GaussianMoment
    time_index: int = 0

    @property
    def mean(self) -> np.ndarray:
        return self.density.mean

    @property
    def cov(self) -> np.ndarray:
        return self.density.cov


def predict_moment(g: GaussianMoment, d: LinearDynamics) -> GaussianMoment:
    A = d.A
    return GaussianMoment(A @ g.mean, symmetrize(A @ g.cov @ A.T + d.Q))


def predict(b: FilterBelief, d: LinearDynamics) -> FilterBelief:
    return FilterBelief(predict_moment(b.density, d), b.time_index + 1)


def predict_info(g: GaussianInfo, d: LinearDynamics) -> GaussianInfo:
    """Prediction of an information pair, routed through moment form."""
    return to_info(predict_moment(to_moment(g), d))


def _joseph_update(g: GaussianMoment, e: float, H: np.ndarray, R: float) -> GaussianMoment:
    if not R > 0:
        raise NonPositiveInput(f"measurement variance must be positive, got {R}")
    P = g.cov
    PHt = P @ H
    S = float(H @ PHt) + R
    if not (np.isfinite(S) and S > 0):
        raise InnovationCovarianceNotPositive(f"innovation variance {S} is not positive")
    K = PHt / S
    IKH = np.eye(P.shape[0]) - np.outer(K, H)
    cov = IKH @ P @ IKH.T + R * np.outer(K, K)
    return GaussianMoment(g.mean + K * e, symmetrize(cov))


def correct_linear(b: FilterBelief, y: float, H, R: float) -> FilterBelief:
    H = np.asarray(H, dtype=float).reshape(-1)
    e = float(y) - float(H @ b.mean)
    return FilterBelief(_joseph_update(b.density, e, H, R), b.time_index)


def correct_ekf(b: FilterBelief, y: float, m: MeasurementModel) -> FilterBelief:
    """EKF correction linearized once at the prior mean.

    Linear sensors take the plain Kalman path.
    """
    if m.kind.is_linear:
        return correct_linear(b, y, m.H, m.noise_var)
    H = jacobian(m, b.mean)
    e = innovation(m, y, b.mean)
    return FilterBelief(_joseph_update(b.density, e, H, m.noise_var), b.time_index)


def correct_sequential(b: FilterBelief, ys, models) -> FilterBelief:
    """Vector measurement as consecutive scalar corrections."""
    for y, m in zip(ys, models):
        b = correct_ekf(b, y, m)
    return b
