"""KLD event trigger and threshold calibration.

A node stays silent while D(local || reference) <= tau. When that holds,
the eigenvalues of Omega^-1/2 Omega_ref Omega^-1/2 lie between the two
roots of  lambda - log(lambda) - 1 = 2 tau,  which yields the scalars

    delta*(tau) = lambda_hi - 1
    beta*(tau)  = 1 / lambda_lo - 1
    alpha*(tau) = 2 tau (1 + beta*(tau)).

Flattening silent neighbours with delta >= delta*(tau) keeps the fused
information matrix below the one a full transmission would produce.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import NegativeDelta, NonPositiveTau
from .gauss_info import Gaussian, kld

RESIDUAL_TOL = 1e-12
EPS = 2.220446049250313e-16


def lambda_gap(lam: float) -> float:
    """lambda - log(lambda) - 1, nonnegative with its minimum 0 at lambda = 1."""
    return lam - math.log(lam) - 1.0


def _bisect_newton(f: Callable[[float], float], df: Callable[[float], float], lo: float, hi: float) -> float:
    """Root of ``f`` on [lo, hi] where f(lo) and f(hi) have opposite signs."""
    f_lo = f(lo)
    if f_lo == 0.0:
        return lo
    if f(hi) == 0.0:
        return hi
    # Coarse bisection, then safeguarded Newton.
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo <= 1e-6 * max(1.0, abs(mid)):
            break
    x = 0.5 * (lo + hi)
    for _ in range(100):
        fx = f(x)
        if fx == 0.0:
            break
        if (fx > 0) == (f_lo > 0):
            lo, f_lo = x, fx
        else:
            hi = x
        d = df(x)
        step = fx / d if d != 0.0 else math.inf
        x_new = x - step
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        # Newton converges quadratically; stop once steps reach rounding level.
        if abs(x_new - x) <= 4 * EPS * max(abs(x), 1.0):
            x = x_new
            break
        x = x_new
    return x


def _solve_roots(tau: float) -> tuple[float, float]:
    """(log lambda_lo, lambda_hi) for lambda - log lambda - 1 = 2 tau."""
    if not tau > 0:
        raise NonPositiveTau(f"tau must be positive, got {tau}")
    target = 2.0 * tau

    # Lower root solved in u = log(lambda) so tiny roots keep full precision.
    u_lo = _bisect_newton(
        lambda u: math.expm1(u) - u - target,
        lambda u: math.expm1(u),
        math.log(EPS) - target,
        0.0,
    )
    hi = 2.0
    while lambda_gap(hi) <= target:
        hi *= 2.0
    lam_hi = _bisect_newton(
        lambda lam: lambda_gap(lam) - target,
        lambda lam: 1.0 - 1.0 / lam,
        1.0,
        hi,
    )
    return u_lo, lam_hi


def solve_lambda_pair(tau: float) -> tuple[float, float]:
    """The two solutions (lambda_lo < 1 < lambda_hi) of lambda - log lambda - 1 = 2 tau.

    lambda_lo underflows to 0 once tau exceeds roughly 370.
    """
    u_lo, lam_hi = _solve_roots(tau)
    return math.exp(u_lo), lam_hi


@dataclass(frozen=True)
class TriggerCalibration:
    tau: float
    lambda_lo: float
    lambda_hi: float
    alpha_star: float
    beta_star: float
    delta_star: float
    delta: float

    @classmethod
    def full_rate(cls) -> "TriggerCalibration":
        """tau = 0: every nonzero divergence triggers and no flattening is applied."""
        return cls(0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0)


def calibrate(tau: float, delta_margin: float = 0.0) -> TriggerCalibration:
    if delta_margin < 0:
        raise NegativeDelta(f"delta_margin must be >= 0, got {delta_margin}")
    u_lo, lam_hi = _solve_roots(tau)
    lam_lo = math.exp(u_lo)
    delta_star = lam_hi - 1.0
    # 1/lambda_lo - 1 without forming the reciprocal; inf once it overflows.
    beta_star = math.expm1(-u_lo) if -u_lo < 709.0 else math.inf
    alpha_star = 2.0 * tau * (1.0 + beta_star)
    return TriggerCalibration(
        tau=float(tau),
        lambda_lo=lam_lo,
        lambda_hi=lam_hi,
        alpha_star=alpha_star,
        beta_star=beta_star,
        delta_star=delta_star,
        delta=delta_star + delta_margin,
    )


def should_transmit(local: Gaussian, reference: Gaussian, tau: float) -> bool:
    """True iff D(local || reference) exceeds ``tau``; equality stays silent."""
    return kld(local, reference) > tau
