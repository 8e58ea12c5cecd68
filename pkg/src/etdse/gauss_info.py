"""Gaussian densities in moment and information form.

A Gaussian is carried either as (mean, cov) or as the information pair
(q, Omega) with Omega = cov^-1 and q = Omega mean. Consensus fusion and
flattening are linear in the information pair, so the network protocol
stores everything in that form and only converts to moments for the
Kalman correction/prediction steps and for metrics.

Every positive-definiteness check goes through a Cholesky factorization,
and log-determinants are read off the factor diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, NegativeDelta, NonFiniteValue, NotPositiveDefinite, WeightsNotConvex

WEIGHT_SUM_TOL = 1e-12


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_finite(m: np.ndarray, what: str) -> None:
    # A single reduction catches inf and nan entries alike.
    if not math.isfinite(float(m.sum())):
        raise NotPositiveDefinite(f"{what} has non-finite entries")


def _check_finite_vector(v: np.ndarray, what: str) -> None:
    if not math.isfinite(float(v.sum())):
        raise NonFiniteValue(f"{what} has non-finite entries")


def _cholesky(m: np.ndarray, what: str) -> np.ndarray:
    """Lower Cholesky factor; the PD test for every matrix in this module."""
    _check_finite(m, what)
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{what} is not positive definite") from exc


def _spd_inverse(m: np.ndarray, what: str) -> np.ndarray:
    l_inv = np.linalg.inv(_cholesky(m, what))
    return l_inv.T @ l_inv


def logdet_spd(m: np.ndarray) -> float:
    """log det of an SPD matrix from its Cholesky factor."""
    c = _cholesky(m, "matrix")
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def _check_square(vec: np.ndarray, mat: np.ndarray, what: str) -> None:
    if vec.ndim != 1 or mat.shape != (vec.shape[0], vec.shape[0]):
        raise DimensionMismatch(
            f"{what}: vector shape {vec.shape} incompatible with matrix shape {mat.shape}"
        )


@dataclass(frozen=True, eq=False)
class GaussianMoment:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _frozen(np.reshape(self.mean, -1))
        cov = _frozen(symmetrize(np.atleast_2d(np.asarray(self.cov, dtype=float))))
        _check_square(mean, cov, "GaussianMoment")
        _check_finite_vector(mean, "mean")
        _cholesky(cov, "covariance")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True, eq=False)
class GaussianInfo:
    info_vec: np.ndarray
    info_mat: np.ndarray

    def __post_init__(self):
        q = _frozen(np.reshape(self.info_vec, -1))
        omega = _frozen(symmetrize(np.atleast_2d(np.asarray(self.info_mat, dtype=float))))
        _check_square(q, omega, "GaussianInfo")
        _check_finite_vector(q, "information vector")
        _cholesky(omega, "information matrix")
        object.__setattr__(self, "info_vec", q)
        object.__setattr__(self, "info_mat", omega)

    @property
    def dim(self) -> int:
        return self.info_vec.shape[0]

    def allclose(self, other: "GaussianInfo", atol: float = 1e-12) -> bool:
        """Entrywise comparison of both information quantities."""
        return bool(
            np.allclose(self.info_vec, other.info_vec, rtol=0.0, atol=atol)
            and np.allclose(self.info_mat, other.info_mat, rtol=0.0, atol=atol)
        )


Gaussian = GaussianMoment | GaussianInfo


def to_info(g: GaussianMoment) -> GaussianInfo:
    omega = _spd_inverse(g.cov, "covariance")
    return GaussianInfo(omega @ g.mean, omega)


def to_moment(g: GaussianInfo) -> GaussianMoment:
    cov = _spd_inverse(g.info_mat, "information matrix")
    return GaussianMoment(cov @ g.info_vec, cov)


def _moment_and_info(g: Gaussian) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(mean, cov, info_mat) of either representation."""
    if isinstance(g, GaussianInfo):
        m = to_moment(g)
        return m.mean, m.cov, g.info_mat
    return g.mean, g.cov, _spd_inverse(g.cov, "covariance")


def kld(p: Gaussian, p_ref: Gaussian) -> float:
    """KL divergence D(p || p_ref) of two Gaussians.

    tr(Omega_ref P) + |mean - mean_ref|^2 in the Omega_ref metric
    + log det Omega - log det Omega_ref - n, all halved.
    """
    if p.dim != p_ref.dim:
        raise DimensionMismatch(f"kld: dimensions {p.dim} and {p_ref.dim} differ")
    mean, cov, omega = _moment_and_info(p)
    mean_ref, _, omega_ref = _moment_and_info(p_ref)
    d = mean - mean_ref
    value = 0.5 * (
        float(np.sum(omega_ref * cov))
        + float(d @ omega_ref @ d)
        + logdet_spd(omega)
        - logdet_spd(omega_ref)
        - p.dim
    )
    # Rounding can push identical densities a hair below zero.
    return max(value, 0.0)


def flatten(g: GaussianInfo, delta: float) -> GaussianInfo:
    """Raise the density to 1/(1+delta): same mean, covariance times (1+delta)."""
    if delta < 0:
        raise NegativeDelta(f"delta must be >= 0, got {delta}")
    if delta == 0:
        return g
    s = 1.0 / (1.0 + delta)
    return GaussianInfo(s * g.info_vec, s * g.info_mat)


def fuse(terms: Iterable[tuple[float, GaussianInfo]]) -> GaussianInfo:
    """Weighted geometric mean (covariance intersection) of Gaussians.

    In information form this is the convex combination of the pairs.
    """
    terms = list(terms)
    if not terms:
        raise WeightsNotConvex("fuse needs at least one term")
    weights = np.array([w for w, _ in terms], dtype=float)
    if np.any(weights <= 0) or abs(weights.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise WeightsNotConvex(f"weights must be positive and sum to 1, got {weights.tolist()}")
    n = terms[0][1].dim
    q = np.zeros(n)
    omega = np.zeros((n, n))
    for w, g in terms:
        if g.dim != n:
            raise DimensionMismatch(f"fuse: dimension {g.dim} differs from {n}")
        q += w * g.info_vec
        omega += w * g.info_mat
    return GaussianInfo(q, omega)


def random_spd(rng: np.random.Generator, n: int, eig_range: Sequence[float] = (0.5, 2.0)) -> np.ndarray:
    """Random SPD matrix with eigenvalues drawn uniformly from ``eig_range``."""
    qmat, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = rng.uniform(eig_range[0], eig_range[1], size=n)
    return symmetrize((qmat * eig) @ qmat.T)
