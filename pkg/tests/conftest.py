import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from etdse.gauss_info import GaussianInfo, kld
from etdse.trigger import solve_lambda_pair

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# One "criterion N: PASS/FAIL" line per acceptance check, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def spd(rng, n, lo=0.5, hi=2.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (q * rng.uniform(lo, hi, n)) @ q.T


def zero_noise_dynamics(A):
    """Stand-in with Q = 0; LinearDynamics itself insists on a PD Q."""
    A = np.asarray(A, dtype=float)
    return SimpleNamespace(A=A, Q=np.zeros_like(A), T=1.0)


def sample_silent_pair(rng, tau, n=4):
    """(x, omega, x_ref, omega_ref) with kld(local, reference) <= tau, by perturbation and rejection."""
    lam_lo, lam_hi = solve_lambda_pair(tau)
    while True:
        omega = spd(rng, n, 0.1, 10.0)
        root = np.linalg.cholesky(omega)
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        # Relative eigenvalues spread over (and slightly past) the admissible band.
        lam = np.exp(rng.uniform(np.log(lam_lo) * 1.05, np.log(lam_hi) * 1.05, n))
        omega_ref = root @ (q * lam) @ q.T @ root.T
        omega_ref = 0.5 * (omega_ref + omega_ref.T)
        x = rng.normal(0, 5, n)
        d = rng.standard_normal(n)
        d *= rng.uniform(0, math.sqrt(2 * tau * 1.2)) / math.sqrt(d @ omega_ref @ d)
        local = GaussianInfo(omega @ x, omega)
        ref = GaussianInfo(omega_ref @ (x + d), omega_ref)
        if kld(local, ref) <= tau:
            return x, omega, x + d, omega_ref


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
