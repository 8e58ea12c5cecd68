"""Monte Carlo aggregation, tracking metrics and threshold-to-rate calibration."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import CalibrationFailed, RateOutOfRange
from .config import ScenarioConfig
from .engine import TrialMetrics, run_trial
from .scenario import Scenario, build_scenario

log = logging.getLogger(__name__)

MAX_CALIBRATION_ITERS = 40


def amse(estimates, truth) -> float:
    """Mean over nodes of the Euclidean norm of the state error."""
    err = np.asarray(estimates, dtype=float) - np.asarray(truth, dtype=float)
    return float(np.mean(np.linalg.norm(err, axis=-1)))


@dataclass(eq=False)
class MonteCarloResult:
    amse_series: np.ndarray
    mse_series: np.ndarray
    tx_per_step: np.ndarray  # mean broadcasts per step
    realized_rate: float
    trial_rates: np.ndarray
    trial_amse: np.ndarray  # time-averaged AMSE of each trial
    payload_bytes: int  # summed over trials
    node_count: int
    consensus_steps: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def trials(self) -> int:
        return len(self.trial_rates)

    @property
    def time_avg_amse(self) -> float:
        return float(np.mean(self.amse_series))

    def cumulative_rate(self) -> np.ndarray:
        steps = np.arange(1, len(self.tx_per_step) + 1)
        return np.cumsum(self.tx_per_step) / (self.node_count * self.consensus_steps * steps)


def aggregate(metrics: list[TrialMetrics], node_count: int, consensus_steps: int) -> MonteCarloResult:
    diag: dict = {}
    for m in metrics:
        for k, v in m.diagnostics.items():
            diag[k] = diag.get(k, 0) + v
    return MonteCarloResult(
        amse_series=np.mean([m.amse_series for m in metrics], axis=0),
        mse_series=np.mean([m.mse_series for m in metrics], axis=0),
        tx_per_step=np.mean([m.tx_per_step for m in metrics], axis=0),
        realized_rate=float(np.mean([m.realized_rate for m in metrics])),
        trial_rates=np.array([m.realized_rate for m in metrics]),
        trial_amse=np.array([m.amse_series.mean() for m in metrics]),
        payload_bytes=int(sum(m.payload_bytes for m in metrics)),
        node_count=node_count,
        consensus_steps=consensus_steps,
        diagnostics=diag,
    )


def _run_chunk(scn: Scenario, trials: list[int], check: bool) -> list[TrialMetrics]:
    return [run_trial(scn, t, check_invariants=check) for t in trials]


def run_monte_carlo(
    cfg: ScenarioConfig | Scenario,
    jobs: int = 1,
    check_invariants: bool = False,
    first_trial: int = 0,
) -> MonteCarloResult:
    """Average ``cfg.trials`` independent trials.

    Trial ``t`` draws from streams keyed by (seed, t) only, and results are
    reduced in trial order, so the output does not depend on ``jobs``.
    """
    scn = cfg if isinstance(cfg, Scenario) else build_scenario(cfg)
    trials = list(range(first_trial, first_trial + scn.cfg.trials))
    if jobs <= 1 or len(trials) == 1:
        metrics = _run_chunk(scn, trials, check_invariants)
    else:
        chunks = [trials[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_chunk, [scn] * jobs, chunks, [check_invariants] * jobs))
        by_trial = {}
        for chunk, part in zip(chunks, parts):
            by_trial.update(zip(chunk, part))
        metrics = [by_trial[t] for t in trials]
    return aggregate(metrics, scn.graph.node_count, scn.cfg.consensus_steps)


@dataclass(frozen=True)
class CalibrationResult:
    tau: float
    realized_rate: float
    iterations: int
    history: tuple[tuple[float, float], ...]  # (tau, rate) per pilot run


def calibrate_tau(
    cfg: ScenarioConfig,
    target_rate: float,
    tolerance: float = 0.02,
    trials: int = 20,
    jobs: int = 1,
    log_tau_bounds: tuple[float, float] = (math.log(1e-2), math.log(1e2)),
) -> CalibrationResult:
    """Threshold whose pilot Monte Carlo rate lies within ``tolerance`` of ``target_rate``.

    Bisection on log(tau); the rate decreases with tau. The bracket is widened
    when its ends do not straddle the target. Pilot runs reuse the same
    trial seeds at every iteration, so the search is deterministic.
    """
    if not 0 < target_rate < 1:
        raise RateOutOfRange(f"target rate must be in (0, 1), got {target_rate}; use full_rate for 1")
    pilot_cfg = cfg.replace(trials=trials)
    scn = build_scenario(pilot_cfg)
    history: list[tuple[float, float]] = []

    def rate_at(log_tau: float) -> float:
        tau = math.exp(log_tau)
        pilot = build_scenario_like(scn, pilot_cfg.with_strategy(kind="event_triggered", tau=tau))
        r = run_monte_carlo(pilot, jobs=jobs).realized_rate
        history.append((tau, r))
        log.debug("calibrate_tau: tau=%.6g rate=%.4f", tau, r)
        return r

    def done(r: float) -> bool:
        return abs(r - target_rate) <= tolerance

    def result(log_tau: float, r: float) -> CalibrationResult:
        return CalibrationResult(math.exp(log_tau), r, len(history), tuple(history))

    lo, hi = log_tau_bounds
    r_lo = rate_at(lo)
    r_hi = None
    while not done(r_lo) and r_lo < target_rate and len(history) < MAX_CALIBRATION_ITERS:
        hi, r_hi = lo, r_lo
        lo -= 3.0
        r_lo = rate_at(lo)
    if done(r_lo):
        return result(lo, r_lo)
    if r_hi is None:
        r_hi = rate_at(hi)
    while not done(r_hi) and r_hi > target_rate and len(history) < MAX_CALIBRATION_ITERS:
        lo = hi
        hi += 3.0
        r_hi = rate_at(hi)
    if done(r_hi):
        return result(hi, r_hi)
    while len(history) < MAX_CALIBRATION_ITERS:
        mid = 0.5 * (lo + hi)
        r = rate_at(mid)
        if done(r):
            return result(mid, r)
        if r > target_rate:
            lo = mid
        else:
            hi = mid
    raise CalibrationFailed(
        f"no tau within {tolerance} of rate {target_rate} after {len(history)} pilot runs"
    )


def build_scenario_like(scn: Scenario, cfg: ScenarioConfig) -> Scenario:
    """Same deployment as ``scn`` with a different configuration (strategy, trials)."""
    return build_scenario(cfg, graph=scn.graph)
