"""Monte Carlo simulation harness: configuration, scenarios, trial engines, aggregation."""

from .config import ScenarioConfig, StrategyConfig, from_dict, load_config, preset
from .engine import TrialMetrics, run_trial
from .montecarlo import CalibrationResult, MonteCarloResult, amse, calibrate_tau, run_monte_carlo
from .scenario import Scenario, build_scenario

__all__ = [
    "CalibrationResult",
    "MonteCarloResult",
    "Scenario",
    "ScenarioConfig",
    "StrategyConfig",
    "TrialMetrics",
    "amse",
    "build_scenario",
    "calibrate_tau",
    "from_dict",
    "load_config",
    "preset",
    "run_monte_carlo",
    "run_trial",
]
