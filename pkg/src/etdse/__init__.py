"""Event-triggered distributed state estimation over sensor networks.

Nodes run local Kalman/EKF filters, fuse neighbour posteriors by consensus
in information form, and broadcast only when their posterior has drifted
from the last transmitted (reference) density by more than a KL threshold.
"""

from .errors import EstimationError
from .gauss_info import GaussianInfo, GaussianMoment, flatten, fuse, kld, to_info, to_moment
from .models import LinearDynamics, MeasurementModel, SensorKind, cv_dynamics
from .network import ConsensusWeights, NetworkGraph, build_geometric_graph, metropolis_weights
from .trigger import TriggerCalibration, calibrate, should_transmit, solve_lambda_pair

__all__ = [
    "ConsensusWeights",
    "EstimationError",
    "GaussianInfo",
    "GaussianMoment",
    "LinearDynamics",
    "MeasurementModel",
    "NetworkGraph",
    "SensorKind",
    "TriggerCalibration",
    "build_geometric_graph",
    "calibrate",
    "cv_dynamics",
    "flatten",
    "fuse",
    "kld",
    "metropolis_weights",
    "should_transmit",
    "solve_lambda_pair",
    "to_info",
    "to_moment",
]

__version__ = "0.1.0"
