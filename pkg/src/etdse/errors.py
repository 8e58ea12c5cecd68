"""Exception hierarchy shared by all modules."""


class EstimationError(Exception):
    """Base class for every error raised by this package."""


class NotPositiveDefinite(EstimationError, ValueError):
    pass


class DimensionMismatch(EstimationError, ValueError):
    pass


class NegativeDelta(EstimationError, ValueError):
    pass


class WeightsNotConvex(EstimationError, ValueError):
    pass


class NonPositiveInput(EstimationError, ValueError):
    pass


class SensorCoincidesWithTarget(EstimationError, ValueError):
    pass


class InnovationCovarianceNotPositive(EstimationError, ValueError):
    pass


class NonPositiveTau(EstimationError, ValueError):
    pass


class CannotConnect(EstimationError, RuntimeError):
    pass


class AsymmetricGraph(EstimationError, ValueError):
    pass


class UnknownSender(EstimationError, ValueError):
    pass


class ProtocolError(EstimationError, RuntimeError):
    """A node operation was called in a state its contract forbids."""


class OddSensorCount(EstimationError, ValueError):
    pass


class RateOutOfRange(EstimationError, ValueError):
    pass


class CalibrationFailed(EstimationError, RuntimeError):
    pass


class ConfigInvalid(EstimationError, ValueError):
    pass


class SimulationDiverged(EstimationError, RuntimeError):
    """A numeric failure inside a trial; the message names trial, step and node."""


class IoFailure(EstimationError, OSError):
    """An output file or directory could not be written."""


class NonFiniteValue(EstimationError, ValueError):
    """A mean or information vector has nan or inf entries."""
