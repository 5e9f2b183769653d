"""
@file errors.py
@brief Exception hierarchy
@details
Every error knows the process exit code the command line should return for
it. Validation problems exit with 2, degenerate statistics with 3.
"""


class DesvarError(Exception):
    """Base class for all desvar errors"""

    exit_code = 1


class ValidationError(DesvarError):
    """A model, experiment or parameter failed validation"""

    exit_code = 2


class ParameterError(ValidationError):
    """Invalid distribution parameters or an out of range uniform"""


class ConfigurationError(ValidationError):
    """A model references something it never declared"""


class ManifestConflictError(ValidationError):
    """Duplicate source names or colliding seeds in a manifest"""


class SimulationError(DesvarError):
    """Raised while a replication is running"""


class CausalityError(SimulationError):
    """An event was scheduled before the current clock"""


class TimeRegressionError(SimulationError):
    """A time-persistent statistic was updated with an earlier time"""


class RunawayModelError(SimulationError):
    """The model exceeded its event budget or cannot drain"""


class UnsynchronizedSourceError(SimulationError):
    """A randomness source of the model is missing from the manifest"""


class StatisticsError(DesvarError):
    """Output analysis could not be carried out"""

    exit_code = 3


class InsufficientDataError(StatisticsError):
    """Too few observations for the requested statistic"""


class DegenerateGroupError(StatisticsError):
    """A group has zero variance so the log-variance terms are undefined"""


class UndefinedMeasureError(StatisticsError):
    """A replication produced a measure with zero observations"""
