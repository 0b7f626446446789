"""Processing pipeline for automated-vehicle car-following trajectories.

Raw datasets are mapped through an adapter into a 13-column unified format,
cleaned in two steps, and summarised with safety, mobility, stability and
fuel metrics plus descriptive analysis.
"""
from .core import LABELS, LongitudinalTrajectory, build_trajectory
from .errors import (
    CalibrationError,
    ConfigError,
    IngestError,
    SchemaError,
    StageError,
    UltraTrajError,
    UndefinedCorrelationError,
)
from .unified_csv import read_unified, write_unified

__version__ = "0.1.0"

__all__ = [
    "LABELS",
    "LongitudinalTrajectory",
    "build_trajectory",
    "read_unified",
    "write_unified",
    "UltraTrajError",
    "SchemaError",
    "IngestError",
    "ConfigError",
    "CalibrationError",
    "UndefinedCorrelationError",
    "StageError",
]
