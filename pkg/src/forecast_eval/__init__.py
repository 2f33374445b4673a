"""Evaluation toolkit for joint detection and trajectory forecasting."""

from .core import (
    BevBox,
    ClassProfile,
    ConfigError,
    EvalConfig,
    EvalReport,
    ForecastCandidate,
    ForecastSet,
    GtTrajectory,
    MetricUndefinedError,
    MotionSubclass,
    Timeline,
    validate_config,
)
from .geometry import bev_iou, center_distance, clip_convex
from .metrics import detection_map, evaluate, forecast_ap, legacy_displacement, map_f
from .subclass import derive_prediction_subclass, derive_subclass

__version__ = "0.1.0"
