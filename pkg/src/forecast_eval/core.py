"""Domain types shared by every other module: boxes, trajectories, forecasts,
evaluation configuration and the serializable evaluation report."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from functools import cached_property
from typing import Any, Optional, Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised when an EvalConfig violates one of its invariants."""


class MetricUndefinedError(ValueError):
    """Raised when an aggregate metric has no defined component at all."""


class MotionSubclass(str, enum.Enum):
    STATIC = "static"
    LINEAR = "linear"
    NONLINEAR = "nonlinear"


SUBCLASSES: tuple[MotionSubclass, ...] = (
    MotionSubclass.STATIC,
    MotionSubclass.LINEAR,
    MotionSubclass.NONLINEAR,
)


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    y = math.remainder(float(yaw), 2.0 * math.pi)
    if y <= -math.pi:
        y += 2.0 * math.pi
    return y


def _check_score(value: float, name: str) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return value


@dataclass(frozen=True)
class BevBox:
    """Oriented bird's-eye-view box. Yaw is normalized to (-pi, pi] on construction."""

    cx: float
    cy: float
    length: float
    width: float
    yaw: float = 0.0

    def __post_init__(self):
        vals = (float(self.cx), float(self.cy), float(self.length), float(self.width), float(self.yaw))
        if not all(map(math.isfinite, vals)):
            raise ValueError(f"box fields must be finite, got {vals}")
        if not (vals[2] > 0 and vals[3] > 0):
            raise ValueError(f"box extents must be positive, got {vals[2]}x{vals[3]}")
        d = self.__dict__
        d["cx"], d["cy"], d["length"], d["width"] = vals[:4]
        d["yaw"] = normalize_yaw(vals[4])

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    def moved_to(self, x: float, y: float) -> "BevBox":
        return BevBox(x, y, self.length, self.width, self.yaw)


@dataclass(frozen=True)
class Timeline:
    t_obs_index: int = 0
    horizon_steps: int = 6
    dt: float = 0.5

    def __post_init__(self):
        if int(self.horizon_steps) != self.horizon_steps or self.horizon_steps < 1:
            raise ValueError("horizon_steps must be an integer >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def horizon_seconds(self) -> float:
        return self.horizon_steps * self.dt


@dataclass(frozen=True, eq=False)
class GtTrajectory:
    """Ground-truth instance over the horizon.

    Build instances with :meth:`from_boxes`; it sorts and validates the boxes,
    fills ``complete`` and derives the motion subclass.
    """

    instance_id: str
    boxes: tuple[tuple[int, BevBox], ...]
    horizon_steps: int
    velocity0: Optional[tuple[float, float]]
    subclass: MotionSubclass
    complete: bool

    @classmethod
    def from_boxes(
        cls,
        instance_id: Any,
        boxes: Sequence[tuple[int, BevBox]],
        timeline: Timeline,
        velocity0: Optional[Sequence[float]] = None,
    ) -> "GtTrajectory":
        from .subclass import derive_gt_subclass

        items = sorted(((int(o), b) for o, b in boxes), key=lambda ob: ob[0])
        if not items or items[0][0] != 0:
            raise ValueError(f"trajectory {instance_id!r}: offset 0 box is required")
        offsets = [o for o, _ in items]
        if any(b <= a for a, b in zip(offsets, offsets[1:])):
            raise ValueError(f"trajectory {instance_id!r}: duplicate offsets")
        if offsets[-1] > timeline.horizon_steps:
            raise ValueError(
                f"trajectory {instance_id!r}: offset {offsets[-1]} beyond horizon "
                f"{timeline.horizon_steps}"
            )
        v0 = None if velocity0 is None else (float(velocity0[0]), float(velocity0[1]))
        items_t = tuple(items)
        complete = offsets == list(range(timeline.horizon_steps + 1))
        subclass = derive_gt_subclass(items_t, v0, timeline)
        return cls(str(instance_id), items_t, timeline.horizon_steps, v0, subclass, complete)

    @property
    def first(self) -> BevBox:
        return self.boxes[0][1]

    @property
    def last(self) -> BevBox:
        return self.boxes[-1][1]

    @property
    def last_offset(self) -> int:
        return self.boxes[-1][0]

    @cached_property
    def positions(self) -> np.ndarray:
        """(T+1, 2) centers by offset; NaN where no annotation exists."""
        out = np.full((self.horizon_steps + 1, 2), np.nan)
        for o, b in self.boxes:
            out[o] = (b.cx, b.cy)
        out.flags.writeable = False
        return out


@dataclass(frozen=True, eq=False)
class ForecastCandidate:
    waypoints: np.ndarray  # (T, 2), offsets 1..T
    forecast_score: float

    def __post_init__(self):
        wp = np.array(self.waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 2 or wp.shape[0] < 1:
            raise ValueError(f"waypoints must have shape (T, 2), got {wp.shape}")
        if not np.all(np.isfinite(wp)):
            raise ValueError("waypoints must be finite")
        wp.flags.writeable = False
        object.__setattr__(self, "waypoints", wp)
        object.__setattr__(self, "forecast_score", _check_score(self.forecast_score, "forecast_score"))


@dataclass(frozen=True, eq=False)
class ForecastSet:
    """Anchor detection plus one or more scored future trajectories."""

    anchor: BevBox
    det_score: float
    candidates: tuple[ForecastCandidate, ...]

    def __post_init__(self):
        cands = tuple(self.candidates)
        if not cands:
            raise ValueError("a ForecastSet needs at least one candidate")
        n = cands[0].waypoints.shape[0]
        if any(c.waypoints.shape[0] != n for c in cands):
            raise ValueError("all candidates must have the same number of waypoints")
        object.__setattr__(self, "candidates", cands)
        object.__setattr__(self, "det_score", _check_score(self.det_score, "det_score"))

    @property
    def horizon_steps(self) -> int:
        return self.candidates[0].waypoints.shape[0]

    @cached_property
    def ranked(self) -> tuple[int, ...]:
        """Candidate indices by forecast score, highest first; ties keep the lower index."""
        return tuple(sorted(range(len(self.candidates)), key=lambda i: -self.candidates[i].forecast_score))

    @cached_property
    def stacked(self) -> np.ndarray:
        return np.stack([c.waypoints for c in self.candidates])


class ClassProfile(str, enum.Enum):
    CAR = "car"
    PEDESTRIAN = "pedestrian"


PROFILE_THRESHOLDS = {
    ClassProfile.CAR: ((0.5, 1.0, 2.0, 4.0), (1.0, 2.0, 4.0, 8.0)),
    ClassProfile.PEDESTRIAN: ((0.125, 0.25, 0.5, 1.0), (0.25, 0.5, 1.0, 2.0)),
}

AVG_RECALL_LEVELS = tuple(i / 10 for i in range(1, 11))


@dataclass(frozen=True)
class EvalConfig:
    timeline: Timeline = field(default_factory=Timeline)
    current_thresholds: tuple[float, ...] = PROFILE_THRESHOLDS[ClassProfile.CAR][0]
    final_thresholds: tuple[float, ...] = PROFILE_THRESHOLDS[ClassProfile.CAR][1]
    k: int = 1
    class_profile: ClassProfile = ClassProfile.CAR
    recall_levels: tuple[float, ...] = (0.6, 0.9)
    avg_recall_levels: tuple[float, ...] = AVG_RECALL_LEVELS
    miss_fde_threshold: float = 2.0
    legacy_tau: float = 2.0
    pr_points: int = 101
    nuscenes_clip: bool = False
    # off: AP_f uses det_score like AP_det; on: rank by the selected candidate's forecast_score
    rank_by_forecast_score: bool = False

    @classmethod
    def for_profile(cls, profile: str | ClassProfile = ClassProfile.CAR, **overrides) -> "EvalConfig":
        profile = ClassProfile(profile)
        cur, fin = PROFILE_THRESHOLDS[profile]
        return cls(current_thresholds=cur, final_thresholds=fin, class_profile=profile, **overrides)

    @property
    def threshold_pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.current_thresholds, self.final_thresholds))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Timeline):
                v = {"t_obs_index": v.t_obs_index, "horizon_steps": v.horizon_steps, "dt": v.dt}
            elif isinstance(v, enum.Enum):
                v = v.value
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EvalConfig":
        kw = dict(d)
        if "timeline" in kw:
            kw["timeline"] = Timeline(**kw["timeline"])
        if "class_profile" in kw:
            kw["class_profile"] = ClassProfile(kw["class_profile"])
        for name in ("current_thresholds", "final_thresholds", "recall_levels", "avg_recall_levels"):
            if name in kw:
                kw[name] = tuple(float(x) for x in kw[name])
        return cls(**kw)


def validate_config(cfg: EvalConfig) -> EvalConfig:
    """Return ``cfg`` unchanged if every invariant holds, else raise ConfigError."""
    if len(cfg.current_thresholds) != len(cfg.final_thresholds):
        raise ConfigError(
            f"threshold length mismatch: {len(cfg.current_thresholds)} current vs "
            f"{len(cfg.final_thresholds)} final"
        )
    if not cfg.current_thresholds:
        raise ConfigError("at least one threshold pair is required")
    if any(not t > 0 for t in (*cfg.current_thresholds, *cfg.final_thresholds)):
        raise ConfigError("all thresholds must be positive")
    if int(cfg.k) != cfg.k or cfg.k < 1:
        raise ConfigError(f"k must be a positive integer, got {cfg.k!r}")
    for name in ("recall_levels", "avg_recall_levels"):
        levels = getattr(cfg, name)
        if not levels or any(not 0 < r <= 1 for r in levels):
            raise ConfigError(f"{name} must be non-empty and lie in (0, 1]")
    if not cfg.miss_fde_threshold > 0 or not cfg.legacy_tau > 0:
        raise ConfigError("miss_fde_threshold and legacy_tau must be positive")
    if cfg.pr_points < 2:
        raise ConfigError("pr_points must be at least 2")
    return cfg


@dataclass
class EvalReport:
    """Output of one evaluation run. Undefined APs (no ground truth in a
    subclass) are stored as ``None``."""

    ap_det: dict[str, Optional[float]]
    ap_f: dict[str, Optional[float]]
    map_det: Optional[float]
    map_f: Optional[float]
    legacy: dict[str, Any]
    pr_curves: dict[str, list[list[float]]]
    config: dict[str, Any]
    digests: dict[str, str]
    gt_counts: dict[str, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**{f.name: d[f.name] for f in fields(cls) if f.name in d})
