"""Geometric forecasters over detector outputs, and backcast assembly of future
detections into anchored multi-candidate forecasts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import BevBox, ForecastCandidate, ForecastSet, MotionSubclass, Timeline, _check_score
from .subclass import derive_subclass


@dataclass(frozen=True, eq=False)
class Detection:
    box: BevBox
    score: float
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "score", _check_score(self.score, "score"))
        object.__setattr__(self, "velocity", (float(self.velocity[0]), float(self.velocity[1])))


@dataclass(frozen=True, eq=False)
class FutureDetection:
    """Detection at the final offset with per-step backward displacements.

    ``back_offsets[t-1]`` is the displacement from offset ``t`` to offset
    ``t-1``, so summing all of them walks from offset T back to offset 0.
    """

    position: tuple[float, float]
    score: float
    back_offsets: np.ndarray  # (T, 2)

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "score", _check_score(self.score, "score"))
        bo = np.array(self.back_offsets, dtype=float).reshape(-1, 2)
        bo.flags.writeable = False
        object.__setattr__(self, "back_offsets", bo)

    def chain(self) -> np.ndarray:
        """Backcast positions for offsets 0..T, shape (T+1, 2)."""
        T = len(self.back_offsets)
        pts = np.empty((T + 1, 2))
        pts[T] = self.position
        for t in range(T, 0, -1):
            pts[t - 1] = pts[t] + self.back_offsets[t - 1]
        return pts


def _single(det: Detection, waypoints: np.ndarray, det_score: Optional[float] = None) -> ForecastSet:
    return ForecastSet(det.box, det.score if det_score is None else det_score, (ForecastCandidate(waypoints, det.score),))


def is_stationary(det: Detection, timeline: Timeline) -> bool:
    """True when extrapolating the detection's velocity over the horizon keeps
    the box overlapping its current footprint."""
    b = det.box
    vx, vy = det.velocity
    H = timeline.horizon_seconds
    moved = b.moved_to(b.cx + vx * H, b.cy + vy * H)
    return derive_subclass(b, moved, (vx, vy), H) is MotionSubclass.STATIC


def stationarity_score(det: Detection, timeline: Timeline) -> float:
    """Re-ranked confidence: stationary detections map to [0.5, 1], others to [0, 0.5].

    The order inside each group is preserved, and every stationary detection
    outranks every moving one.
    """
    if is_stationary(det, timeline):
        return 0.5 + 0.5 * det.score
    return 0.5 * det.score


def constant_position(
    dets: Sequence[Detection], timeline: Timeline, rerank_stationary: bool = False
) -> list[ForecastSet]:
    out = []
    for d in dets:
        wp = np.tile([d.box.cx, d.box.cy], (timeline.horizon_steps, 1))
        out.append(_single(d, wp, stationarity_score(d, timeline) if rerank_stationary else None))
    return out


def constant_velocity(dets: Sequence[Detection], timeline: Timeline) -> list[ForecastSet]:
    t = np.arange(1, timeline.horizon_steps + 1)[:, None] * timeline.dt
    out = []
    for d in dets:
        wp = np.array([d.box.cx, d.box.cy]) + t * np.array(d.velocity)
        out.append(_single(d, wp))
    return out


def forward_integrate(
    dets: Sequence[Detection], per_step_velocities: Sequence, timeline: Timeline
) -> list[ForecastSet]:
    """Integrate a distinct velocity per step: waypoint_t = waypoint_{t-1} + v_t * dt."""
    if len(per_step_velocities) != len(dets):
        raise ValueError("one velocity sequence per detection is required")
    out = []
    for i, (d, vs) in enumerate(zip(dets, per_step_velocities)):
        vs = np.asarray(vs, dtype=float).reshape(-1, 2)
        if len(vs) != timeline.horizon_steps:
            raise ValueError(
                f"detection {i}: expected {timeline.horizon_steps} step velocities, got {len(vs)}"
            )
        wp = np.empty((timeline.horizon_steps, 2))
        x, y = d.box.cx, d.box.cy
        for t in range(timeline.horizon_steps):
            x += vs[t, 0] * timeline.dt
            y += vs[t, 1] * timeline.dt
            wp[t] = (x, y)
        out.append(_single(d, wp))
    return out


@dataclass
class BackcastResult:
    forecasts: list[ForecastSet]
    discarded: int
    anchor_indices: list[int]


def backcast_assemble(
    current_dets: Sequence[Detection],
    future_dets: Sequence[FutureDetection],
    timeline: Timeline,
    max_radius: float = math.inf,
) -> BackcastResult:
    """Attach each future detection to the current detection nearest its backcast origin.

    Matching is many-to-one; every anchor that receives at least one future
    detection becomes a ForecastSet whose candidates are the backcast chains
    (offsets 1..T) scored by the future detection's score, best first. Chains
    are not shifted onto their anchor. Future detections with no anchor within
    ``max_radius`` (or no anchors at all) are counted in ``discarded``.
    """
    T = timeline.horizon_steps
    for i, f in enumerate(future_dets):
        if len(f.back_offsets) != T:
            raise ValueError(f"future detection {i}: expected {T} back offsets, got {len(f.back_offsets)}")
    if not current_dets:
        return BackcastResult([], len(future_dets), [])
    anchors = np.array([(d.box.cx, d.box.cy) for d in current_dets])
    groups: dict[int, list[tuple[float, np.ndarray]]] = {}
    discarded = 0
    for f in future_dets:
        ch = f.chain()
        dist = np.hypot(anchors[:, 0] - ch[0, 0], anchors[:, 1] - ch[0, 1])
        j = int(np.argmin(dist))
        if dist[j] > max_radius:
            discarded += 1
            continue
        groups.setdefault(j, []).append((f.score, ch[1:]))
    out, idx = [], []
    for j in sorted(groups):
        members = sorted(groups[j], key=lambda m: -m[0])
        cands = tuple(ForecastCandidate(wp, s) for s, wp in members)
        d = current_dets[j]
        out.append(ForecastSet(d.box, d.score, cands))
        idx.append(j)
    return BackcastResult(out, discarded, idx)
