"""Motion subclass (static / linear / non-linear) of ground-truth and predicted trajectories.

A trajectory is static when its first and last boxes overlap. Otherwise a
constant-velocity target box is formed from the first box and its initial
velocity; overlap between target and last box means linear, anything else is
non-linear. Predictions without a subclass label go through the same rule.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .core import BevBox, ForecastSet, MotionSubclass, Timeline
from .geometry import bev_iou


def derive_subclass(
    first: BevBox,
    last: BevBox,
    velocity0: Optional[Sequence[float]],
    elapsed: float,
) -> MotionSubclass:
    """Classify a trajectory from its first and last boxes.

    ``elapsed`` is the time in seconds between the two boxes. The target box
    keeps the first box's size and yaw. A missing velocity counts as zero.
    """
    if bev_iou(first, last) > 0.0:
        return MotionSubclass.STATIC
    vx, vy = (0.0, 0.0) if velocity0 is None else (float(velocity0[0]), float(velocity0[1]))
    target = first.moved_to(first.cx + vx * elapsed, first.cy + vy * elapsed)
    if bev_iou(target, last) > 0.0:
        return MotionSubclass.LINEAR
    return MotionSubclass.NONLINEAR


def fallback_velocity(
    boxes: Sequence[tuple[int, BevBox]], timeline: Timeline
) -> tuple[float, float]:
    """Velocity at offset 0 from the offset-1 box, or zero when that box is missing."""
    if len(boxes) > 1 and boxes[1][0] == 1:
        b0, b1 = boxes[0][1], boxes[1][1]
        return ((b1.cx - b0.cx) / timeline.dt, (b1.cy - b0.cy) / timeline.dt)
    return (0.0, 0.0)


def derive_gt_subclass(
    boxes: Sequence[tuple[int, BevBox]],
    velocity0: Optional[Sequence[float]],
    timeline: Timeline,
) -> MotionSubclass:
    """Subclass of a ground-truth box sequence sorted by offset (offset 0 first)."""
    if velocity0 is None:
        velocity0 = fallback_velocity(boxes, timeline)
    last_offset, last = boxes[-1]
    return derive_subclass(boxes[0][1], last, velocity0, last_offset * timeline.dt)


def derive_prediction_subclass(
    fs: ForecastSet, candidate_index: int, timeline: Timeline
) -> MotionSubclass:
    """Subclass of one forecast candidate, anchored at the set's current-frame box.

    The last box is the anchor's footprint placed on the final waypoint, and the
    initial velocity is the first step divided by ``dt``.
    """
    wp = fs.candidates[candidate_index].waypoints
    a = fs.anchor
    v0 = ((wp[0, 0] - a.cx) / timeline.dt, (wp[0, 1] - a.cy) / timeline.dt)
    last = a.moved_to(wp[-1, 0], wp[-1, 1])
    return derive_subclass(a, last, v0, wp.shape[0] * timeline.dt)
