import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from forecast_eval.core import BevBox, MotionSubclass, Timeline
from forecast_eval.geometry import bev_iou
from forecast_eval.subclass import derive_prediction_subclass, derive_subclass, fallback_velocity

from builders import TL, box, forecast, path_gt, straight
from oracles import mc_iou

S, L, N = MotionSubclass.STATIC, MotionSubclass.LINEAR, MotionSubclass.NONLINEAR


def test_identity_is_static():
    b = box(0, 0)
    assert derive_subclass(b, b, (5, 0), 3.0) is S


def test_constant_velocity_endpoint_is_linear():
    assert derive_subclass(box(0, 0), box(6, 0), (2, 0), TL.horizon_seconds) is L


def test_turn_is_nonlinear():
    first, last = box(0, 0), box(6, 6, math.pi / 2)
    target = first.moved_to(6, 0)
    est = mc_iou(target, last, 400_000, np.random.default_rng(0))[0]
    assert est == 0.0  # sampled disjointness
    assert derive_subclass(first, last, (2, 0), TL.horizon_seconds) is N


def test_missing_velocity_counts_as_zero():
    # far displacement with no velocity can never be linear
    assert derive_subclass(box(0, 0), box(20, 0), None, 3.0) is N


def test_fallback_velocity_from_offset_one():
    boxes = [(0, box(0, 0)), (1, box(1, 0.5)), (6, box(6, 3))]
    assert fallback_velocity(boxes, TL) == (2.0, 1.0)
    assert fallback_velocity([(0, box(0, 0)), (2, box(1, 0))], TL) == (0.0, 0.0)


def test_gt_fallback_velocity_gives_linear():
    g = path_gt("a", [(2 * t * 0.5, 0) for t in range(7)])
    assert g.velocity0 is None
    assert g.subclass is L


def test_partial_gt_uses_last_available_offset():
    # annotated to offset 3 only; elapsed time is 1.5 s
    g = path_gt("a", [(0, 0), (3, 0), (6, 0), (9, 0)], velocity0=(6, 0))
    assert g.subclass is L


def test_prediction_static():
    fs = forecast((3, 3), 0.5, [(3, 3)] * 6)
    assert derive_prediction_subclass(fs, 0, TL) is S


def test_prediction_linear():
    fs = forecast((0, 0), 0.5, straight((0, 0), (4, 1)))
    assert derive_prediction_subclass(fs, 0, TL) is L


def test_prediction_quarter_arc_radius_8():
    theta = (math.pi / 2) * np.arange(1, 7) / 6
    wp = np.stack([8 * np.sin(theta), 8 - 8 * np.cos(theta)], axis=1)
    fs = forecast((0, 0), 0.5, wp)
    anchor = fs.anchor
    v0 = wp[0] / TL.dt
    target = anchor.moved_to(*(v0 * TL.horizon_seconds))
    last = anchor.moved_to(*wp[-1])
    rng = np.random.default_rng(3)
    assert mc_iou(target, last, 400_000, rng)[0] == 0.0
    assert mc_iou(anchor, last, 400_000, rng)[0] == 0.0
    assert derive_prediction_subclass(fs, 0, TL) is N


def test_prediction_uses_requested_candidate():
    fs = forecast((0, 0), 0.5, [(0, 0)] * 6, straight((0, 0), (5, 0)))
    assert derive_prediction_subclass(fs, 0, TL) is S
    assert derive_prediction_subclass(fs, 1, TL) is L


sizes = st.tuples(st.floats(0.5, 6), st.floats(0.5, 3))
angles = st.floats(-math.pi, math.pi)


@given(sizes, angles, angles, angles, st.floats(1.001, 5), st.floats(-10, 10), st.floats(-10, 10))
def test_displacement_beyond_diagonal_never_static(size, yaw0, yaw1, direction, factor, vx, vy):
    diag = math.hypot(*size)
    d = diag * factor
    first = BevBox(0, 0, size[0], size[1], yaw0)
    last = BevBox(d * math.cos(direction), d * math.sin(direction), size[0], size[1], yaw1)
    assert derive_subclass(first, last, (vx, vy), 3.0) is not S


@given(
    st.floats(0, 8),
    st.floats(-math.pi, math.pi),
    st.floats(-1, 1),
    st.sampled_from([(6, 0.5), (12, 0.25), (30, 0.1)]),
)
def test_finer_timeline_keeps_subclass(speed, heading, turn, fine):
    """Same physical path sampled at a finer rate, explicit velocity: same subclass."""

    def sample(steps, dt):
        t = np.arange(steps + 1) * dt
        if abs(turn) < 1e-9:
            x, y = speed * t * math.cos(heading), speed * t * math.sin(heading)
        else:
            h = heading + turn * t
            x = speed / turn * (np.sin(h) - math.sin(heading))
            y = -speed / turn * (np.cos(h) - math.cos(heading))
        tl = Timeline(0, steps, dt)
        v0 = (speed * math.cos(heading), speed * math.sin(heading))
        return path_gt("a", list(zip(x, y)), tl=tl, velocity0=v0, yaws=list(heading + turn * t)).subclass

    assert sample(6, 0.5) is sample(*fine)


@given(sizes, angles, st.floats(-20, 20), st.floats(-20, 20), st.floats(-10, 10), st.floats(-10, 10))
def test_exhaustive_partition(size, yaw, x, y, vx, vy):
    first = BevBox(0, 0, size[0], size[1], yaw)
    last = BevBox(x, y, size[0], size[1], yaw)
    sc = derive_subclass(first, last, (vx, vy), 3.0)
    assert sc in (S, L, N)
    if sc is S:
        assert bev_iou(first, last) > 0
