"""Small constructors for hand-written test instances."""

from __future__ import annotations

import numpy as np

from forecast_eval.core import BevBox, ForecastCandidate, ForecastSet, GtTrajectory, Timeline

TL = Timeline(0, 6, 0.5)
CAR = (4.0, 2.0)


def box(x, y, yaw=0.0, size=CAR):
    return BevBox(x, y, size[0], size[1], yaw)


def line_gt(iid, start, velocity, tl=TL, size=CAR, offsets=None, with_velocity=True):
    """GT moving at constant velocity from ``start``; ``offsets`` restricts annotations."""
    offsets = range(tl.horizon_steps + 1) if offsets is None else offsets
    sx, sy = start
    vx, vy = velocity
    boxes = [(o, box(sx + vx * o * tl.dt, sy + vy * o * tl.dt, size=size)) for o in offsets]
    return GtTrajectory.from_boxes(iid, boxes, tl, velocity if with_velocity else None)


def path_gt(iid, points, tl=TL, size=CAR, velocity0=None, yaws=None):
    """GT through explicit centers at offsets 0..len(points)-1."""
    yaws = [0.0] * len(points) if yaws is None else yaws
    boxes = [(o, box(x, y, yw, size)) for o, ((x, y), yw) in enumerate(zip(points, yaws))]
    return GtTrajectory.from_boxes(iid, boxes, tl, velocity0)


def forecast(anchor_xy, det_score, *paths, scores=None, size=CAR):
    """ForecastSet with one candidate per waypoint path."""
    scores = [det_score] * len(paths) if scores is None else scores
    cands = tuple(ForecastCandidate(np.asarray(p, dtype=float), s) for p, s in zip(paths, scores))
    return ForecastSet(box(*anchor_xy, size=size), det_score, cands)


def straight(start, velocity, tl=TL):
    t = np.arange(1, tl.horizon_steps + 1)[:, None] * tl.dt
    return np.asarray(start, dtype=float) + t * np.asarray(velocity, dtype=float)


def oracle_for(gt, score=1.0):
    return forecast(gt.first.center, score, gt.positions[1:])


def arc_points(start, speed, heading, turn, tl=TL):
    """Centers and yaws of a constant-turn-rate path at offsets 0..T."""
    t = np.arange(tl.horizon_steps + 1) * tl.dt
    h = heading + turn * t
    if abs(turn) < 1e-6:
        return list(zip(start[0] + speed * t * np.cos(heading), start[1] + speed * t * np.sin(heading))), list(h)
    x = start[0] + speed / turn * (np.sin(h) - np.sin(heading))
    y = start[1] - speed / turn * (np.cos(h) - np.cos(heading))
    return list(zip(x, y)), list(h)


def random_instance(rng, max_preds=6, max_gts=4, max_cands=5, tl=TL):
    """Small random scene mixing static, straight and turning ground truth,
    some partially annotated, with predictions scattered around them."""
    from forecast_eval.core import GtTrajectory

    gts = []
    for j in range(int(rng.integers(0, max_gts + 1))):
        start = tuple(rng.uniform(-8, 8, 2))
        kind = int(rng.integers(3))
        heading = float(rng.uniform(-np.pi, np.pi))
        if kind == 0:
            pts, yaws, v0 = [start] * (tl.horizon_steps + 1), [heading] * (tl.horizon_steps + 1), (0.0, 0.0)
        else:
            speed = float(rng.uniform(2, 6))
            turn = 0.0 if kind == 1 else float(rng.choice([-1, 1]) * rng.uniform(0.5, 1.0))
            pts, yaws = arc_points(start, speed, heading, turn, tl)
            v0 = (speed * np.cos(heading), speed * np.sin(heading))
        n = tl.horizon_steps + 1
        if rng.random() < 0.15:
            n = int(rng.integers(2, tl.horizon_steps + 1))
        boxes = [(o, box(*pts[o], yaws[o])) for o in range(n)]
        gts.append(GtTrajectory.from_boxes(f"g{j}", boxes, tl, v0))
    preds = []
    for _ in range(int(rng.integers(0, max_preds + 1))):
        if gts and rng.random() < 0.75:
            g = gts[int(rng.integers(len(gts)))]
            anchor = np.array(g.first.center) + rng.normal(0, 0.8, 2)
            target = np.array(g.last.center)
        else:
            anchor = rng.uniform(-8, 8, 2)
            target = anchor + rng.normal(0, 6, 2)
        paths = []
        for _ in range(int(rng.integers(1, max_cands + 1))):
            end = target + rng.normal(0, 3, 2)
            frac = np.arange(1, tl.horizon_steps + 1)[:, None] / tl.horizon_steps
            paths.append(anchor + frac * (end - anchor))
        # coarse scores so that ties occur
        det = float(np.round(rng.uniform(0.05, 1), 1))
        fscores = list(np.round(rng.uniform(0, 1, len(paths)), 2))
        preds.append(forecast(tuple(anchor), det, *paths, scores=fscores))
    return preds, gts
