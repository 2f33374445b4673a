"""Planar geometry for BEV boxes: center distance, convex clipping and rotated IoU."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .core import BevBox

# Intersections with area at or below this are treated as empty (edge contact).
AREA_EPS = 1e-12

Point = tuple[float, float]


def _xy(p: Union[BevBox, Sequence[float]]) -> Point:
    if isinstance(p, BevBox):
        return (p.cx, p.cy)
    return (float(p[0]), float(p[1]))


def center_distance(a: Union[BevBox, Sequence[float]], b: Union[BevBox, Sequence[float]]) -> float:
    (ax, ay), (bx, by) = _xy(a), _xy(b)
    return math.hypot(ax - bx, ay - by)


def _signed_area(pts: Sequence[Point]) -> float:
    s = 0.0
    n = len(pts)
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        s += x1 * y2 - x2 * y1
    return 0.5 * s


@dataclass(frozen=True)
class Polygon2:
    """Convex polygon with counter-clockwise vertices."""

    vertices: tuple[Point, ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise ValueError("a polygon needs at least 3 vertices")
        a = _signed_area(verts)
        if abs(a) <= AREA_EPS:
            raise ValueError("polygon has zero area")
        if a < 0:
            verts = verts[::-1]
        object.__setattr__(self, "vertices", verts)

    @property
    def area(self) -> float:
        return _signed_area(self.vertices)


def box_corners(box: BevBox) -> tuple[Point, ...]:
    """Corners of the box footprint in counter-clockwise order."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw = 0.5 * box.length, 0.5 * box.width
    out = []
    for u, v in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):
        out.append((box.cx + u * c - v * s, box.cy + u * s + v * c))
    return tuple(out)


def box_polygon(box: BevBox) -> Polygon2:
    return Polygon2(box_corners(box))


def _clip_vertices(subject: list[Point], clip: Sequence[Point]) -> list[Point]:
    """Sutherland-Hodgman: clip ``subject`` against each edge of the CCW convex ``clip``."""
    out = list(subject)
    n = len(clip)
    for i in range(n):
        if not out:
            break
        ex1, ey1 = clip[i]
        ex2, ey2 = clip[(i + 1) % n]
        dx, dy = ex2 - ex1, ey2 - ey1
        inp, out = out, []
        px, py = inp[-1]
        pside = dx * (py - ey1) - dy * (px - ex1)
        for qx, qy in inp:
            qside = dx * (qy - ey1) - dy * (qx - ex1)
            if qside >= 0:
                if pside < 0:
                    t = pside / (pside - qside)
                    out.append((px + t * (qx - px), py + t * (qy - py)))
                out.append((qx, qy))
            elif pside >= 0:
                t = pside / (pside - qside)
                out.append((px + t * (qx - px), py + t * (qy - py)))
            px, py, pside = qx, qy, qside
    return out


def clip_convex(a: Polygon2, b: Polygon2) -> Optional[Polygon2]:
    """Intersection of two convex polygons, or ``None`` when it is empty or degenerate."""
    verts = _clip_vertices(list(a.vertices), b.vertices)
    if len(verts) < 3 or abs(_signed_area(verts)) <= AREA_EPS:
        return None
    return Polygon2(tuple(verts))


def intersection_area(a: BevBox, b: BevBox) -> float:
    # circumscribed circles disjoint -> no overlap
    ra = 0.5 * math.hypot(a.length, a.width)
    rb = 0.5 * math.hypot(b.length, b.width)
    if math.hypot(a.cx - b.cx, a.cy - b.cy) >= ra + rb:
        return 0.0
    verts = _clip_vertices(list(box_corners(a)), box_corners(b))
    if len(verts) < 3:
        return 0.0
    area = abs(_signed_area(verts))
    return area if area > AREA_EPS else 0.0


def bev_iou(a: BevBox, b: BevBox) -> float:
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = a.length * a.width + b.length * b.width - inter
    return min(1.0, max(0.0, inter / union))
