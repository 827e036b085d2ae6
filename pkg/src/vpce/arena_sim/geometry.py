"""2D geometry primitives for the arena simulator.

Points are (x, y) tuples or length-2 arrays, distances in meters. All
routines are pure and use fixed-order scalar/vector arithmetic so
repeated calls are bit-identical.
"""

from __future__ import annotations

import math

import numpy as np

Point = tuple[float, float]


def point_segment_distance(px: float, py: float, ax: float, ay: float,
                           bx: float, by: float) -> float:
    """Distance from point P to segment AB."""
    abx, aby = bx - ax, by - ay
    apx, apy = px - ax, py - ay
    denom = abx * abx + aby * aby
    if denom == 0.0:
        return math.hypot(apx, apy)
    t = (apx * abx + apy * aby) / denom
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * abx), py - (ay + t * aby))


def _orient(ax, ay, bx, by, cx, cy) -> float:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def segments_intersect(a1: Point, a2: Point, b1: Point, b2: Point) -> bool:
    """True if closed segments A1A2 and B1B2 share at least one point."""
    d1 = _orient(*b1, *b2, *a1)
    d2 = _orient(*b1, *b2, *a2)
    d3 = _orient(*a1, *a2, *b1)
    d4 = _orient(*a1, *a2, *b2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 \
            and d3 != 0 and d4 != 0:
        return True
    # Collinear / endpoint-touching cases.
    def on_seg(px, py, qx, qy, rx, ry):
        return (min(px, qx) <= rx <= max(px, qx)
                and min(py, qy) <= ry <= max(py, qy))
    if d1 == 0 and on_seg(*b1, *b2, *a1):
        return True
    if d2 == 0 and on_seg(*b1, *b2, *a2):
        return True
    if d3 == 0 and on_seg(*a1, *a2, *b1):
        return True
    if d4 == 0 and on_seg(*a1, *a2, *b2):
        return True
    return False


def segment_segment_distance(a1: Point, a2: Point, b1: Point, b2: Point) -> float:
    """Minimum distance between two closed segments."""
    if segments_intersect(a1, a2, b1, b2):
        return 0.0
    return min(
        point_segment_distance(*a1, *b1, *b2),
        point_segment_distance(*a2, *b1, *b2),
        point_segment_distance(*b1, *a1, *a2),
        point_segment_distance(*b2, *a1, *a2),
    )


def rays_segment_hits(ox: float, oy: float, dirs: np.ndarray,
                      ax: float, ay: float, bx: float, by: float) -> np.ndarray:
    """Ray parameter t for each ray ``origin + t * dirs[i]`` hitting segment AB.

    ``dirs`` has shape (n, 2) and need not be normalized; misses get +inf.
    Only forward hits (t > 0) count.
    """
    ex, ey = bx - ax, by - ay
    dx = dirs[:, 0]
    dy = dirs[:, 1]
    denom = dx * ey - dy * ex
    wx, wy = ax - ox, ay - oy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (wx * ey - wy * ex) / denom
        s = (wx * dy - wy * dx) / denom
    hit = (denom != 0.0) & (t > 1e-12) & (s >= 0.0) & (s <= 1.0)
    return np.where(hit, t, np.inf)


def rays_circle_hits(ox: float, oy: float, dirs: np.ndarray,
                     cx: float, cy: float, r: float) -> np.ndarray:
    """Nearest forward ray parameter t for each ray hitting circle (c, r).

    Misses get +inf. Rays starting inside the circle hit its far side.
    """
    fx, fy = ox - cx, oy - cy
    dx = dirs[:, 0]
    dy = dirs[:, 1]
    a = dx * dx + dy * dy
    b = 2.0 * (fx * dx + fy * dy)
    c = fx * fx + fy * fy - r * r
    disc = b * b - 4.0 * a * c
    sq = np.sqrt(np.maximum(disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-b - sq) / (2.0 * a)
        t2 = (-b + sq) / (2.0 * a)
    t = np.where(t1 > 1e-12, t1, t2)
    hit = (disc >= 0.0) & (a > 0.0) & (t > 1e-12)
    return np.where(hit, t, np.inf)


def rectangle_corners(ax: float, ay: float, bx: float, by: float,
                      half_width: float) -> list[Point]:
    """Corners of the rectangle swept by offsetting segment AB by ±half_width.

    Degenerate (zero-length) segments return a tiny square around A.
    """
    ex, ey = bx - ax, by - ay
    length = math.hypot(ex, ey)
    if length == 0.0:
        h = max(half_width, 1e-9)
        return [(ax - h, ay - h), (ax + h, ay - h), (ax + h, ay + h), (ax - h, ay + h)]
    nx, ny = -ey / length * half_width, ex / length * half_width
    return [(ax + nx, ay + ny), (bx + nx, by + ny), (bx - nx, by - ny), (ax - nx, ay - ny)]
