"""Planar geometry over plot polygons.

Coordinates are planar meters; lon/lat inputs must be projected before they
reach this module. All functions are pure and thread-safe.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Sequence


class GeometryError(ValueError):
    """Raised for degenerate or invalid geometric input."""


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True)
class Polygon:
    """Simple polygon given by its outer ring (first vertex not repeated)."""

    ring: tuple

    def __init__(self, ring: Sequence[Point]):
        pts = tuple(ring)
        if len(pts) >= 2 and pts[0] == pts[-1]:
            pts = pts[:-1]
        if len(pts) < 3:
            raise GeometryError(f"polygon needs >=3 vertices, got {len(pts)}")
        object.__setattr__(self, "ring", pts)


def distance(a: Point, b: Point) -> float:
    """Euclidean distance in meters."""
    return math.hypot(a.x - b.x, a.y - b.y)


def signed_area(poly: Polygon) -> float:
    """Shoelace signed area; positive for counter-clockwise rings."""
    acc = 0.0
    ring = poly.ring
    n = len(ring)
    for i in range(n):
        p, q = ring[i], ring[(i + 1) % n]
        acc += p.x * q.y - q.x * p.y
    return acc / 2.0


def plot_attributes(poly: Polygon):
    """Area, perimeter, centroid and compactness of one plot polygon.

    Compactness is the isoperimetric ratio 4*pi*A/P^2, which is 1 for a
    circle and falls toward 0 for elongated shapes.

    Returns:
        (area_m2, perimeter_m, centroid, compactness)

    Raises:
        GeometryError: zero-area (degenerate) polygon.
    """
    a_signed = signed_area(poly)
    area = abs(a_signed)
    if area == 0.0:
        raise GeometryError("degenerate polygon with zero area")

    ring = poly.ring
    n = len(ring)
    perimeter = 0.0
    cx = 0.0
    cy = 0.0
    for i in range(n):
        p, q = ring[i], ring[(i + 1) % n]
        perimeter += distance(p, q)
        cross = p.x * q.y - q.x * p.y
        cx += (p.x + q.x) * cross
        cy += (p.y + q.y) * cross
    cx /= 6.0 * a_signed
    cy /= 6.0 * a_signed

    compactness = 4.0 * math.pi * area / (perimeter * perimeter)
    return area, perimeter, Point(cx, cy), compactness


def segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    """Proper intersection test for two open segments (shared endpoints ok)."""

    def orient(a, b, c):
        v = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
        if v > 0:
            return 1
        if v < 0:
            return -1
        return 0

    o1 = orient(p1, p2, q1)
    o2 = orient(p1, p2, q2)
    o3 = orient(q1, q2, p1)
    o4 = orient(q1, q2, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def is_simple(poly: Polygon) -> bool:
    """True when no two non-adjacent edges cross."""
    ring = poly.ring
    n = len(ring)
    edges = [(ring[i], ring[(i + 1) % n]) for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent edges share a vertex
            if segments_intersect(*edges[i], *edges[j]):
                return False
    return True


def in_disk_union(p: Point, centers: Iterable[Point], radius: float) -> bool:
    """True iff `p` lies within `radius` (inclusive) of any center."""
    if radius <= 0:
        raise GeometryError(f"radius must be positive, got {radius}")
    return any(distance(p, c) <= radius for c in centers)
