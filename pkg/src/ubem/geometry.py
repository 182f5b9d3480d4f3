"""Planar polygon primitives shared by ingestion, terrain sampling and model building.

Footprints live in a local metric frame (x east, y north, meters). Exterior rings
are stored counter-clockwise, holes clockwise; factories normalize orientation so
downstream code can rely on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Ring = tuple[tuple[float, float], ...]

_EARTH_RADIUS_M = 6371008.8


class GeometryError(ValueError):
    """Raised for degenerate or malformed polygon input."""


def ring_signed_area(ring: Ring) -> float:
    """Shoelace signed area; positive for counter-clockwise winding."""
    acc = 0.0
    n = len(ring)
    for i in range(n):
        x0, y0 = ring[i]
        x1, y1 = ring[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def _ring_centroid_terms(ring: Ring) -> tuple[float, float, float]:
    sx = sy = sa = 0.0
    n = len(ring)
    for i in range(n):
        x0, y0 = ring[i]
        x1, y1 = ring[(i + 1) % n]
        cross = x0 * y1 - x1 * y0
        sx += (x0 + x1) * cross
        sy += (y0 + y1) * cross
        sa += cross
    return sx, sy, sa


def _normalize_ring(coords, want_ccw: bool) -> Ring:
    pts = [(float(x), float(y)) for x, y in coords]
    if len(pts) >= 2 and pts[0] == pts[-1]:
        pts = pts[:-1]
    # collapse consecutive duplicates
    dedup: list[tuple[float, float]] = []
    for p in pts:
        if not dedup or p != dedup[-1]:
            dedup.append(p)
    if len(dedup) >= 2 and dedup[0] == dedup[-1]:
        dedup = dedup[:-1]
    if len(dedup) < 3:
        raise GeometryError("ring needs at least 3 distinct vertices")
    area = ring_signed_area(tuple(dedup))
    if area == 0.0:
        raise GeometryError("ring has zero area")
    if (area > 0) != want_ccw:
        dedup.reverse()
    return tuple(dedup)


@dataclass(frozen=True)
class Polygon:
    """Simple polygon with optional holes, vertices in meters."""

    exterior: Ring
    holes: tuple[Ring, ...] = field(default_factory=tuple)

    @classmethod
    def from_coords(cls, exterior, holes=()) -> "Polygon":
        ext = _normalize_ring(exterior, want_ccw=True)
        hs = tuple(_normalize_ring(h, want_ccw=False) for h in holes)
        return cls(ext, hs)

    def rings(self) -> tuple[Ring, ...]:
        return (self.exterior, *self.holes)

    def area(self) -> float:
        return ring_signed_area(self.exterior) + sum(
            ring_signed_area(h) for h in self.holes
        )

    def perimeter(self) -> float:
        """Length of the exterior ring only; holes do not add facade length."""
        total = 0.0
        ring = self.exterior
        n = len(ring)
        for i in range(n):
            x0, y0 = ring[i]
            x1, y1 = ring[(i + 1) % n]
            total += math.hypot(x1 - x0, y1 - y0)
        return total

    def centroid(self) -> tuple[float, float]:
        sx = sy = sa = 0.0
        for ring in self.rings():
            tx, ty, ta = _ring_centroid_terms(ring)
            sx += tx
            sy += ty
            sa += ta
        if sa == 0.0:
            raise GeometryError("degenerate polygon has no centroid")
        return sx / (3.0 * sa), sy / (3.0 * sa)

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [p[0] for p in self.exterior]
        ys = [p[1] for p in self.exterior]
        return min(xs), min(ys), max(xs), max(ys)

    def equivalent_radius(self) -> float:
        """Radius of the circle with the same area."""
        return math.sqrt(max(self.area(), 0.0) / math.pi)

    def contains(self, x: float, y: float) -> bool:
        return bool(self.contains_many(np.array([[x, y]]))[0])

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        """Ray-casting containment for an (n, 2) array. Boundary points count as inside."""
        px = np.asarray(points, dtype=float)[:, 0]
        py = np.asarray(points, dtype=float)[:, 1]
        inside = np.zeros(px.shape, dtype=bool)
        on_edge = np.zeros(px.shape, dtype=bool)
        for ring in self.rings():
            n = len(ring)
            for i in range(n):
                x0, y0 = ring[i]
                x1, y1 = ring[(i + 1) % n]
                # horizontal edges never satisfy the first clause; the quotient
                # they produce is discarded, so silence the spurious overflow
                with np.errstate(over="ignore", invalid="ignore"):
                    crosses = ((y0 > py) != (y1 > py)) & (
                        px < (x1 - x0) * (py - y0) / (y1 - y0 + 1e-300) + x0
                    )
                inside ^= crosses
                dx, dy = x1 - x0, y1 - y0
                seg_len2 = dx * dx + dy * dy
                t = np.clip(((px - x0) * dx + (py - y0) * dy) / max(seg_len2, 1e-300), 0.0, 1.0)
                d2 = (px - (x0 + t * dx)) ** 2 + (py - (y0 + t * dy)) ** 2
                on_edge |= d2 <= 1e-18
        return inside | on_edge

    def boundary_distance(self, points: np.ndarray) -> np.ndarray:
        """Signed distance to the nearest ring edge: negative inside, positive outside."""
        pts = np.asarray(points, dtype=float)
        px, py = pts[:, 0], pts[:, 1]
        best = np.full(px.shape, np.inf)
        for ring in self.rings():
            n = len(ring)
            for i in range(n):
                x0, y0 = ring[i]
                x1, y1 = ring[(i + 1) % n]
                dx, dy = x1 - x0, y1 - y0
                seg_len2 = dx * dx + dy * dy
                t = np.clip(((px - x0) * dx + (py - y0) * dy) / max(seg_len2, 1e-300), 0.0, 1.0)
                d2 = (px - (x0 + t * dx)) ** 2 + (py - (y0 + t * dy)) ** 2
                np.minimum(best, d2, out=best)
        dist = np.sqrt(best)
        sign = np.where(self.contains_many(pts), -1.0, 1.0)
        return sign * dist

    def to_shapely(self):
        import shapely.geometry as _sg

        return _sg.Polygon(self.exterior, [list(h) for h in self.holes])


def intersection_area(a: Polygon, b: Polygon) -> float:
    """Overlap area of two polygons. Delegates the boolean op to shapely."""
    ga, gb = a.to_shapely(), b.to_shapely()
    if not ga.intersects(gb):
        return 0.0
    return float(ga.intersection(gb).area)


def looks_geographic(points) -> bool:
    """Heuristic: every coordinate fits inside lon/lat bounds."""
    for x, y in points:
        if abs(x) > 180.0 or abs(y) > 90.0:
            return False
    return True


@dataclass(frozen=True)
class LocalProjection:
    """Equirectangular plane tangent at (lat0, lon0); good to centimeters city-scale."""

    lat0: float
    lon0: float

    def to_plane(self, lon: float, lat: float) -> tuple[float, float]:
        x = math.radians(lon - self.lon0) * _EARTH_RADIUS_M * math.cos(math.radians(self.lat0))
        y = math.radians(lat - self.lat0) * _EARTH_RADIUS_M
        return x, y

    def to_geographic(self, x: float, y: float) -> tuple[float, float]:
        lon = self.lon0 + math.degrees(x / (_EARTH_RADIUS_M * math.cos(math.radians(self.lat0))))
        lat = self.lat0 + math.degrees(y / _EARTH_RADIUS_M)
        return lon, lat
