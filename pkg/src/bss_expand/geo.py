"""Great-circle geometry on a spherical Earth: distances, centroids, containment."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

EARTH_RADIUS_M = 6_371_000.0

Meters = float


@dataclass(frozen=True, order=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Haversine distance in meters between two (lat, lon) pairs in degrees.

    The compiled kernel evaluates the identical expression in the same order,
    so both backends produce bit-identical distances.
    """
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    s_dphi = math.sin((phi2 - phi1) / 2.0)
    s_dlam = math.sin((math.radians(lon2) - math.radians(lon1)) / 2.0)
    a = s_dphi * s_dphi + math.cos(phi1) * math.cos(phi2) * s_dlam * s_dlam
    if a > 1.0:
        a = 1.0
    elif a < 0.0:
        a = 0.0
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


def haversine_distance(a: GeoPoint, b: GeoPoint) -> Meters:
    return haversine_m(a.lat, a.lon, b.lat, b.lon)


def centroid(points: Sequence[GeoPoint]) -> GeoPoint:
    """Arithmetic mean of latitudes and longitudes.

    Adequate at city scale; not a spherical centroid.
    """
    if not points:
        raise ValueError("empty point set")
    n = len(points)
    # fsum keeps the result independent of input order
    return GeoPoint(
        math.fsum(p.lat for p in points) / n,
        math.fsum(p.lon for p in points) / n,
    )


def _on_segment(x: float, y: float, x1: float, y1: float, x2: float, y2: float) -> bool:
    cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
    if abs(cross) > 1e-12 * max(1.0, abs(x2 - x1) + abs(y2 - y1)):
        return False
    return min(x1, x2) <= x <= max(x1, x2) and min(y1, y2) <= y <= max(y1, y2)


def point_in_ring(ring: Sequence[GeoPoint], p: GeoPoint) -> bool:
    """Even-odd ray casting in (lon, lat) space; points on an edge count as inside."""
    x, y = p.lon, p.lat
    inside = False
    for k in range(len(ring) - 1):
        x1, y1 = ring[k].lon, ring[k].lat
        x2, y2 = ring[k + 1].lon, ring[k + 1].lat
        if _on_segment(x, y, x1, y1, x2, y2):
            return True
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


@dataclass(frozen=True)
class BoundingRegion:
    min_lat: float
    max_lat: float
    min_lon: float
    max_lon: float
    land_polygon: Optional[Tuple[GeoPoint, ...]] = None

    def __post_init__(self):
        if not self.min_lat < self.max_lat:
            raise ValueError("min_lat must be < max_lat")
        if not self.min_lon < self.max_lon:
            raise ValueError("min_lon must be < max_lon")
        if self.land_polygon is not None:
            ring = tuple(self.land_polygon)
            if len(ring) < 4:
                raise ValueError("land polygon needs at least 4 vertices")
            if ring[0] != ring[-1]:
                raise ValueError("land polygon ring is not closed")
            object.__setattr__(self, "land_polygon", ring)

    @classmethod
    def dublin(cls, land_polygon: Optional[Iterable[GeoPoint]] = None) -> "BoundingRegion":
        ring = tuple(land_polygon) if land_polygon is not None else None
        return cls(53.2, 53.5, -6.5, -6.0, ring)

    def with_polygon(self, ring: Iterable[GeoPoint]) -> "BoundingRegion":
        return BoundingRegion(self.min_lat, self.max_lat, self.min_lon, self.max_lon, tuple(ring))


def contains(region: BoundingRegion, p: GeoPoint) -> bool:
    if not (region.min_lat <= p.lat <= region.max_lat and region.min_lon <= p.lon <= region.max_lon):
        return False
    if region.land_polygon is None:
        return True
    return point_in_ring(region.land_polygon, p)


def load_land_polygon(path) -> Tuple[GeoPoint, ...]:
    """Read the outer ring of a GeoJSON Polygon (bare geometry, Feature, or
    single-feature FeatureCollection). Coordinates are lon-first per RFC 7946."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("type") == "FeatureCollection":
        features = doc.get("features") or []
        if len(features) != 1:
            raise ValueError("land polygon FeatureCollection must hold exactly one feature")
        doc = features[0]
    if doc.get("type") == "Feature":
        doc = doc.get("geometry") or {}
    if doc.get("type") != "Polygon":
        raise ValueError(f"expected a GeoJSON Polygon, got {doc.get('type')!r}")
    outer = doc["coordinates"][0]
    return tuple(GeoPoint(float(lat), float(lon)) for lon, lat, *_ in outer)
