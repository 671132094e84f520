"""Spherical geodesy and the local east-north plane used for integration.

All distances are meters on a sphere of radius 6,371,000 m. Headings and
bearings are degrees clockwise from north in [0, 360). The local projection
is equirectangular, anchored at an origin point; it is exact enough for the
city-scale offsets this package deals with (< 100 km) and has an exact
inverse, which the dead-reckoning integrator relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EARTH_RADIUS_M = 6_371_000.0

#: Local projections are only meant for city-scale areas (~100 km); the hard
#: rejection limit leaves headroom for single-degree offsets (111 km).
MAX_LOCAL_RANGE_M = 150_000.0


class GeoRangeError(ValueError):
    """A point is outside the validity range of the local projection."""


@dataclass(frozen=True)
class GeoPoint:
    """A WGS-independent latitude/longitude pair in degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and -90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat!r}")
        if not (math.isfinite(self.lon) and -180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon!r}")


def wrap_deg(angle: float) -> float:
    """Normalize an angle in degrees to [0, 360)."""
    a = math.fmod(angle, 360.0)
    return a + 360.0 if a < 0.0 else a


def signed_delta_deg(to_deg: float, from_deg: float) -> float:
    """Shortest signed angular difference to_deg - from_deg, in (-180, 180]."""
    d = math.fmod(to_deg - from_deg, 360.0)
    if d > 180.0:
        d -= 360.0
    elif d <= -180.0:
        d += 360.0
    return d


def circular_mean_deg(angles_deg) -> float:
    """Mean direction of a set of angles, in [0, 360)."""
    s = c = 0.0
    n = 0
    for a in angles_deg:
        r = math.radians(a)
        s += math.sin(r)
        c += math.cos(r)
        n += 1
    if n == 0:
        raise ValueError("circular mean of empty sequence")
    return wrap_deg(math.degrees(math.atan2(s, c)))


def geodesic_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle (haversine) distance between two points, meters."""
    lat1 = math.radians(a.lat)
    lat2 = math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon - a.lon)
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def initial_bearing_deg(a: GeoPoint, b: GeoPoint) -> float:
    """Bearing from a to b, degrees clockwise from north in [0, 360)."""
    lat1 = math.radians(a.lat)
    lat2 = math.radians(b.lat)
    dlon = math.radians(b.lon - a.lon)
    x = math.sin(dlon) * math.cos(lat2)
    y = math.cos(lat1) * math.sin(lat2) - math.sin(lat1) * math.cos(lat2) * math.cos(dlon)
    return wrap_deg(math.degrees(math.atan2(x, y)))


def to_local_enu(origin: GeoPoint, p: GeoPoint) -> tuple[float, float]:
    """Project p into the east/north plane anchored at origin, meters.

    Equirectangular: east uses the cosine of the *origin* latitude, which makes
    from_local_enu an exact inverse. Raises GeoRangeError beyond 100 km.
    """
    east = EARTH_RADIUS_M * math.radians(p.lon - origin.lon) * math.cos(math.radians(origin.lat))
    north = EARTH_RADIUS_M * math.radians(p.lat - origin.lat)
    if math.hypot(east, north) > MAX_LOCAL_RANGE_M:
        raise GeoRangeError(
            f"point {p} is {math.hypot(east, north) / 1000.0:.1f} km from origin; "
            f"local projection is valid below {MAX_LOCAL_RANGE_M / 1000.0:.0f} km"
        )
    return east, north


def from_local_enu(origin: GeoPoint, east: float, north: float) -> GeoPoint:
    """Inverse of to_local_enu for the same origin."""
    if math.hypot(east, north) > MAX_LOCAL_RANGE_M:
        raise GeoRangeError(
            f"offset ({east:.0f} m, {north:.0f} m) exceeds the "
            f"{MAX_LOCAL_RANGE_M / 1000.0:.0f} km projection range"
        )
    lat = origin.lat + math.degrees(north / EARTH_RADIUS_M)
    lon = origin.lon + math.degrees(east / (EARTH_RADIUS_M * math.cos(math.radians(origin.lat))))
    return GeoPoint(lat, lon)


def destination_point(origin: GeoPoint, bearing_deg: float, distance_m: float) -> GeoPoint:
    """Point reached from origin by moving distance_m along bearing_deg."""
    b = math.radians(bearing_deg)
    return from_local_enu(origin, distance_m * math.sin(b), distance_m * math.cos(b))
