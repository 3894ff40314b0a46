"""Local planar geometry: projection, look angles and ray/footprint entry."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import cosdg, sindg, tandg

from . import _backend
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    GeometryError,
    InsideFootprintError,
    OutOfRangeError,
)

logger = logging.getLogger(__name__)

EARTH_RADIUS = 6_371_008.8  # mean Earth radius, metres
MAX_SEPARATION = 10_000.0

WGS84_A = 6_378_137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

DEFAULT_ELEVATION_BOUNDS = (10.0, 85.0)


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float
    alt: float = 0.0

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise GeometryError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise GeometryError(f"longitude {self.lon} outside [-180, 180]")
        if not math.isfinite(self.alt):
            raise GeometryError("altitude must be finite")


@dataclass(frozen=True)
class PlanarPoint:
    x: float
    y: float
    alt: float = 0.0

    def __post_init__(self):
        if not all(map(math.isfinite, (self.x, self.y, self.alt))):
            raise GeometryError(f"non-finite planar point {self}")


def _segments_cross(p1, p2, p3, p4):
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return int(v > 0) - int(v < 0)

    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, p3)) or (o2 == 0 and on_seg(p1, p2, p4))
            or (o3 == 0 and on_seg(p3, p4, p1)) or (o4 == 0 and on_seg(p3, p4, p2)))


@dataclass(frozen=True)
class Footprint:
    """Simple polygon in local metres; ``center`` is set for WGS84 sources."""

    ring: tuple
    id: str = ""
    center: GeoPoint | None = None
    xy: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ring = tuple(p if isinstance(p, PlanarPoint) else PlanarPoint(*p) for p in self.ring)
        object.__setattr__(self, "ring", ring)
        if len(ring) < 3:
            raise GeometryError("footprint needs at least 3 vertices")
        xy = np.array([(p.x, p.y) for p in ring], dtype=float)
        if np.array_equal(xy[0], xy[-1]):
            raise GeometryError("footprint ring must not repeat its first vertex")
        if len(np.unique(xy, axis=0)) != len(xy):
            raise GeometryError("footprint has duplicate vertices")
        xy.setflags(write=False)
        object.__setattr__(self, "xy", xy)
        if self.area == 0.0:
            raise GeometryError("footprint has zero area")
        n = len(xy)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_cross(xy[i], xy[(i + 1) % n], xy[j], xy[(j + 1) % n]):
                    raise GeometryError(f"footprint {self.id!r} is self-intersecting")

    @property
    def area(self):
        x, y = self.xy[:, 0], self.xy[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))

    def contains(self, x, y):
        """Crossing-number test; boundary points count as inside."""
        _, inside = _backend.kernels.ray_entry_batch([x], [y], [1.0], [0.0], self.xy)
        return bool(inside[0])


@dataclass(frozen=True)
class RayPath:
    origin: PlanarPoint
    azimuth: float
    elevation: float

    def __post_init__(self):
        if not 0.0 <= self.azimuth < 360.0:
            raise GeometryError(f"azimuth {self.azimuth} outside [0, 360)")
        if not 0.0 <= self.elevation <= 90.0:
            raise GeometryError(f"elevation {self.elevation} outside [0, 90]")


@dataclass(frozen=True)
class Intersection:
    entry_point: PlanarPoint
    horizontal_distance: float
    intersection_height: float


def project_to_local(p, center):
    """Equirectangular projection of ``p`` about ``center`` (metres)."""
    dlat = math.radians(p.lat - center.lat)
    dlon = (p.lon - center.lon + 180.0) % 360.0 - 180.0
    x = EARTH_RADIUS * math.cos(math.radians(center.lat)) * math.radians(dlon)
    y = EARTH_RADIUS * dlat
    if math.hypot(x, y) >= MAX_SEPARATION:
        raise OutOfRangeError(
            f"point {p.lat:.6f},{p.lon:.6f} is >= 10 km from projection centre")
    return PlanarPoint(x, y, p.alt)


def local_to_geo(q, center):
    """Inverse of :func:`project_to_local`."""
    lat = center.lat + math.degrees(q.y / EARTH_RADIUS)
    lon = center.lon + math.degrees(q.x / (EARTH_RADIUS * math.cos(math.radians(center.lat))))
    lon = (lon + 180.0) % 360.0 - 180.0
    return GeoPoint(lat, lon, q.alt)


def geodetic_to_ecef(p):
    lat, lon = math.radians(p.lat), math.radians(p.lon)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * math.sin(lat) ** 2)
    return np.array([
        (n + p.alt) * math.cos(lat) * math.cos(lon),
        (n + p.alt) * math.cos(lat) * math.sin(lon),
        (n * (1.0 - WGS84_E2) + p.alt) * math.sin(lat),
    ])


def look_angles(receiver, satellite_ecef):
    """Azimuth and elevation (degrees) of a satellite seen from ``receiver``.

    Elevation is measured from the plane tangent to the WGS84 ellipsoid.
    """
    sat = np.asarray(satellite_ecef, dtype=float)
    if sat.shape != (3,):
        raise GeometryError("satellite position must be a 3-vector")
    if np.linalg.norm(sat) <= 6.5e6:
        raise GeometryError("satellite ECEF norm must exceed 6.5e6 m")
    dx = sat - geodetic_to_ecef(receiver)
    lat, lon = math.radians(receiver.lat), math.radians(receiver.lon)
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    east = -so * dx[0] + co * dx[1]
    north = -sl * co * dx[0] - sl * so * dx[1] + cl * dx[2]
    up = cl * co * dx[0] + cl * so * dx[1] + sl * dx[2]
    rng = math.sqrt(east * east + north * north + up * up)
    if rng == 0.0:
        raise DegenerateGeometryError("satellite coincides with receiver")
    az = math.degrees(math.atan2(east, north)) % 360.0
    if az >= 360.0:
        az = 0.0
    el = math.degrees(math.asin(max(-1.0, min(1.0, up / rng))))
    return az, el


def ray_entries(x, y, alt, azimuth, elevation, fp, kernels=None):
    """Vectorised :func:`ray_entry`.

    Returns ``(distance, height, inside)`` arrays; distance and height are
    NaN for rays that miss the footprint or start inside it.
    """
    kernels = kernels or _backend.kernels
    azimuth = np.asarray(azimuth, dtype=float)
    elevation = np.asarray(elevation, dtype=float)
    if np.any(elevation >= 90.0):
        raise DegenerateGeometryError("elevation of 90 degrees has no finite intersection height")
    dist, inside = kernels.ray_entry_batch(x, y, sindg(azimuth), cosdg(azimuth), fp.xy)
    dist = np.where(inside, np.nan, dist)
    height = np.asarray(alt, dtype=float) + dist * tandg(elevation)
    return dist, height, inside


def ray_entry(ray, fp):
    """Lowest point at which an ascending ray crosses into the footprint.

    Returns ``None`` when the ray does not cross the footprint boundary.
    """
    o = ray.origin
    dist, height, inside = ray_entries(
        [o.x], [o.y], [o.alt], [ray.azimuth], [ray.elevation], fp)
    if inside[0]:
        raise InsideFootprintError(f"ray origin ({o.x}, {o.y}) lies inside footprint {fp.id!r}")
    d = float(dist[0])
    if math.isnan(d):
        return None
    entry = PlanarPoint(o.x + d * float(sindg(ray.azimuth)), o.y + d * float(cosdg(ray.azimuth)), 0.0)
    return Intersection(entry, d, float(height[0]))


def elevation_filter(records, lower=DEFAULT_ELEVATION_BOUNDS[0], upper=DEFAULT_ELEVATION_BOUNDS[1]):
    """Keep records with ``lower <= elevation <= upper``."""
    if not lower < upper:
        raise ConfigError(f"elevation filter bounds must satisfy lower < upper, got ({lower}, {upper})")
    return [r for r in records if lower <= r.sat_elevation <= upper]


def load_footprint(path):
    """Read a footprint JSON document, projecting WGS84 rings to local metres."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GeometryError(f"{path}: invalid JSON ({exc})") from exc
    return footprint_from_dict(doc)


def footprint_from_dict(doc):
    try:
        ring = [tuple(map(float, v[:2])) for v in doc["ring"]]
        crs = doc.get("crs", "local-metres")
        fid = str(doc.get("id", ""))
    except (KeyError, TypeError, ValueError) as exc:
        raise GeometryError(f"malformed footprint document: {exc}") from exc
    if len(ring) > 1 and ring[0] == ring[-1]:
        ring = ring[:-1]
    if crs == "local-metres":
        return Footprint(ring, fid)
    if crs == "wgs84":
        if not ring:
            raise GeometryError("footprint needs at least 3 vertices")
        center = GeoPoint(sum(v[1] for v in ring) / len(ring), sum(v[0] for v in ring) / len(ring))
        pts = [project_to_local(GeoPoint(lat, lon), center) for lon, lat in ring]
        return Footprint(pts, fid, center=center)
    raise GeometryError(f"unknown footprint crs {crs!r}")


def footprint_to_dict(fp):
    if fp.center is not None:
        ring = []
        for p in fp.ring:
            g = local_to_geo(p, fp.center)
            ring.append([g.lon, g.lat])
        return {"id": fp.id, "crs": "wgs84", "ring": ring}
    return {"id": fp.id, "crs": "local-metres", "ring": [[p.x, p.y] for p in fp.ring]}
