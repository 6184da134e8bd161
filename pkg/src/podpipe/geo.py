"""Geodetic helpers: WGS84 fixes to a local east/north plane and path lengths.

The projection is a local tangent plane whose scale factors are the WGS84
meridian and prime-vertical radii of curvature at the origin latitude. Over a
trial field (well under 1 km) the curvature error is sub-millimetre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

MAX_OFFSET_M = 10_000.0


@dataclass(frozen=True)
class GeoPoint:
    latitude_deg: float
    longitude_deg: float

    def __post_init__(self):
        if not math.isfinite(self.latitude_deg) or not -90.0 <= self.latitude_deg <= 90.0:
            raise ValidationError("latitude_deg", f"{self.latitude_deg!r} outside [-90, 90]")
        if not math.isfinite(self.longitude_deg) or not -180.0 <= self.longitude_deg <= 180.0:
            raise ValidationError("longitude_deg", f"{self.longitude_deg!r} outside [-180, 180]")


@dataclass(frozen=True)
class LocalPoint:
    east_m: float
    north_m: float

    def __post_init__(self):
        if not (math.isfinite(self.east_m) and math.isfinite(self.north_m)):
            raise ValidationError("LocalPoint", "coordinates must be finite")


@dataclass(frozen=True)
class PathSample:
    time_s: float
    position: LocalPoint
    odometer_m: float


def radii_of_curvature(latitude_deg: float) -> tuple[float, float]:
    """Return (meridian radius M, prime-vertical radius N) in meters."""
    s = math.sin(math.radians(latitude_deg))
    w = 1.0 - WGS84_E2 * s * s
    n = WGS84_A / math.sqrt(w)
    m = WGS84_A * (1.0 - WGS84_E2) / (w * math.sqrt(w))
    return m, n


def _scales(origin: GeoPoint) -> tuple[float, float]:
    # meters per radian of latitude / longitude at the origin
    m, n = radii_of_curvature(origin.latitude_deg)
    return m, n * math.cos(math.radians(origin.latitude_deg))


def project_to_local(origin: GeoPoint, p: GeoPoint) -> LocalPoint:
    m, ncos = _scales(origin)
    dlat = math.radians(p.latitude_deg - origin.latitude_deg)
    dlon = math.radians(_wrap_lon(p.longitude_deg - origin.longitude_deg))
    east = dlon * ncos
    north = dlat * m
    if math.hypot(east, north) >= MAX_OFFSET_M:
        raise ValidationError("p", "point lies 10 km or more from the origin")
    return LocalPoint(east, north)


def unproject(origin: GeoPoint, q: LocalPoint) -> GeoPoint:
    """Inverse of :func:`project_to_local`."""
    m, ncos = _scales(origin)
    lat = origin.latitude_deg + math.degrees(q.north_m / m)
    lon = _wrap_lon(origin.longitude_deg + math.degrees(q.east_m / ncos))
    return GeoPoint(lat, lon)


def project_arrays(origin: GeoPoint, lat_deg, lon_deg) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised projection; returns (east_m, north_m) arrays."""
    m, ncos = _scales(origin)
    lat = np.asarray(lat_deg, dtype=float)
    lon = np.asarray(lon_deg, dtype=float)
    dlon = (lon - origin.longitude_deg + 180.0) % 360.0 - 180.0
    return np.radians(dlon) * ncos, np.radians(lat - origin.latitude_deg) * m


def unproject_arrays(origin: GeoPoint, east_m, north_m) -> tuple[np.ndarray, np.ndarray]:
    m, ncos = _scales(origin)
    lat = origin.latitude_deg + np.degrees(np.asarray(north_m, dtype=float) / m)
    lon = origin.longitude_deg + np.degrees(np.asarray(east_m, dtype=float) / ncos)
    return lat, (lon + 180.0) % 360.0 - 180.0


def _wrap_lon(d: float) -> float:
    if -180.0 <= d <= 180.0:
        return d
    return (d + 180.0) % 360.0 - 180.0


def path_distance(samples: Sequence[LocalPoint] | np.ndarray) -> float:
    """Sum of straight segment lengths between consecutive points."""
    xy = _as_xy(samples)
    if len(xy) == 0:
        raise ValidationError("samples", "path needs at least one point")
    return float(np.sum(np.hypot(np.diff(xy[:, 0]), np.diff(xy[:, 1]))))


def cumulative_distance(east_m, north_m) -> np.ndarray:
    """Running along-path distance, starting at 0 for the first point."""
    e = np.asarray(east_m, dtype=float)
    n = np.asarray(north_m, dtype=float)
    out = np.zeros(len(e))
    if len(e) > 1:
        out[1:] = np.cumsum(np.hypot(np.diff(e), np.diff(n)))
    return out


def _as_xy(samples: Iterable[LocalPoint] | np.ndarray) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return samples.reshape(-1, 2).astype(float)
    return np.array([(s.east_m, s.north_m) for s in samples], dtype=float).reshape(-1, 2)
