import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from podpipe.errors import ValidationError
from podpipe.geo import (
    WGS84_A,
    WGS84_E2,
    GeoPoint,
    LocalPoint,
    cumulative_distance,
    path_distance,
    project_to_local,
    unproject,
)


def meridian_arc(phi0, phi1):
    # independent oracle: integrate the meridian radius of curvature
    f = lambda p: WGS84_A * (1 - WGS84_E2) / (1 - WGS84_E2 * math.sin(p) ** 2) ** 1.5
    return quad(f, phi0, phi1, epsabs=1e-12)[0]


def ecef(lat, lon):
    p, l = math.radians(lat), math.radians(lon)
    n = WGS84_A / math.sqrt(1 - WGS84_E2 * math.sin(p) ** 2)
    return np.array([n * math.cos(p) * math.cos(l), n * math.cos(p) * math.sin(l), n * (1 - WGS84_E2) * math.sin(p)])


def test_identity():
    p = GeoPoint(40.1, -88.2)
    assert project_to_local(p, p) == LocalPoint(0.0, 0.0)


def test_north_offset_matches_meridian_arc():
    q = project_to_local(GeoPoint(0.0, 0.0), GeoPoint(0.001, 0.0))
    oracle = meridian_arc(0.0, math.radians(0.001))
    assert abs(q.north_m - 110.574) < 0.01
    assert abs(q.north_m - oracle) < 1e-3
    assert q.east_m == 0.0


def test_east_offset_matches_parallel_arc():
    q = project_to_local(GeoPoint(40.0, -88.0), GeoPoint(40.0, -87.999))
    a, b = ecef(40.0, -88.0), ecef(40.0, -87.999)
    assert abs(q.east_m - 85.39) < 0.05
    assert abs(q.east_m - np.linalg.norm(b - a)) < 1e-3
    assert abs(q.north_m) < 1e-12


def test_far_point_rejected():
    with pytest.raises(ValidationError):
        project_to_local(GeoPoint(40.0, -88.0), GeoPoint(40.2, -88.0))


@pytest.mark.parametrize("lat,lon", [(91.0, 0.0), (0.0, 181.0), (float("nan"), 0.0)])
def test_geopoint_validation(lat, lon):
    with pytest.raises(ValidationError):
        GeoPoint(lat, lon)


@given(st.floats(-60, 60), st.floats(-179, 179), st.floats(-2000, 2000), st.floats(-2000, 2000))
def test_unproject_round_trip(lat, lon, e, n):
    o = GeoPoint(lat, lon)
    q = project_to_local(o, unproject(o, LocalPoint(e, n)))
    assert abs(q.east_m - e) < 1e-6 and abs(q.north_m - n) < 1e-6


def test_path_distance_small_cases():
    assert path_distance([LocalPoint(0, 0)]) == 0.0
    assert path_distance([LocalPoint(0, 0), LocalPoint(3, 4)]) == 5.0
    with pytest.raises(ValidationError):
        path_distance([])


def test_path_distance_random_against_pairwise_sum():
    rng = np.random.default_rng(1)
    pts = [LocalPoint(float(a), float(b)) for a, b in rng.normal(0, 50, (100, 2))]
    oracle = sum(math.dist((p.east_m, p.north_m), (q.east_m, q.north_m)) for p, q in zip(pts, pts[1:]))
    assert abs(path_distance(pts) - oracle) < 1e-9


def test_cumulative_distance_ends_at_path_length():
    rng = np.random.default_rng(2)
    xy = rng.normal(0, 5, (30, 2))
    cum = cumulative_distance(xy[:, 0], xy[:, 1])
    assert cum[0] == 0 and np.all(np.diff(cum) >= 0)
    assert abs(cum[-1] - path_distance(xy)) < 1e-9
