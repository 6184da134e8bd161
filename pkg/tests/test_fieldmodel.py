import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from podpipe.errors import MissingFileError, UnknownPlotError, ValidationError
from podpipe.fieldmodel import (
    FieldLayout,
    PlotAddress,
    invert_id,
    load_layout,
    plot_center_geo,
    plot_center_local,
    plot_interval,
    save_layout,
    serpentine_id,
)
from podpipe.geo import GeoPoint, project_to_local

LAYOUT = FieldLayout()


def test_serpentine_examples():
    assert serpentine_id(LAYOUT, 0, 0) == 4560
    assert serpentine_id(LAYOUT, 0, 35) == 4595
    assert serpentine_id(LAYOUT, 1, 35) == 4596
    assert invert_id(LAYOUT, 4560) == PlotAddress(4560, 0, 0)
    assert invert_id(LAYOUT, 4596) == PlotAddress(4596, 1, 35)


def test_serpentine_exhaustive_bijection():
    ids = {}
    for c, r in itertools.product(range(40), range(36)):
        pid = serpentine_id(LAYOUT, c, r)
        ids[pid] = (c, r)
        a = invert_id(LAYOUT, pid)
        assert (a.column_index, a.range_index) == (c, r)
    assert set(ids) == set(range(4560, 6000))


def test_serpentine_consecutive_ids_are_neighbours():
    for pid in range(4560, 5999):
        a, b = invert_id(LAYOUT, pid), invert_id(LAYOUT, pid + 1)
        assert abs(a.column_index - b.column_index) + abs(a.range_index - b.range_index) == 1


def test_descending_first_column():
    lay = FieldLayout(first_column_ascending=False)
    assert serpentine_id(lay, 0, 35) == 4560
    assert serpentine_id(lay, 1, 0) == 4596


@pytest.mark.parametrize("pid", [4559, 6000, -1])
def test_unknown_plot(pid):
    with pytest.raises(UnknownPlotError):
        invert_id(LAYOUT, pid)


@pytest.mark.parametrize("c,r", [(-1, 0), (40, 0), (0, 36)])
def test_bad_indices(c, r):
    with pytest.raises(ValidationError):
        serpentine_id(LAYOUT, c, r)


def test_plot_interval():
    assert plot_interval(LAYOUT, 0) == (0.0, 1.0)
    s, e = plot_interval(LAYOUT, 1)
    assert math.isclose(s, 1.9) and math.isclose(e, 2.9)
    spans = [plot_interval(LAYOUT, r) for r in range(36)]
    assert all(a[1] <= b[0] for a, b in zip(spans, spans[1:]))
    assert all(a < b for a, b in spans)


def test_plot_center_first_plot_north_of_origin():
    g = plot_center_geo(LAYOUT, PlotAddress(4560, 0, 0))
    q = project_to_local(LAYOUT.origin, g)
    assert abs(q.north_m - 0.5) < 1e-6 and abs(q.east_m) < 1e-6


def test_adjacent_columns_one_row_spacing_apart():
    a = project_to_local(LAYOUT.origin, plot_center_geo(LAYOUT, invert_id(LAYOUT, serpentine_id(LAYOUT, 3, 7))))
    b = project_to_local(LAYOUT.origin, plot_center_geo(LAYOUT, invert_id(LAYOUT, serpentine_id(LAYOUT, 4, 7))))
    assert abs((b.east_m - a.east_m) - LAYOUT.row_spacing_m) < 1e-6
    assert abs(b.north_m - a.north_m) < 1e-6


@pytest.mark.parametrize("bearing", [0.0, 30.0, 200.0])
def test_full_field_lattice(bearing):
    lay = FieldLayout(column_axis_bearing_deg=bearing)
    b = math.radians(bearing)
    along = np.array([math.sin(b), math.cos(b)])
    cross = np.array([math.cos(b), -math.sin(b)])
    for pid in lay.plot_ids():
        a = invert_id(lay, pid)
        expect = (a.range_index * lay.pitch_m + 0.5 * lay.plot_length_m) * along + a.column_index * lay.row_spacing_m * cross
        q = project_to_local(lay.origin, plot_center_geo(lay, a))
        assert abs(q.east_m - expect[0]) < 1e-6 and abs(q.north_m - expect[1]) < 1e-6


@given(st.floats(-500, 500), st.floats(-500, 500), st.floats(0, 360))
def test_field_frame_round_trip(along, cross, bearing):
    lay = FieldLayout(column_axis_bearing_deg=bearing)
    a, c = lay.enu_to_field(*lay.field_to_enu(along, cross))
    assert abs(a - along) < 1e-9 and abs(c - cross) < 1e-9


def test_layout_json_round_trip(tmp_path):
    lay = FieldLayout(n_ranges=5, n_columns=3, origin=GeoPoint(10.0, 20.0), column_axis_bearing_deg=12.5)
    save_layout(lay, tmp_path / "layout.json")
    assert load_layout(tmp_path / "layout.json") == lay
    with pytest.raises(MissingFileError):
        load_layout(tmp_path / "missing.json")


@pytest.mark.parametrize("kw", [{"n_ranges": 0}, {"n_columns": 0}, {"row_spacing_m": 0}, {"plot_length_m": -1},
                                {"alley_length_m": -0.1}])
def test_layout_validation(kw):
    with pytest.raises(ValidationError):
        FieldLayout(**kw)


def test_local_center_matches_field_frame():
    q = plot_center_local(LAYOUT, invert_id(LAYOUT, 4700))
    a, c = LAYOUT.enu_to_field(q.east_m, q.north_m)
    addr = invert_id(LAYOUT, 4700)
    assert abs(c - addr.column_index * 0.76) < 1e-9
