"""Trial-field geometry and serpentine plot numbering.

Field frame conventions used throughout the package:

* ``along`` runs in the direction of increasing range index, starting at the
  near edge of range 0; it points along ``column_axis_bearing_deg``.
* ``cross`` runs in the direction of increasing column index, 90 degrees
  clockwise from ``along``. Column ``c`` sits at ``cross = c * row_spacing_m``.
* The layout origin is the point (along=0, cross=0), i.e. the start of the
  first plot of column 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import MissingFileError, UnknownPlotError, ValidationError
from .geo import GeoPoint, LocalPoint, project_arrays, unproject, unproject_arrays


@dataclass(frozen=True)
class FieldLayout:
    n_ranges: int = 36
    n_columns: int = 40
    base_plot_id: int = 4560
    row_spacing_m: float = 0.76
    plot_length_m: float = 1.0
    alley_length_m: float = 0.9
    origin: GeoPoint = field(default_factory=lambda: GeoPoint(40.0833, -88.2278))
    column_axis_bearing_deg: float = 0.0
    # even-indexed columns ascend with range when True; odd ones descend
    first_column_ascending: bool = True

    def __post_init__(self):
        if self.n_ranges < 1:
            raise ValidationError("n_ranges", "must be >= 1")
        if self.n_columns < 1:
            raise ValidationError("n_columns", "must be >= 1")
        if not self.row_spacing_m > 0:
            raise ValidationError("row_spacing_m", "must be > 0")
        if not self.plot_length_m > 0:
            raise ValidationError("plot_length_m", "must be > 0")
        if not self.alley_length_m >= 0:
            raise ValidationError("alley_length_m", "must be >= 0")

    @property
    def n_plots(self) -> int:
        return self.n_ranges * self.n_columns

    @property
    def pitch_m(self) -> float:
        return self.plot_length_m + self.alley_length_m

    @property
    def column_length_m(self) -> float:
        return self.n_ranges * self.pitch_m - self.alley_length_m

    def plot_ids(self) -> range:
        return range(self.base_plot_id, self.base_plot_id + self.n_plots)

    # field frame <-> local ENU

    def _axes(self) -> tuple[float, float]:
        b = math.radians(self.column_axis_bearing_deg)
        return math.sin(b), math.cos(b)

    def field_to_enu(self, along, cross):
        s, c = self._axes()
        along = np.asarray(along, dtype=float)
        cross = np.asarray(cross, dtype=float)
        return along * s + cross * c, along * c - cross * s

    def enu_to_field(self, east, north):
        s, c = self._axes()
        east = np.asarray(east, dtype=float)
        north = np.asarray(north, dtype=float)
        return east * s + north * c, east * c - north * s

    def geo_to_field(self, lat_deg, lon_deg):
        e, n = project_arrays(self.origin, lat_deg, lon_deg)
        return self.enu_to_field(e, n)

    def field_to_geo(self, along, cross):
        e, n = self.field_to_enu(along, cross)
        return unproject_arrays(self.origin, e, n)

    def column_cross_m(self, column_index: int) -> float:
        return column_index * self.row_spacing_m

    def to_json(self) -> str:
        d = asdict(self)
        d["origin"] = asdict(self.origin)
        return json.dumps(d, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "FieldLayout":
        d = dict(d)
        o = d.pop("origin", None)
        if o is not None:
            d["origin"] = GeoPoint(float(o["latitude_deg"]), float(o["longitude_deg"]))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError("layout", f"unknown fields {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class PlotAddress:
    plot_id: int
    column_index: int
    range_index: int


def _check_indices(layout: FieldLayout, column_index: int, range_index: int) -> None:
    if not 0 <= column_index < layout.n_columns:
        raise ValidationError("column_index", f"{column_index} outside [0, {layout.n_columns})")
    if not 0 <= range_index < layout.n_ranges:
        raise ValidationError("range_index", f"{range_index} outside [0, {layout.n_ranges})")


def _ascending(layout: FieldLayout, column_index: int) -> bool:
    return (column_index % 2 == 0) == layout.first_column_ascending


def serpentine_id(layout: FieldLayout, column_index: int, range_index: int) -> int:
    _check_indices(layout, column_index, range_index)
    if _ascending(layout, column_index):
        offset = range_index
    else:
        offset = layout.n_ranges - 1 - range_index
    return layout.base_plot_id + column_index * layout.n_ranges + offset


def invert_id(layout: FieldLayout, plot_id: int) -> PlotAddress:
    k = plot_id - layout.base_plot_id
    if not 0 <= k < layout.n_plots:
        raise UnknownPlotError(plot_id)
    column, offset = divmod(k, layout.n_ranges)
    rng = offset if _ascending(layout, column) else layout.n_ranges - 1 - offset
    return PlotAddress(plot_id, column, rng)


def plot_interval(layout: FieldLayout, range_index: int) -> tuple[float, float]:
    """Along-column extent [start, end) of a range's plots, in meters."""
    if not 0 <= range_index < layout.n_ranges:
        raise ValidationError("range_index", f"{range_index} outside [0, {layout.n_ranges})")
    start = range_index * layout.pitch_m
    return start, start + layout.plot_length_m


def plot_center_local(layout: FieldLayout, address: PlotAddress) -> LocalPoint:
    start, end = plot_interval(layout, address.range_index)
    e, n = layout.field_to_enu(0.5 * (start + end), layout.column_cross_m(address.column_index))
    return LocalPoint(float(e), float(n))


def plot_center_geo(layout: FieldLayout, address: PlotAddress) -> GeoPoint:
    return unproject(layout.origin, plot_center_local(layout, address))


def load_layout(path) -> FieldLayout:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError:
        raise MissingFileError(str(path)) from None
    return FieldLayout.from_dict(d)


def save_layout(layout: FieldLayout, path) -> None:
    Path(path).write_text(layout.to_json())
