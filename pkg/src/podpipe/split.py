"""Plot splitting: cut a full-column collection into per-plot slices.

Two methods are provided. ``split_by_gps`` maps the trajectory into the
field frame and intersects it with the plot grid; ``split_by_lidar`` finds
plant/alley runs in the rear LiDAR presence signal and numbers them from the
manifest. ``assign_and_verify`` cross-checks either result against the
user-recorded manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import savgol_filter

from .errors import ModeUnavailableError, SegmentationMismatchError, ValidationError
from .fieldmodel import FieldLayout, invert_id, plot_interval, serpentine_id
from .geo import GeoPoint, cumulative_distance, project_arrays
from .ingest import Collection, CollectionManifest, GpsStream, fmt

COVERAGE_THRESHOLD = 0.8
MIN_RTK_FRACTION = 0.5
LIDAR_THRESHOLD = 0.5
LIDAR_HYSTERESIS = 0.1
LENGTH_BAND = (0.8, 1.2)


@dataclass(frozen=True)
class PlotSlice:
    plot_id: int
    side: str
    time_window: tuple[float, float]
    odometer_window: tuple[float, float]
    confidence: float
    method: str

    def __post_init__(self):
        if not self.time_window[0] < self.time_window[1]:
            raise ValidationError("time_window", "t_start must be < t_end")
        if not self.odometer_window[0] < self.odometer_window[1]:
            raise ValidationError("odometer_window", "d_start must be < d_end")

    def to_json(self) -> str:
        return json.dumps(
            {
                "plot_id": self.plot_id,
                "side": self.side,
                "time_window": list(self.time_window),
                "odometer_window": list(self.odometer_window),
                "confidence": self.confidence,
                "method": self.method,
            }
        )

    @classmethod
    def from_dict(cls, d: dict) -> "PlotSlice":
        return cls(
            int(d["plot_id"]),
            d["side"],
            (float(d["time_window"][0]), float(d["time_window"][1])),
            (float(d["odometer_window"][0]), float(d["odometer_window"][1])),
            float(d["confidence"]),
            d["method"],
        )


def odometer_track(c: Collection, layout: FieldLayout | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(time_s, odometer_m) from wheel odometry, else from GPS path length."""
    if c.odometry is not None:
        return c.odometry.time_s, c.odometry.odometer_m
    if c.gps is None:
        raise ModeUnavailableError("neither odometry nor GPS available for distance")
    e, n = _smoothed_enu(c.gps, layout)
    return c.gps.time_s, cumulative_distance(e, n)


def _smooth(v: np.ndarray) -> np.ndarray:
    w = min(9, len(v) if len(v) % 2 == 1 else len(v) - 1)
    if w < 3:
        return v.copy()
    return savgol_filter(v, w, 1, mode="interp")


def _smoothed_enu(gps: GpsStream, layout: FieldLayout | None):
    origin = layout.origin if layout is not None else GeoPoint(float(gps.lat_deg[0]), float(gps.lon_deg[0]))
    e, n = project_arrays(origin, gps.lat_deg, gps.lon_deg)
    return _smooth(e), _smooth(n)


def _check_gps(c: Collection) -> GpsStream:
    g = c.gps
    if g is None or len(g.time_s) < 2:
        raise ModeUnavailableError("GPS stream absent")
    if g.rtk_mask().mean() < MIN_RTK_FRACTION:
        raise ModeUnavailableError("fewer than 50% RTK fixes")
    return g


def split_by_gps(
    c: Collection, layout: FieldLayout, coverage_threshold: float = COVERAGE_THRESHOLD
) -> list[PlotSlice]:
    g = _check_gps(c)
    rtk = g.rtk_mask()
    along_fix, _ = layout.geo_to_field(g.lat_deg, g.lon_deg)

    if c.odometry is not None:
        ot, od = c.odometry.time_s, c.odometry.odometer_m
        d_fix = np.interp(g.time_s, ot, od)
        # straight pass: along-row position is affine in odometer distance
        slope, icept = np.polyfit(d_fix[rtk], along_fix[rtk], 1)
        if slope == 0:
            raise ModeUnavailableError("trajectory shows no along-row progress")
        lo_d, hi_d = float(od[0]), float(od[-1])
        a_lo, a_hi = sorted((icept + slope * lo_d, icept + slope * hi_d))

        def locate(a: float) -> tuple[float, float]:
            d = (a - icept) / slope
            return float(np.interp(d, od, ot)), float(d)
    else:
        t = g.time_s[rtk]
        sm = _smooth(along_fix[rtk])
        heading = 1.0 if sm[-1] >= sm[0] else -1.0
        sm = heading * np.maximum.accumulate(heading * sm)
        _, dist = odometer_track(c, layout)
        dist = dist[rtk]
        a_lo, a_hi = float(sm.min()), float(sm.max())
        key = heading * sm

        def locate(a: float) -> tuple[float, float]:
            ts = float(np.interp(heading * a, key, t))
            return ts, float(np.interp(ts, t, dist))

    L = layout.plot_length_m
    out: list[PlotSlice] = []
    for side in c.manifest.sides:
        col = c.manifest.column(side)
        for r in range(layout.n_ranges):
            s, e = plot_interval(layout, r)
            s, e = max(s, a_lo), min(e, a_hi)
            if e - s < coverage_threshold * L:
                continue
            (t0, d0), (t1, d1) = sorted((locate(s), locate(e)))
            in_win = (g.time_s >= t0) & (g.time_s <= t1)
            conf = float(rtk[in_win].mean()) if in_win.any() else 0.0
            out.append(PlotSlice(serpentine_id(layout, col, r), side, (t0, t1), (d0, d1), conf, "gps"))
    out.sort(key=lambda s: (s.side, s.time_window[0]))
    return out


def _hysteresis(p: np.ndarray, threshold: float, band: float) -> np.ndarray:
    on_level, off_level = threshold + band, threshold - band
    state = bool(p[0] >= threshold)
    out = np.empty(len(p), dtype=bool)
    for i, v in enumerate(p):
        if state and v <= off_level:
            state = False
        elif not state and v >= on_level:
            state = True
        out[i] = state
    return out


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive index ranges of consecutive True values."""
    edges = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
    starts = np.nonzero(edges == 1)[0]
    ends = np.nonzero(edges == -1)[0] - 1
    return list(zip(starts.tolist(), ends.tolist()))


def split_by_lidar(
    c: Collection,
    layout: FieldLayout,
    threshold: float = LIDAR_THRESHOLD,
    hysteresis: float = LIDAR_HYSTERESIS,
) -> list[PlotSlice]:
    if c.odometry is None:
        raise ModeUnavailableError("LiDAR splitting needs odometry")
    if layout.alley_length_m <= 0:
        raise ModeUnavailableError("alley_length_m is 0: plot gaps are undetectable")
    li = c.lidar
    t = li.time_s
    d = np.interp(t, c.odometry.time_s, c.odometry.odometer_m)
    min_gap = 0.5 * layout.alley_length_m
    m = c.manifest
    step = 1 if m.direction == "increasing" else -1

    out: list[PlotSlice] = []
    for side in m.sides:
        p = li.presence(side)
        on = _hysteresis(p, threshold, hysteresis)
        runs = _runs(on)

        def lo_edge(i):
            return (0.5 * (t[i - 1] + t[i]), 0.5 * (d[i - 1] + d[i])) if i > 0 else (t[0], d[0])

        def hi_edge(j):
            return (0.5 * (t[j] + t[j + 1]), 0.5 * (d[j] + d[j + 1])) if j < len(t) - 1 else (t[-1], d[-1])

        merged: list[list[int]] = []
        for i, j in runs:
            if merged and lo_edge(i)[1] - hi_edge(merged[-1][1])[1] <= min_gap:
                merged[-1][1] = j
            else:
                merged.append([i, j])

        expected = abs(m.end_plot_id[side] - m.start_plot_id[side]) + 1
        if len(merged) != expected:
            raise SegmentationMismatchError(side, expected, len(merged))

        col = m.column(side)
        r0 = invert_id(layout, m.start_plot_id[side]).range_index
        for k, (i, j) in enumerate(merged):
            (t0, d0), (t1, d1) = lo_edge(i), hi_edge(j)
            inside = p[i : j + 1].mean()
            gap = np.concatenate([p[max(i - 5, 0) : i], p[j + 1 : j + 6]])
            conf = float(np.clip(inside - (gap.mean() if len(gap) else 0.0), 0.0, 1.0))
            rng_k = r0 + step * k
            if not 0 <= rng_k < layout.n_ranges:
                raise SegmentationMismatchError(side, expected, len(merged))
            out.append(
                PlotSlice(serpentine_id(layout, col, rng_k), side, (float(t0), float(t1)),
                          (float(d0), float(d1)), conf, "lidar")
            )
    out.sort(key=lambda s: (s.side, s.time_window[0]))
    return out


@dataclass
class SplitReport:
    collection_id: str
    flags: list[dict] = field(default_factory=list)
    diagnoses: list[str] = field(default_factory=list)
    centers: list[tuple[int, float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "collection_id": self.collection_id,
            "flags": self.flags,
            "diagnoses": self.diagnoses,
            "centers": [list(c) for c in self.centers],
        }


def assign_and_verify(
    slices: list[PlotSlice],
    manifest: CollectionManifest,
    layout: FieldLayout,
    gps: GpsStream | None = None,
) -> tuple[list[PlotSlice], SplitReport]:
    """Check slice ids against the manifest; never rewrites an id.

    Flags go in the report. When ``gps`` is given, one plot-centre estimate
    per (plot, side) slice is added: the mean fix inside the slice window,
    moved half a row spacing sideways onto the plot's row.
    """
    report = SplitReport(manifest.collection_id)
    if not slices:
        return [], report
    L = layout.plot_length_m
    lo, hi = LENGTH_BAND
    reversed_sides: list[str] = []
    for side in ("left", "right"):
        mine = sorted((s for s in slices if s.side == side), key=lambda s: s.time_window[0])
        if not mine:
            continue
        col = manifest.column(side)
        if col is None:
            for s in mine:
                report.flags.append({"plot_id": s.plot_id, "side": side, "reason": "side absent in manifest"})
            continue
        r_start = invert_id(layout, manifest.start_plot_id[side]).range_index
        r_end = invert_id(layout, manifest.end_plot_id[side]).range_index
        r_min, r_max = min(r_start, r_end), max(r_start, r_end)
        addrs = [invert_id(layout, s.plot_id) for s in mine]
        ranges = [a.range_index for a in addrs]
        claimed = 1 if manifest.direction == "increasing" else -1
        steps = np.sign(np.diff(ranges))
        if len(ranges) > 1 and np.all(steps == -claimed):
            reversed_sides.append(side)
            for s in mine:
                report.flags.append({"plot_id": s.plot_id, "side": side, "reason": "direction mismatch"})
            continue
        for s, a in zip(mine, addrs):
            if a.column_index != col:
                report.flags.append({"plot_id": s.plot_id, "side": side,
                                     "reason": f"column {a.column_index} != manifest column {col}"})
            elif not r_min <= a.range_index <= r_max:
                report.flags.append({"plot_id": s.plot_id, "side": side, "reason": "outside manifest span"})
            span = s.odometer_window[1] - s.odometer_window[0]
            if not lo * L <= span <= hi * L:
                report.flags.append({"plot_id": s.plot_id, "side": side,
                                     "reason": f"odometer window {span:.3f} m outside sanity band"})
        if len(ranges) > 1 and not np.all(steps == claimed):
            report.diagnoses.append(f"{side}: plot order inconsistent with manifest direction")

    if reversed_sides:
        report.diagnoses.insert(0, f"direction mismatch ({', '.join(reversed_sides)})")

    if gps is not None and len(gps.time_s):
        along, cross = layout.geo_to_field(gps.lat_deg, gps.lon_deg)
        for s in sorted(slices, key=lambda s: (s.side, s.time_window[0])):
            w = (gps.time_s >= s.time_window[0]) & (gps.time_s <= s.time_window[1])
            if not w.any():
                continue
            a_mean, c_mean = float(along[w].mean()), float(cross[w].mean())
            col_cross = layout.column_cross_m(invert_id(layout, s.plot_id).column_index)
            c_plot = c_mean + np.sign(col_cross - c_mean) * 0.5 * layout.row_spacing_m
            lat, lon = layout.field_to_geo(a_mean, c_plot)
            report.centers.append((s.plot_id, float(lat), float(lon)))
    return list(slices), report


def assign_frames(slices: list[PlotSlice], frames) -> dict[int, int]:
    """Map frame_id -> plot_id for frames falling inside a slice window."""
    by_side: dict[str, list[PlotSlice]] = {}
    for s in slices:
        by_side.setdefault(s.side, []).append(s)
    starts = {k: np.array([s.time_window[0] for s in v]) for k, v in by_side.items()}
    for k in by_side:
        order = np.argsort(starts[k])
        by_side[k] = [by_side[k][i] for i in order]
        starts[k] = starts[k][order]
    out = {}
    for f in frames:
        lst = by_side.get(f.side)
        if not lst:
            continue
        i = int(np.searchsorted(starts[f.side], f.time_s, side="right")) - 1
        if i >= 0 and f.time_s <= lst[i].time_window[1]:
            out[f.frame_id] = lst[i].plot_id
    return out


def write_slices(slices: list[PlotSlice], path) -> None:
    with open(path, "w") as fh:
        for s in slices:
            fh.write(s.to_json() + "\n")


def read_slices(path) -> list[PlotSlice]:
    with open(path) as fh:
        return [PlotSlice.from_dict(json.loads(line)) for line in fh if line.strip()]


def write_plot_centers(centers, path) -> None:
    with open(path, "w") as fh:
        fh.write("plot_id,lat_deg,lon_deg\n")
        for pid, lat, lon in centers:
            fh.write(f"{pid},{fmt(lat)},{fmt(lon)}\n")
