"""On-disk collection format: reading, writing and integrity checks.

A collection directory holds::

    manifest.json      run metadata (see CollectionManifest)
    gps.csv            time_s,lat_deg,lon_deg,fix         (optional)
    odom.csv           time_s,odometer_m                  (optional)
    lidar.csv          time_s,left_presence,right_presence
    frames.jsonl       {"frame_id", "time_s", "side", "image_path"?, "detections"?}
    detections.jsonl   {"frame_id", "detections"}         (optional)

Detection boxes are ``{"x", "y", "w", "h", "conf"}`` with (x, y) the top-left
corner, normalised to the raw (uncropped) frame. Floats are written with
Python's shortest round-trip repr so files are byte-stable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import IntegrityError, MissingFileError, ParseError
from .fieldmodel import FieldLayout, plot_interval, serpentine_id

SIDES = ("left", "right")
FIX_QUALITIES = ("rtk", "float", "single")
DIRECTIONS = ("increasing", "decreasing")

GPS_HEADER = "time_s,lat_deg,lon_deg,fix"
ODOM_HEADER = "time_s,odometer_m"
LIDAR_HEADER = "time_s,left_presence,right_presence"

ALIGNMENT_SLACK_S = 1.0


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float
    conf: float = 1.0

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h, "conf": self.conf}


@dataclass(frozen=True)
class CollectionManifest:
    collection_id: str
    pass_index: int
    left_column_index: int | None
    right_column_index: int | None
    start_plot_id: Mapping[str, int | None]
    end_plot_id: Mapping[str, int | None]
    direction: str = "increasing"
    layout_ref: str = "layout.json"

    def column(self, side: str) -> int | None:
        return self.left_column_index if side == "left" else self.right_column_index

    @property
    def sides(self) -> tuple[str, ...]:
        return tuple(s for s in SIDES if self.column(s) is not None)

    def to_json(self) -> str:
        d = {
            "collection_id": self.collection_id,
            "pass_index": self.pass_index,
            "left_column_index": self.left_column_index,
            "right_column_index": self.right_column_index,
            "start_plot_id": {s: self.start_plot_id.get(s) for s in SIDES},
            "end_plot_id": {s: self.end_plot_id.get(s) for s in SIDES},
            "direction": self.direction,
            "layout_ref": self.layout_ref,
        }
        return json.dumps(d, indent=2) + "\n"


class _ArrayEq:
    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in self.__dataclass_fields__
        )


@dataclass(frozen=True, eq=False)
class GpsStream(_ArrayEq):
    time_s: np.ndarray
    lat_deg: np.ndarray
    lon_deg: np.ndarray
    fix: np.ndarray

    def rtk_mask(self) -> np.ndarray:
        return self.fix == "rtk"


@dataclass(frozen=True, eq=False)
class OdomStream(_ArrayEq):
    time_s: np.ndarray
    odometer_m: np.ndarray


@dataclass(frozen=True, eq=False)
class LidarStream(_ArrayEq):
    time_s: np.ndarray
    left: np.ndarray
    right: np.ndarray

    def presence(self, side: str) -> np.ndarray:
        return self.left if side == "left" else self.right


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    time_s: float
    side: str
    image_path: str | None = None
    detections: tuple[Box, ...] | None = None

    def to_json(self) -> str:
        d: dict = {"frame_id": self.frame_id, "time_s": self.time_s, "side": self.side}
        if self.image_path is not None:
            d["image_path"] = self.image_path
        if self.detections is not None:
            d["detections"] = [b.to_dict() for b in self.detections]
        return json.dumps(d)


@dataclass(frozen=True)
class Collection:
    manifest: CollectionManifest
    gps: GpsStream | None
    odometry: OdomStream | None
    lidar: LidarStream
    frames: tuple[FrameRecord, ...]
    path: Path | None = field(default=None, compare=False)

    @property
    def row_counts(self) -> dict[str, int]:
        return {
            "gps": 0 if self.gps is None else len(self.gps.time_s),
            "odom": 0 if self.odometry is None else len(self.odometry.time_s),
            "lidar": len(self.lidar.time_s),
            "frames": len(self.frames),
        }

    def frames_for(self, side: str) -> list[FrameRecord]:
        return [f for f in self.frames if f.side == side]


def fmt(v) -> str:
    """Canonical number formatting: ints as ints, floats as shortest repr."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


# readers


def _key_line(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def read_manifest(path) -> CollectionManifest:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(str(path))
    text = path.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(str(path), e.lineno, f"invalid JSON: {e.msg}") from None
    if not isinstance(d, dict):
        raise ParseError(str(path), 1, "manifest must be a JSON object")

    def need(key, kinds, optional=False):
        if key not in d:
            raise ParseError(str(path), 1, f"missing key {key!r}")
        v = d[key]
        if v is None and optional:
            return None
        if isinstance(v, bool) or not isinstance(v, kinds):
            raise ParseError(str(path), _key_line(text, key), f"bad type for {key!r}")
        return v

    cid = need("collection_id", str)
    pass_index = need("pass_index", int)
    left = need("left_column_index", int, optional=True)
    right = need("right_column_index", int, optional=True)
    starts = need("start_plot_id", dict)
    ends = need("end_plot_id", dict)
    direction = need("direction", str)
    layout_ref = need("layout_ref", str)
    if direction not in DIRECTIONS:
        raise ParseError(str(path), _key_line(text, "direction"), f"direction must be one of {DIRECTIONS}")
    if left is None and right is None:
        raise IntegrityError(
            str(path), _key_line(text, "left_column_index"), "manifest names no side column"
        )
    for side, col in (("left", left), ("right", right)):
        for key, table in (("start_plot_id", starts), ("end_plot_id", ends)):
            v = table.get(side)
            if col is not None and (isinstance(v, bool) or not isinstance(v, int)):
                raise IntegrityError(
                    str(path), _key_line(text, key), f"{key}.{side} required for a present side"
                )
    return CollectionManifest(
        collection_id=cid,
        pass_index=pass_index,
        left_column_index=left,
        right_column_index=right,
        start_plot_id={s: starts.get(s) for s in SIDES},
        end_plot_id={s: ends.get(s) for s in SIDES},
        direction=direction,
        layout_ref=layout_ref,
    )


def _parse_float(path, lineno, token, name) -> float:
    try:
        v = float(token)
    except ValueError:
        raise ParseError(str(path), lineno, f"{name}: not a number: {token!r}") from None
    if not math.isfinite(v):
        raise ParseError(str(path), lineno, f"{name}: non-finite value {token!r}")
    return v


def _read_csv(path: Path, header: str, kinds: tuple[str, ...]) -> list[list]:
    """Parse a headered CSV into columns. ``kinds`` entries: 'f' float, 's' string."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != header:
        raise ParseError(str(path), 1, f"expected header {header!r}")
    names = header.split(",")
    cols: list[list] = [[] for _ in kinds]
    for lineno, raw in enumerate(lines[1:], 2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != len(kinds):
            raise ParseError(str(path), lineno, f"expected {len(kinds)} fields, got {len(parts)}")
        for i, (kind, tok) in enumerate(zip(kinds, parts)):
            tok = tok.strip()
            cols[i].append(_parse_float(path, lineno, tok, names[i]) if kind == "f" else tok)
    if not cols[0]:
        raise ParseError(str(path), 2, "stream is empty")
    return cols


def _check_increasing(path: Path, t: np.ndarray, what: str = "time_s") -> None:
    bad = np.nonzero(np.diff(t) <= 0)[0]
    if len(bad):
        i = int(bad[0]) + 1
        # data rows start on line 2
        raise IntegrityError(str(path), i + 2, f"{what} not strictly increasing at t={t[i]!r}")


def read_gps(path) -> GpsStream:
    path = Path(path)
    t, lat, lon, fix = _read_csv(path, GPS_HEADER, ("f", "f", "f", "s"))
    for i, (a, b, q) in enumerate(zip(lat, lon, fix)):
        if not -90 <= a <= 90:
            raise ParseError(str(path), i + 2, f"lat_deg out of range: {a!r}")
        if not -180 <= b <= 180:
            raise ParseError(str(path), i + 2, f"lon_deg out of range: {b!r}")
        if q not in FIX_QUALITIES:
            raise ParseError(str(path), i + 2, f"fix must be one of {FIX_QUALITIES}, got {q!r}")
    s = GpsStream(np.array(t), np.array(lat), np.array(lon), np.array(fix))
    _check_increasing(path, s.time_s)
    return s


def read_odometry(path) -> OdomStream:
    path = Path(path)
    t, d = _read_csv(path, ODOM_HEADER, ("f", "f"))
    s = OdomStream(np.array(t), np.array(d))
    _check_increasing(path, s.time_s)
    bad = np.nonzero(np.diff(s.odometer_m) < 0)[0]
    if len(bad):
        i = int(bad[0]) + 1
        raise IntegrityError(str(path), i + 2, f"odometer decreases at t={s.time_s[i]!r}")
    return s


def read_lidar(path) -> LidarStream:
    path = Path(path)
    t, left, right = _read_csv(path, LIDAR_HEADER, ("f", "f", "f"))
    for i, (a, b) in enumerate(zip(left, right)):
        if not (0 <= a <= 1 and 0 <= b <= 1):
            raise ParseError(str(path), i + 2, "presence values must lie in [0, 1]")
    s = LidarStream(np.array(t), np.array(left), np.array(right))
    _check_increasing(path, s.time_s)
    return s


def _parse_box(path, lineno, d) -> Box:
    if not isinstance(d, dict):
        raise ParseError(str(path), lineno, "detection must be an object")
    vals = []
    for k in ("x", "y", "w", "h", "conf"):
        v = d.get(k)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ParseError(str(path), lineno, f"detection field {k!r} missing or not a number")
        vals.append(float(v))
    x, y, w, h, conf = vals
    if w <= 0 or h <= 0:
        raise ParseError(str(path), lineno, "detection box needs w > 0 and h > 0")
    if not (0 <= x and 0 <= y and x + w <= 1 + 1e-9 and y + h <= 1 + 1e-9):
        raise ParseError(str(path), lineno, "detection box outside [0, 1]^2")
    if not 0 <= conf <= 1:
        raise ParseError(str(path), lineno, "detection conf outside [0, 1]")
    return Box(x, y, w, h, conf)


def _iter_jsonl(path: Path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ParseError(str(path), lineno, f"invalid JSON: {e.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(str(path), lineno, "record must be a JSON object")
            yield lineno, obj


def _parse_boxes(path, lineno, v) -> tuple[Box, ...]:
    if not isinstance(v, list):
        raise ParseError(str(path), lineno, "'detections' must be a list")
    return tuple(_parse_box(path, lineno, d) for d in v)


def read_frames(path) -> tuple[FrameRecord, ...]:
    path = Path(path)
    out: list[FrameRecord] = []
    last: dict[str, float] = {}
    seen: set[int] = set()
    for lineno, obj in _iter_jsonl(path):
        fid = obj.get("frame_id")
        t = obj.get("time_s")
        side = obj.get("side")
        if isinstance(fid, bool) or not isinstance(fid, int):
            raise ParseError(str(path), lineno, "'frame_id' must be an integer")
        if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t):
            raise ParseError(str(path), lineno, "'time_s' must be a finite number")
        if side not in SIDES:
            raise ParseError(str(path), lineno, f"'side' must be one of {SIDES}")
        img = obj.get("image_path")
        if img is not None and not isinstance(img, str):
            raise ParseError(str(path), lineno, "'image_path' must be a string")
        dets = _parse_boxes(path, lineno, obj["detections"]) if "detections" in obj else None
        if fid in seen:
            raise IntegrityError(str(path), lineno, f"duplicate frame_id {fid}")
        if side in last and t <= last[side]:
            raise IntegrityError(str(path), lineno, f"{side} frame time not increasing at t={t!r}")
        seen.add(fid)
        last[side] = t
        out.append(FrameRecord(fid, float(t), side, img, dets))
    if not out:
        raise ParseError(str(path), 1, "stream is empty")
    return tuple(out)


def read_detections_file(path) -> dict[int, tuple[Box, ...]]:
    """Parse a sibling detections.jsonl into {frame_id: boxes}."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(str(path))
    out: dict[int, tuple[Box, ...]] = {}
    for lineno, obj in _iter_jsonl(path):
        fid = obj.get("frame_id")
        if isinstance(fid, bool) or not isinstance(fid, int):
            raise ParseError(str(path), lineno, "'frame_id' must be an integer")
        if "detections" not in obj:
            raise ParseError(str(path), lineno, "missing 'detections'")
        boxes = _parse_boxes(path, lineno, obj["detections"])
        out[fid] = out.get(fid, ()) + boxes
    return out


def read_collection(dir_path) -> Collection:
    d = Path(dir_path)
    manifest = read_manifest(d / "manifest.json")
    for name in ("lidar.csv", "frames.jsonl"):
        if not (d / name).is_file():
            raise MissingFileError(str(d / name))
    gps = read_gps(d / "gps.csv") if (d / "gps.csv").is_file() else None
    odom = read_odometry(d / "odom.csv") if (d / "odom.csv").is_file() else None
    lidar = read_lidar(d / "lidar.csv")
    frames = read_frames(d / "frames.jsonl")

    ref = gps.time_s if gps is not None else (odom.time_s if odom is not None else lidar.time_s)
    lo, hi = ref[0] - ALIGNMENT_SLACK_S, ref[-1] + ALIGNMENT_SLACK_S
    for i, f in enumerate(frames):
        if not lo <= f.time_s <= hi:
            raise IntegrityError(
                str(d / "frames.jsonl"), i + 1, f"frame time {f.time_s!r} outside sensor time span"
            )
    return Collection(manifest, gps, odom, lidar, frames, path=d)


# writers


def write_collection(c: Collection, dir_path) -> Path:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    (d / "manifest.json").write_text(c.manifest.to_json())
    if c.gps is not None:
        g = c.gps
        rows = (
            f"{fmt(t)},{fmt(a)},{fmt(b)},{q}"
            for t, a, b, q in zip(g.time_s, g.lat_deg, g.lon_deg, g.fix)
        )
        _write_lines(d / "gps.csv", GPS_HEADER, rows)
    if c.odometry is not None:
        o = c.odometry
        _write_lines(d / "odom.csv", ODOM_HEADER, (f"{fmt(t)},{fmt(v)}" for t, v in zip(o.time_s, o.odometer_m)))
    li = c.lidar
    _write_lines(
        d / "lidar.csv",
        LIDAR_HEADER,
        (f"{fmt(t)},{fmt(a)},{fmt(b)}" for t, a, b in zip(li.time_s, li.left, li.right)),
    )
    with open(d / "frames.jsonl", "w") as fh:
        for f in c.frames:
            fh.write(f.to_json() + "\n")
    return d


def write_detections_file(path, detections: Mapping[int, tuple[Box, ...]]) -> None:
    with open(path, "w") as fh:
        for fid in sorted(detections):
            rec = {"frame_id": fid, "detections": [b.to_dict() for b in detections[fid]]}
            fh.write(json.dumps(rec) + "\n")


def _write_lines(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for r in rows:
            fh.write(r + "\n")


# metadata cross-check


def validate_metadata(c: Collection, layout: FieldLayout, min_rtk_fraction: float = 0.5) -> list[str]:
    """Compare the user-recorded manifest against the GPS trajectory.

    Returns human-readable warnings; an empty list means consistent.
    """
    m = c.manifest
    warnings: list[str] = []
    for side in m.sides:
        col = m.column(side)
        if not 0 <= col < layout.n_columns:
            warnings.append(f"{side} column {col} outside layout")
            continue
        span = abs(m.end_plot_id[side] - m.start_plot_id[side])
        if span != layout.n_ranges - 1:
            warnings.append(f"{side} plot-id span {span} != n_ranges-1 ({layout.n_ranges - 1})")

    g = c.gps
    if g is None or len(g.time_s) == 0 or g.rtk_mask().mean() < min_rtk_fraction:
        warnings.append("GPS verification skipped: no GPS stream or too few RTK fixes")
        return warnings

    rtk = g.rtk_mask()
    along, cross = layout.geo_to_field(g.lat_deg[rtk], g.lon_deg[rtk])
    heading = 1.0 if along[-1] >= along[0] else -1.0
    manifest_heading = 1.0 if m.direction == "increasing" else -1.0
    if heading != manifest_heading:
        warnings.append(f"direction mismatch: manifest says {m.direction}, trajectory disagrees")

    s = layout.row_spacing_m
    expected = []
    for side in m.sides:
        col = m.column(side)
        # right of the robot is +cross when heading along +along
        toward = heading if side == "right" else -heading
        expected.append(layout.column_cross_m(col) - toward * 0.5 * s)
    corridor = float(np.mean(expected))
    offset = float(np.median(cross)) - corridor
    if abs(offset) > 0.5 * s:
        warnings.append(
            f"lateral offset {offset:+.3f} m between trajectory and claimed column corridor"
        )

    lo, hi = float(np.min(along)), float(np.max(along))
    covered = []
    for r in range(layout.n_ranges):
        a, b = plot_interval(layout, r)
        if min(b, hi) - max(a, lo) >= 0.8 * layout.plot_length_m:
            covered.append(r)
    if covered:
        order = covered if heading > 0 else covered[::-1]
        for side in m.sides:
            col = m.column(side)
            if not 0 <= col < layout.n_columns:
                continue
            first = serpentine_id(layout, col, order[0])
            last = serpentine_id(layout, col, order[-1])
            if first != m.start_plot_id[side]:
                warnings.append(f"{side} start plot {m.start_plot_id[side]} != trajectory start {first}")
            if last != m.end_plot_id[side]:
                warnings.append(f"{side} end plot {m.end_plot_id[side]} != trajectory end {last}")
    else:
        warnings.append("trajectory covers no complete plot")
    return warnings
