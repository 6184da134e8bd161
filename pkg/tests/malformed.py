"""Malformed collection fixtures: each entry breaks one file at a known line."""

import json

from podpipe.errors import IntegrityError, ParseError


def set_line(path, lineno, fn):
    lines = path.read_text().split("\n")
    lines[lineno - 1] = fn(lines[lineno - 1])
    path.write_text("\n".join(lines))


def set_field(i, value):
    def fn(line):
        parts = line.split(",")
        parts[i] = value
        return ",".join(parts)
    return fn


def manifest_edit(fn):
    def apply(d):
        p = d / "manifest.json"
        m = json.loads(p.read_text())
        fn(m)
        p.write_text(json.dumps(m, indent=2) + "\n")
    return apply


def line_edit(name, lineno, fn):
    return lambda d: set_line(d / name, lineno, fn)


def frame_edit(lineno, fn):
    def edit(line):
        obj = json.loads(line)
        fn(obj)
        return json.dumps(obj)
    return line_edit("frames.jsonl", lineno, edit)


def gps_time_from(src_line):
    def apply(d):
        p = d / "gps.csv"
        t = p.read_text().split("\n")[src_line - 1].split(",")[0]
        set_line(p, 17, set_field(0, t))
    return apply


def first_box(key, value):
    def fn(obj):
        obj["detections"] = [{"x": 0.4, "y": 0.4, "w": 0.04, "h": 0.06, "conf": 0.9}]
        obj["detections"][0][key] = value
    return fn


# (name, file, mutation, error type, expected line)
MALFORMED = [
    ("manifest_truncated", "manifest.json", lambda d: (d / "manifest.json").write_text('{\n  "collection_id": "x",\n'),
     ParseError, 3),
    ("manifest_missing_key", "manifest.json", manifest_edit(lambda m: m.pop("collection_id")), ParseError, 1),
    ("manifest_pass_index_type", "manifest.json", manifest_edit(lambda m: m.update(pass_index="one")), ParseError, 3),
    ("manifest_bad_direction", "manifest.json", manifest_edit(lambda m: m.update(direction="sideways")),
     ParseError, 14),
    ("manifest_no_sides", "manifest.json",
     manifest_edit(lambda m: m.update(left_column_index=None, right_column_index=None)), IntegrityError, 4),
    ("manifest_missing_start", "manifest.json", manifest_edit(lambda m: m["start_plot_id"].update(left=None)),
     IntegrityError, 6),
    ("manifest_not_object", "manifest.json", lambda d: (d / "manifest.json").write_text("[1, 2]\n"), ParseError, 1),
    ("gps_header", "gps.csv", line_edit("gps.csv", 1, lambda s: "t,lat,lon,fix"), ParseError, 1),
    ("gps_non_numeric", "gps.csv", line_edit("gps.csv", 5, set_field(1, "north")), ParseError, 5),
    ("gps_field_count", "gps.csv", line_edit("gps.csv", 7, lambda s: s + ",extra"), ParseError, 7),
    ("gps_time_backwards", "gps.csv", gps_time_from(15), IntegrityError, 17),
    ("gps_bad_fix", "gps.csv", line_edit("gps.csv", 4, set_field(3, "dgps")), ParseError, 4),
    ("gps_lat_range", "gps.csv", line_edit("gps.csv", 3, set_field(1, "95.0")), ParseError, 3),
    ("gps_nan", "gps.csv", line_edit("gps.csv", 8, set_field(2, "nan")), ParseError, 8),
    ("gps_empty", "gps.csv", lambda d: (d / "gps.csv").write_text("time_s,lat_deg,lon_deg,fix\n"), ParseError, 2),
    ("odom_decreasing", "odom.csv", line_edit("odom.csv", 9, set_field(1, "0.0")), IntegrityError, 9),
    ("odom_time_repeat", "odom.csv", line_edit("odom.csv", 12, set_field(0, "0.0")), IntegrityError, 12),
    ("lidar_presence_range", "lidar.csv", line_edit("lidar.csv", 6, set_field(1, "1.5")), ParseError, 6),
    ("lidar_header", "lidar.csv", line_edit("lidar.csv", 1, lambda s: "time_s,left,right"), ParseError, 1),
    ("frames_bad_json", "frames.jsonl", line_edit("frames.jsonl", 3, lambda s: s[:-3]), ParseError, 3),
    ("frames_bad_side", "frames.jsonl", frame_edit(4, lambda o: o.update(side="top")), ParseError, 4),
    ("frames_duplicate_id", "frames.jsonl", frame_edit(5, lambda o: o.update(frame_id=0)), IntegrityError, 5),
    ("frames_time_backwards", "frames.jsonl", frame_edit(6, lambda o: o.update(time_s=0.0)), IntegrityError, 6),
    ("frames_box_zero_width", "frames.jsonl", frame_edit(7, first_box("w", 0.0)), ParseError, 7),
    ("frames_box_conf", "frames.jsonl", frame_edit(8, first_box("conf", 2.0)), ParseError, 8),
    ("frames_box_outside", "frames.jsonl", frame_edit(9, first_box("x", 0.99)), ParseError, 9),
    ("frames_not_object", "frames.jsonl", line_edit("frames.jsonl", 2, lambda s: "[1, 2]"), ParseError, 2),
    ("frames_id_type", "frames.jsonl", frame_edit(3, lambda o: o.update(frame_id="7")), ParseError, 3),
    ("frames_detections_type", "frames.jsonl", frame_edit(2, lambda o: o.update(detections={})), ParseError, 2),
    ("frames_outside_span", "frames.jsonl", frame_edit(1, lambda o: o.update(time_s=-5.0)), IntegrityError, 1),
]
