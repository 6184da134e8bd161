"""Synthetic trial field: ground truth and robot sensor logs.

Everything is driven by ``SimConfig.seed`` through independent random
streams (ground truth, one per pass, one per detector frame), so a run can
be regenerated piecemeal without replaying earlier draws.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import UnsupportedFrameError, ValidationError
from .fieldmodel import FieldLayout, save_layout, serpentine_id
from .frames import CropSpec
from .ingest import (
    Box,
    Collection,
    CollectionManifest,
    FrameRecord,
    GpsStream,
    LidarStream,
    OdomStream,
    write_collection,
)

BOX_W = 0.04
BOX_H = 0.06
FLOOD_FACTOR = 5

_STREAM_TRUTH = 0
_STREAM_PASS = 1
_STREAM_DETECT = 2


@dataclass(frozen=True)
class SimConfig:
    layout: FieldLayout = field(default_factory=FieldLayout)
    seed: int = 0
    pods_mean: float = 40.0
    pods_sd: float = 12.0
    grams_per_pod: float = 0.4
    yield_noise_sd: float = 4.8
    gps_noise_sd_m: float = 0.02
    odom_drift_frac: float = 0.01
    frame_rate_hz: float = 10.0
    # camera trigger offset; 0 puts frames on a grid aligned with plot edges
    frame_phase_s: float = 0.0
    robot_speed_mps: float = 0.5
    camera_footprint_m: float = 0.5
    detector_recall: float = 0.9
    detector_precision: float = 0.9
    bad_plot_fraction: float = 0.05
    # share of corrupted plots in "flood" mode; the rest are "dropout"
    flood_fraction: float = 0.05
    gps_rate_hz: float = 10.0
    odom_rate_hz: float = 20.0
    lidar_rate_hz: float = 20.0
    lidar_noise_sd: float = 0.0
    rtk_fraction: float = 1.0
    lead_in_m: float = 1.0
    lead_out_m: float = 1.0
    manual_count_plots: int = 16
    manual_count_noise_sd: float = 0.0
    alternate_direction: bool = False
    ranges_driven: int | None = None
    gps_available: bool = True
    odometry_available: bool = True
    embed_detections: bool = False
    crop: CropSpec = field(default_factory=CropSpec)

    def __post_init__(self):
        for name in ("pods_sd", "yield_noise_sd", "gps_noise_sd_m", "lidar_noise_sd",
                     "manual_count_noise_sd", "pods_mean", "grams_per_pod", "odom_drift_frac",
                     "lead_in_m", "lead_out_m"):
            if not getattr(self, name) >= 0:
                raise ValidationError(name, "must be >= 0")
        for name in ("detector_recall", "detector_precision", "bad_plot_fraction",
                     "flood_fraction", "rtk_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(name, "must lie in [0, 1]")
        if self.detector_precision == 0.0:
            raise ValidationError("detector_precision", "must be > 0")
        for name in ("robot_speed_mps", "frame_rate_hz", "camera_footprint_m",
                     "gps_rate_hz", "odom_rate_hz", "lidar_rate_hz"):
            if not getattr(self, name) > 0:
                raise ValidationError(name, "must be > 0")
        if not 0.0 <= self.frame_phase_s < 1.0 / self.frame_rate_hz:
            raise ValidationError("frame_phase_s", "must lie in [0, 1/frame_rate_hz)")
        if self.ranges_driven is not None and not 1 <= self.ranges_driven <= self.layout.n_ranges:
            raise ValidationError("ranges_driven", "must lie in [1, n_ranges]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layout"] = json.loads(self.layout.to_json())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if "layout" in d:
            d["layout"] = FieldLayout.from_dict(d["layout"])
        if "crop" in d:
            d["crop"] = CropSpec(**d["crop"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError("sim config", f"unknown fields {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    plot_ids: np.ndarray
    true_pods: np.ndarray
    yield_g: np.ndarray
    manual_count: np.ndarray  # -1 where no manual count was taken
    is_corrupted: np.ndarray
    corruption_mode: np.ndarray  # "", "dropout" or "flood"
    pod_offsets: tuple[np.ndarray, ...]  # along-row positions within each plot

    def index(self, plot_id: int) -> int:
        return int(plot_id - self.plot_ids[0])

    def as_dict(self) -> dict[int, dict]:
        out = {}
        for i, pid in enumerate(self.plot_ids):
            mc = int(self.manual_count[i])
            out[int(pid)] = {
                "true_pods": int(self.true_pods[i]),
                "yield_g": float(self.yield_g[i]),
                "manual_count": None if mc < 0 else mc,
                "is_corrupted": bool(self.is_corrupted[i]),
            }
        return out


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(list(key))


def generate_ground_truth(cfg: SimConfig) -> GroundTruth:
    lay = cfg.layout
    n = lay.n_plots
    rng = _rng(cfg.seed, _STREAM_TRUTH)
    pods = np.maximum(np.rint(rng.normal(cfg.pods_mean, cfg.pods_sd, n)), 0).astype(np.int64)
    yields = np.maximum(cfg.grams_per_pod * pods + rng.normal(0.0, cfg.yield_noise_sd, n), 0.0)
    corrupted = rng.random(n) < cfg.bad_plot_fraction
    flood = rng.random(n) < cfg.flood_fraction
    mode = np.where(corrupted, np.where(flood, "flood", "dropout"), "")
    manual = np.full(n, -1, dtype=np.int64)
    m = min(cfg.manual_count_plots, n)
    if m > 0:
        chosen = np.sort(rng.choice(n, size=m, replace=False))
        noise = np.rint(rng.normal(0.0, cfg.manual_count_noise_sd, m)).astype(np.int64)
        manual[chosen] = np.maximum(pods[chosen] + noise, 0)
    offsets = tuple(np.sort(rng.uniform(0.0, lay.plot_length_m, int(k))) for k in pods)
    return GroundTruth(
        plot_ids=np.arange(lay.base_plot_id, lay.base_plot_id + n),
        true_pods=pods,
        yield_g=yields,
        manual_count=manual,
        is_corrupted=corrupted,
        corruption_mode=mode,
        pod_offsets=offsets,
    )


@dataclass(frozen=True)
class PassGeometry:
    """Straight constant-speed drive between two adjacent columns."""

    pass_index: int
    direction: int  # +1 toward increasing range, -1 toward decreasing
    cross_m: float
    left_column: int | None
    right_column: int | None
    start_along_m: float
    length_m: float
    speed_mps: float

    @property
    def duration_s(self) -> float:
        return self.length_m / self.speed_mps

    def along(self, t):
        return self.start_along_m + self.direction * self.speed_mps * np.asarray(t, dtype=float)

    def column(self, side: str) -> int | None:
        return self.left_column if side == "left" else self.right_column

    @property
    def sides(self) -> tuple[str, ...]:
        return tuple(s for s in ("left", "right") if self.column(s) is not None)


def pass_geometry(cfg: SimConfig, pass_index: int) -> PassGeometry:
    lay = cfg.layout
    if not 0 <= pass_index <= lay.n_columns:
        raise ValidationError("pass_index", f"{pass_index} outside [0, {lay.n_columns}]")
    direction = -1 if (cfg.alternate_direction and pass_index % 2 == 1) else 1
    lower = pass_index - 1 if pass_index >= 1 else None
    upper = pass_index if pass_index < lay.n_columns else None
    # +cross is to the right when driving toward increasing range
    left, right = (lower, upper) if direction > 0 else (upper, lower)
    driven = cfg.ranges_driven or lay.n_ranges
    far = driven * lay.pitch_m - lay.alley_length_m
    length = cfg.lead_in_m + far + cfg.lead_out_m
    start = -cfg.lead_in_m if direction > 0 else far + cfg.lead_in_m
    return PassGeometry(
        pass_index=pass_index,
        direction=direction,
        cross_m=(pass_index - 0.5) * lay.row_spacing_m,
        left_column=left,
        right_column=right,
        start_along_m=start,
        length_m=length,
        speed_mps=cfg.robot_speed_mps,
    )


def _sample_times(duration: float, rate: float) -> np.ndarray:
    n = int(math.floor(duration * rate + 1e-9)) + 1
    return np.arange(n) / rate


def _presence(lay: FieldLayout, along: np.ndarray) -> np.ndarray:
    q = np.floor(along / lay.pitch_m)
    inside = (along - q * lay.pitch_m) < lay.plot_length_m
    return ((q >= 0) & (q < lay.n_ranges) & inside & (along >= 0)).astype(float)


def _range_at(lay: FieldLayout, along: float) -> int | None:
    if along < 0:
        return None
    r = int(math.floor(along / lay.pitch_m))
    if r >= lay.n_ranges or along - r * lay.pitch_m >= lay.plot_length_m:
        return None
    return r


def _manifest(cfg: SimConfig, geom: PassGeometry) -> CollectionManifest:
    lay = cfg.layout
    first, last = (0, lay.n_ranges - 1) if geom.direction > 0 else (lay.n_ranges - 1, 0)
    starts, ends = {}, {}
    for side in ("left", "right"):
        col = geom.column(side)
        starts[side] = None if col is None else serpentine_id(lay, col, first)
        ends[side] = None if col is None else serpentine_id(lay, col, last)
    return CollectionManifest(
        collection_id=f"pass_{geom.pass_index:02d}",
        pass_index=geom.pass_index,
        left_column_index=geom.left_column,
        right_column_index=geom.right_column,
        start_plot_id=starts,
        end_plot_id=ends,
        direction="increasing" if geom.direction > 0 else "decreasing",
        layout_ref="../../layout.json",
    )


def generate_collection(cfg: SimConfig, truth: GroundTruth, pass_index: int) -> Collection:
    lay = cfg.layout
    geom = pass_geometry(cfg, pass_index)
    rng = _rng(cfg.seed, _STREAM_PASS, pass_index)
    T = geom.duration_s

    tg = _sample_times(T, cfg.gps_rate_hz)
    along = geom.along(tg)
    e, n = lay.field_to_enu(along, np.full_like(along, geom.cross_m))
    e = e + rng.normal(0.0, cfg.gps_noise_sd_m, len(tg))
    n = n + rng.normal(0.0, cfg.gps_noise_sd_m, len(tg))
    lat, lon = lay.field_to_geo(*lay.enu_to_field(e, n))
    fix = np.where(rng.random(len(tg)) < cfg.rtk_fraction, "rtk", "float")
    gps = GpsStream(tg, lat, lon, fix) if cfg.gps_available else None

    to = _sample_times(T, cfg.odom_rate_hz)
    odom = OdomStream(to, cfg.robot_speed_mps * to * (1.0 + cfg.odom_drift_frac))
    if not cfg.odometry_available:
        odom = None

    tl = _sample_times(T, cfg.lidar_rate_hz)
    base = _presence(lay, geom.along(tl))
    chans = {}
    for side in ("left", "right"):
        p = base if geom.column(side) is not None else np.zeros_like(base)
        if cfg.lidar_noise_sd > 0:
            p = np.clip(p + rng.normal(0.0, cfg.lidar_noise_sd, len(p)), 0.0, 1.0)
        chans[side] = p
    lidar = LidarStream(tl, chans["left"], chans["right"])

    tf = cfg.frame_phase_s + _sample_times(T - cfg.frame_phase_s, cfg.frame_rate_hz)
    frames = []
    fid = 0
    for t in tf:
        for side in geom.sides:
            dets = None
            if cfg.embed_detections:
                dets = tuple(frame_detections(cfg, truth, geom, side, fid, float(t)))
            frames.append(FrameRecord(fid, float(t), side, None, dets))
            fid += 1
    return Collection(_manifest(cfg, geom), gps, odom, lidar, tuple(frames))


def generate_collections(cfg: SimConfig, truth: GroundTruth) -> list[Collection]:
    return [generate_collection(cfg, truth, p) for p in range(cfg.layout.n_columns + 1)]


def true_frame_plot(cfg: SimConfig, geom: PassGeometry, side: str, time_s: float) -> int | None:
    """Plot id under the camera centre at ``time_s``, or None over an alley."""
    col = geom.column(side)
    if col is None:
        return None
    r = _range_at(cfg.layout, float(geom.along(time_s)))
    return None if r is None else serpentine_id(cfg.layout, col, r)


def frame_box_arrays(
    cfg: SimConfig,
    truth: GroundTruth,
    geom: PassGeometry,
    side: str,
    frame_id: int,
    time_s: float,
    recall: float | None = None,
    precision: float | None = None,
    seed: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Simulated detector output for one frame as ``(x, y, w, h, conf)`` arrays.

    Coordinates are raw-frame. Pods inside the camera footprint map into the
    crop window; pods visible only in the raw margins get boxes that the crop
    step will discard.
    """
    col = geom.column(side)
    if col is None:
        raise UnsupportedFrameError(f"pass {geom.pass_index} has no {side} column")
    lay, crop = cfg.layout, cfg.crop
    recall = cfg.detector_recall if recall is None else recall
    precision = cfg.detector_precision if precision is None else precision
    seed = cfg.seed if seed is None else seed
    rng = _rng(seed, _STREAM_DETECT, geom.pass_index, frame_id)

    f = cfg.camera_footprint_m
    pos = float(geom.along(time_s))
    raw_half = 0.5 * f / crop.width
    r_lo = max(int(math.floor((pos - raw_half) / lay.pitch_m)), 0)
    r_hi = min(int(math.floor((pos + raw_half) / lay.pitch_m)), lay.n_ranges - 1)
    rel = [
        r * lay.pitch_m + truth.pod_offsets[truth.index(serpentine_id(lay, col, r))] - pos
        for r in range(r_lo, r_hi + 1)
    ]
    rel = np.concatenate(rel) if rel else np.zeros(0)
    xc = crop.left_frac + (rel / f + 0.5) * crop.width
    visible = (xc >= 0.0) & (xc < 1.0)
    rel, xc = rel[visible], xc[visible]
    in_fp = (rel >= -0.5 * f) & (rel < 0.5 * f)

    hit = rng.random(len(xc)) < recall
    conf_tp = rng.uniform(0.5, 1.0, len(xc))
    y_tp = rng.uniform(0.1, 0.85, len(xc))
    n_true = int(in_fp.sum())
    lam = recall * n_true * (1.0 - precision) / precision
    n_fp = int(rng.poisson(lam))
    x_fp = rng.uniform(crop.left_frac, 1.0 - crop.right_frac - BOX_W, n_fp)
    y_fp = rng.uniform(0.1, 0.85, n_fp)
    conf_fp = rng.uniform(0.5, 1.0, n_fp)

    lo_edge, hi_edge = crop.left_frac, 1.0 - crop.right_frac
    x1 = np.where(in_fp, np.maximum(xc - 0.5 * BOX_W, lo_edge), np.maximum(xc - 0.5 * BOX_W, 0.0))
    x2 = np.where(in_fp, np.minimum(xc + 0.5 * BOX_W, hi_edge), np.minimum(xc + 0.5 * BOX_W, 1.0))
    x1, x2, y_tp, conf_tp = x1[hit], x2[hit], y_tp[hit], conf_tp[hit]
    n_kept = int((in_fp & hit).sum()) + n_fp
    xs = [x1, x_fp]
    ys = [y_tp, y_fp]
    ws = [x2 - x1, np.full(n_fp, BOX_W)]
    cs = [conf_tp, conf_fp]

    r = _range_at(lay, pos)
    if r is not None:
        mode = truth.corruption_mode[truth.index(serpentine_id(lay, col, r))]
        if mode == "dropout":
            empty = np.zeros(0)
            return empty, empty, empty, empty, empty
        if mode == "flood":
            extra = (FLOOD_FACTOR - 1) * n_kept
            xs.append(rng.uniform(crop.left_frac, 1.0 - crop.right_frac - BOX_W, extra))
            ys.append(rng.uniform(0.1, 0.85, extra))
            cs.append(rng.uniform(0.5, 1.0, extra))
            ws.append(np.full(extra, BOX_W))
    x = np.concatenate(xs)
    return x, np.concatenate(ys), np.concatenate(ws), np.full(len(x), BOX_H), np.concatenate(cs)


def frame_detections(
    cfg: SimConfig,
    truth: GroundTruth,
    geom: PassGeometry,
    side: str,
    frame_id: int,
    time_s: float,
    recall: float | None = None,
    precision: float | None = None,
    seed: int | None = None,
) -> list[Box]:
    """:func:`frame_box_arrays` as a list of :class:`Box`."""
    arrays = frame_box_arrays(cfg, truth, geom, side, frame_id, time_s, recall, precision, seed)
    return [Box(float(x), float(y), float(w), float(h), float(c)) for x, y, w, h, c in zip(*arrays)]


# files

TRUTH_HEADER = "plot_id,true_pods,yield_g,manual_count,is_corrupted"


def write_truth_csv(truth: GroundTruth, path) -> None:
    with open(path, "w") as fh:
        fh.write(TRUTH_HEADER + "\n")
        for i, pid in enumerate(truth.plot_ids):
            mc = int(truth.manual_count[i])
            fh.write(
                f"{int(pid)},{int(truth.true_pods[i])},{float(truth.yield_g[i])!r},"
                f"{'' if mc < 0 else mc},{int(bool(truth.is_corrupted[i]))}\n"
            )


def read_truth_csv(path) -> dict[int, dict]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[int(row["plot_id"])] = {
                "true_pods": int(row["true_pods"]),
                "yield_g": float(row["yield_g"]),
                "manual_count": int(row["manual_count"]) if row["manual_count"] else None,
                "is_corrupted": row["is_corrupted"] == "1",
            }
    return out


def write_yields_csv(truth: GroundTruth, path) -> None:
    with open(path, "w") as fh:
        fh.write("plot_id,yield_g\n")
        for pid, y in zip(truth.plot_ids, truth.yield_g):
            fh.write(f"{int(pid)},{float(y)!r}\n")


def write_manual_counts_csv(truth: GroundTruth, path) -> None:
    with open(path, "w") as fh:
        fh.write("plot_id,manual_count\n")
        for pid, m in zip(truth.plot_ids, truth.manual_count):
            if m >= 0:
                fh.write(f"{int(pid)},{int(m)}\n")


def write_simulation(cfg: SimConfig, out_dir) -> dict:
    """Write layout, truth tables and one directory per pass under ``out_dir``."""
    out = Path(out_dir)
    (out / "collections").mkdir(parents=True, exist_ok=True)
    save_layout(cfg.layout, out / "layout.json")
    (out / "sim.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    truth = generate_ground_truth(cfg)
    write_truth_csv(truth, out / "truth.csv")
    write_yields_csv(truth, out / "yields.csv")
    write_manual_counts_csv(truth, out / "manual_counts.csv")
    n_pass = cfg.layout.n_columns + 1
    for p in range(n_pass):
        c = generate_collection(cfg, truth, p)
        write_collection(c, out / "collections" / c.manifest.collection_id)
    return {
        "plots": int(cfg.layout.n_plots),
        "passes": n_pass,
        "corrupted": int(truth.is_corrupted.sum()),
    }


def load_sim_config(path) -> SimConfig:
    return SimConfig.from_dict(json.loads(Path(path).read_text()))


def zero_noise(cfg: SimConfig) -> SimConfig:
    """Copy of ``cfg`` with every noise source and corruption switched off."""
    return replace(
        cfg,
        gps_noise_sd_m=0.0,
        odom_drift_frac=0.0,
        lidar_noise_sd=0.0,
        detector_recall=1.0,
        detector_precision=1.0,
        bad_plot_fraction=0.0,
        yield_noise_sd=0.0,
        manual_count_noise_sd=0.0,
        rtk_fraction=1.0,
    )

