"""``podpipe`` command line: simulate, split, frames, count, analyze, pipeline.

Every command takes ``--config <json>`` plus flag overrides. Stage commands
read the previous stage's files from the output directory, so running them
in sequence writes the same bytes as ``pipeline``.

Exit codes: 0 success, 2 usage/config, 3 mode unavailable, 4 data integrity.
Failures print one line ``ERROR <stage> <code>: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analytics import manual_count_comparison, stage_reports, stage_series, write_report
from .count import join_truth, merge_all, read_counts_csv, read_value_csv, write_counts_csv
from .detect import Detector, FileDetector, OracleDetector
from .errors import ConfigError, PodPipeError, ValidationError
from .fieldmodel import FieldLayout, load_layout
from .fieldsim import SimConfig, load_sim_config, write_simulation, zero_noise
from .frames import CropSpec, FrameSelection
from .ingest import Collection, read_collection, validate_metadata
from .pipeline import default_workers, observe_collection, ordered_map, select_collection, split_collection
from .split import read_slices, write_plot_centers, write_slices
from .svgplot import ScatterData, write_scatter

STAGES = ("split", "frames", "count", "analyze")

DEFAULTS: dict = {
    "data": None,
    "layout": None,
    "collections": None,
    "yields": None,
    "manual_counts": None,
    "sim": None,
    "out": "podpipe_out",
    "split_method": "auto",
    "k": None,
    "footprint_m": 0.5,
    "crop": [0.25, 0.25, 0.0, 0.0],
    "detector": "oracle",
    "detections": None,
    "detector_recall": None,
    "detector_precision": None,
    "seed": None,
    "calibration_c": 1.0,
    "confidence_threshold": 0.5,
    "residual_axis": "x",
    "workers": None,
}

_TYPES = {
    "k": int,
    "footprint_m": float,
    "detector_recall": float,
    "detector_precision": float,
    "seed": int,
    "calibration_c": float,
    "confidence_threshold": float,
    "workers": int,
}

_CHOICES = {
    "split_method": ("auto", "gps", "lidar"),
    "detector": ("oracle", "file"),
    "residual_axis": ("x", "y"),
}


class _ArgParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"ERROR cli 2: {message}\n")
        raise SystemExit(2)


# configuration


def _parse_set(items: list[str]) -> dict:
    out = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _load_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        d = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}:{e.lineno}: invalid JSON ({e.msg})") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return d


def effective_config(args: argparse.Namespace) -> dict:
    """Defaults, then the ``--config`` file, then command-line flags."""
    cfg = dict(DEFAULTS)
    layered = _load_json(args.config) if args.config else {}
    layered.update(_parse_set(args.set))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            layered[key] = v
    unknown = sorted(set(layered) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    cfg.update(layered)
    _resolve_paths(cfg)
    _check(cfg)
    return cfg


def _resolve_paths(cfg: dict) -> None:
    data = Path(cfg["data"]) if cfg["data"] else None
    if data is not None:
        for key, name in (("layout", "layout.json"), ("collections", "collections"),
                          ("yields", "yields.csv"), ("sim", "sim.json")):
            if cfg[key] is None:
                cfg[key] = str(data / name)
        if cfg["manual_counts"] is None and (data / "manual_counts.csv").is_file():
            cfg["manual_counts"] = str(data / "manual_counts.csv")


def _check(cfg: dict) -> None:
    for key, choices in _CHOICES.items():
        if cfg[key] not in choices:
            raise ValidationError(key, f"{cfg[key]!r} not in {list(choices)}")
    if cfg["k"] is not None and cfg["k"] < 1:
        raise ValidationError("k", "must be >= 1")
    if not cfg["footprint_m"] > 0:
        raise ValidationError("footprint_m", "must be > 0")
    if not 0 <= cfg["confidence_threshold"] <= 1:
        raise ValidationError("confidence_threshold", "outside [0, 1]")
    if not cfg["calibration_c"] > 0:
        raise ValidationError("calibration_c", "must be > 0")
    if cfg["workers"] is not None and cfg["workers"] < 1:
        raise ValidationError("workers", "must be >= 1")
    crop = cfg["crop"]
    if not (isinstance(crop, (list, tuple)) and len(crop) == 4):
        raise ValidationError("crop", "expected four fractions left,right,top,bottom")
    CropSpec(*map(float, crop))


def _require(cfg: dict, key: str, kind: str = "file") -> Path:
    if cfg[key] is None:
        raise ConfigError(f"{key} not given (use --{key.replace('_', '-')} or --data)")
    p = Path(cfg[key])
    ok = p.is_file() if kind == "file" else p.is_dir()
    if not ok:
        raise ConfigError(f"{key} {kind} not found: {p}")
    return p


def _out_dir(cfg: dict, sub: str | None = None) -> Path:
    p = Path(cfg["out"]) if sub is None else Path(cfg["out"]) / sub
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {p}: {e.strerror}") from None
    return p


def _workers(cfg: dict) -> int:
    return cfg["workers"] if cfg["workers"] is not None else default_workers()


def _crop(cfg: dict) -> CropSpec:
    return CropSpec(*map(float, cfg["crop"]))


def _write_config(cfg: dict, command: str) -> None:
    path = _out_dir(cfg) / f"config_{command}.json"
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def _mark_done(cfg: dict, stage: str) -> None:
    path = _out_dir(cfg) / "MANIFEST"
    done = set(path.read_text().split()) if path.is_file() else set()
    done.add(stage)
    path.write_text("".join(f"{s}\n" for s in STAGES if s in done))


# inputs


def load_collections(cfg: dict) -> list[Collection]:
    root = _require(cfg, "collections", "dir")
    if (root / "manifest.json").is_file():
        dirs = [root]
    else:
        dirs = sorted(p for p in root.iterdir() if (p / "manifest.json").is_file())
    if not dirs:
        raise ConfigError(f"no collection directories under {root}")
    return ordered_map(read_collection, dirs, _workers(cfg))


def _layout(cfg: dict) -> FieldLayout:
    return load_layout(_require(cfg, "layout"))


def make_detector(cfg: dict, collection: Collection | None = None) -> Detector:
    if cfg["detector"] == "file":
        path = cfg["detections"]
        if path is not None and collection is not None:
            path = Path(path) / collection.manifest.collection_id / "detections.jsonl"
        return FileDetector(collection, _crop(cfg), path)
    sim = load_sim_config(_require(cfg, "sim"))
    return OracleDetector(sim, recall=cfg["detector_recall"], precision=cfg["detector_precision"],
                          seed=cfg["seed"], crop=_crop(cfg))


# stages


class CollectionContextError(PodPipeError):
    """A stage error annotated with the collection it came from."""

    def __init__(self, collection_id: str, error: PodPipeError):
        self.collection_id = collection_id
        self.error = error
        self.exit_code = error.exit_code
        super().__init__(f"collection {collection_id}: {type(error).__name__}: {error}")


def _in_collection(c: Collection, fn):
    try:
        return fn()
    except PodPipeError as e:
        raise CollectionContextError(c.manifest.collection_id, e) from e


def stage_split(cfg: dict, collections: list[Collection], layout: FieldLayout) -> dict[str, list]:
    def one(c):
        slices, rep = _in_collection(c, lambda: split_collection(c, layout, cfg["split_method"]))
        return slices, rep, validate_metadata(c, layout)

    parts = ordered_map(one, collections, _workers(cfg))
    out = _out_dir(cfg, "slices")
    centers: dict[int, list[tuple[float, float]]] = {}
    reports = []
    result = {}
    for c, (slices, rep, warnings) in zip(collections, parts):
        cid = c.manifest.collection_id
        write_slices(slices, out / f"{cid}.jsonl")
        result[cid] = slices
        d = rep.to_dict()
        d["warnings"] = warnings
        reports.append(json.dumps(d, sort_keys=True))
        for pid, lat, lon in rep.centers:
            centers.setdefault(pid, []).append((lat, lon))
    (_out_dir(cfg) / "split_report.jsonl").write_text("".join(r + "\n" for r in reports))
    merged = [(pid, float(np.mean([a for a, _ in v])), float(np.mean([b for _, b in v])))
              for pid, v in sorted(centers.items())]
    write_plot_centers(merged, _out_dir(cfg) / "plot_centers.csv")
    _mark_done(cfg, "split")
    return result


def _read_slices(cfg: dict, collections: list[Collection]) -> dict[str, list]:
    d = Path(cfg["out"]) / "slices"
    out = {}
    for c in collections:
        cid = c.manifest.collection_id
        p = d / f"{cid}.jsonl"
        if not p.is_file():
            raise ConfigError(f"slices for {cid} not found: {p} (run split first)")
        out[cid] = read_slices(p)
    return out


def stage_frames(cfg: dict, collections: list[Collection], layout: FieldLayout,
                 slices: dict[str, list]) -> dict[str, list[FrameSelection]]:
    def one(c):
        return _in_collection(c, lambda: select_collection(
            c, slices[c.manifest.collection_id], layout, cfg["footprint_m"], cfg["k"]))

    parts = ordered_map(one, collections, _workers(cfg))
    out = _out_dir(cfg, "selections")
    result = {}
    for c, (sels, empty) in zip(collections, parts):
        cid = c.manifest.collection_id
        for pid, side in empty:
            sys.stderr.write(f"WARNING frames: {cid} plot {pid} {side} has no frames\n")
        with open(out / f"{cid}.jsonl", "w") as fh:
            for s in sels:
                fh.write(s.to_json() + "\n")
        result[cid] = sels
    _mark_done(cfg, "frames")
    return result


def _read_selections(cfg: dict, collections: list[Collection]) -> dict[str, list[FrameSelection]]:
    d = Path(cfg["out"]) / "selections"
    out = {}
    for c in collections:
        cid = c.manifest.collection_id
        p = d / f"{cid}.jsonl"
        if not p.is_file():
            raise ConfigError(f"selections for {cid} not found: {p} (run frames first)")
        with open(p) as fh:
            out[cid] = [FrameSelection.from_dict(json.loads(line)) for line in fh if line.strip()]
    return out


def stage_count(cfg: dict, collections: list[Collection], selections: dict[str, list[FrameSelection]]):
    shared = make_detector(cfg) if cfg["detector"] == "oracle" else None
    workers = _workers(cfg) if shared is None or shared.concurrent_safe else 1

    def one(c):
        det = shared or make_detector(cfg, c)
        return _in_collection(c, lambda: observe_collection(
            c, selections[c.manifest.collection_id], det, cfg["confidence_threshold"], cfg["calibration_c"]))

    parts = ordered_map(one, collections, workers)
    results = merge_all(o for p in parts for o in p)
    write_counts_csv(results, _out_dir(cfg) / "counts.csv")
    _mark_done(cfg, "count")
    return results


def _scatter(title, series, slope, intercept, r, removed_from=None, removed=()) -> ScatterData:
    rx, ry = [], []
    if removed_from is not None and removed:
        gone = {(p, s) for p, s, _ in removed}
        for rec in removed_from.records:
            if (rec.plot_id, rec.side) in gone:
                rx.append(rec.x)
                ry.append(rec.y)
    return ScatterData(title, series.x.tolist(), series.y.tolist(), slope, intercept, r, len(series), rx, ry)


def stage_analyze(cfg: dict, results) -> list:
    yields = read_value_csv(_require(cfg, "yields"), "yield_g")
    manual = None
    if cfg["manual_counts"] is not None:
        manual = read_value_csv(_require(cfg, "manual_counts"), "manual_count")
    st = stage_series(results, yields, cfg["residual_axis"])
    reports = stage_reports(st)
    extra = {}
    if manual:
        extra["manual"] = manual_count_comparison(join_truth(results, yields, manual), manual,
                                                  cfg["residual_axis"]).to_dict()
    out = _out_dir(cfg)
    echo = {"residual_axis": cfg["residual_axis"], "sigma_cutoff": 2.0}
    write_report(reports, out / "report.json", out / "report.csv", echo, extra)
    titles = {"all": "All observations", "filtered": "After 2-sigma filter", "averaged": "Sides averaged"}
    for rep, series in zip(reports, (st.all, st.filtered, st.averaged)):
        data = _scatter(titles[rep.stage], series, rep.slope, rep.intercept, rep.r,
                        st.all if rep.stage == "filtered" else None, rep.removed_outliers)
        write_scatter(data, out / f"scatter_{rep.stage}.svg")
    _mark_done(cfg, "analyze")
    return reports


# commands


def cmd_simulate(args) -> int:
    d = _load_json(args.config) if args.config else {}
    d.update(_parse_set(args.set))
    layout = dict(d.pop("layout", {}))
    for key in ("n_columns", "n_ranges"):
        v = getattr(args, key)
        if v is not None:
            layout[key] = v
    if layout:
        d["layout"] = json.loads(FieldLayout.from_dict({**json.loads(FieldLayout().to_json()), **layout}).to_json())
    if args.seed is not None:
        d["seed"] = args.seed
    try:
        sim = SimConfig.from_dict(d)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    if args.zero_noise:
        sim = zero_noise(sim)
    out = Path(args.out)
    try:
        summary = write_simulation(sim, out)
    except OSError as e:
        raise ConfigError(f"cannot write {e.filename or out}: {e.strerror}") from None
    print(f"plots={summary['plots']} passes={summary['passes']} corrupted={summary['corrupted']}")
    return 0


def cmd_split(args) -> int:
    cfg = effective_config(args)
    _write_config(cfg, "split")
    stage_split(cfg, load_collections(cfg), _layout(cfg))
    return 0


def cmd_frames(args) -> int:
    cfg = effective_config(args)
    _write_config(cfg, "frames")
    cols = load_collections(cfg)
    stage_frames(cfg, cols, _layout(cfg), _read_slices(cfg, cols))
    return 0


def cmd_count(args) -> int:
    cfg = effective_config(args)
    _write_config(cfg, "count")
    cols = load_collections(cfg)
    stage_count(cfg, cols, _read_selections(cfg, cols))
    return 0


def cmd_analyze(args) -> int:
    cfg = effective_config(args)
    _write_config(cfg, "analyze")
    counts = Path(args.counts) if args.counts else Path(cfg["out"]) / "counts.csv"
    if not counts.is_file():
        raise ConfigError(f"counts file not found: {counts}")
    reports = stage_analyze(cfg, read_counts_csv(counts))
    for r in reports:
        print(f"{r.stage}: r={r.r:.4f} n={r.n} removed={len(r.removed_outliers)}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = effective_config(args)
    _write_config(cfg, "pipeline")
    # fail on a missing yields file before doing any work
    _require(cfg, "yields")
    layout = _layout(cfg)
    cols = load_collections(cfg)
    slices = _staged("split", stage_split, cfg, cols, layout)
    sels = _staged("frames", stage_frames, cfg, cols, layout, slices)
    results = _staged("count", stage_count, cfg, cols, sels)
    reports = _staged("analyze", stage_analyze, cfg, results)
    for r in reports:
        print(f"{r.stage}: r={r.r:.4f} n={r.n} removed={len(r.removed_outliers)}")
    return 0


class _StageFailed(Exception):
    def __init__(self, stage: str, error: BaseException):
        self.stage = stage
        self.error = error


def _staged(stage, fn, *a):
    try:
        return fn(*a)
    except (PodPipeError, OSError) as e:
        raise _StageFailed(stage, e) from e


def build_parser() -> argparse.ArgumentParser:
    p = _ArgParser(prog="podpipe", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_ArgParser)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key")

    sim = sub.add_parser("simulate", help="write a synthetic field")
    common(sim)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--n-columns", type=int)
    sim.add_argument("--n-ranges", type=int)
    sim.add_argument("--zero-noise", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    for name, fn, help_ in (
        ("split", cmd_split, "split collections into plot slices"),
        ("frames", cmd_frames, "select frames per plot slice"),
        ("count", cmd_count, "detect and count pods per plot"),
        ("analyze", cmd_analyze, "correlate counts with yield"),
        ("pipeline", cmd_pipeline, "run every stage"),
    ):
        sp = sub.add_parser(name, help=help_)
        common(sp)
        for key in DEFAULTS:
            flag = "--" + key.replace("_", "-")
            if key == "crop":
                sp.add_argument(flag, type=_crop_arg, metavar="L,R,T,B")
            elif key in _CHOICES:
                sp.add_argument(flag, choices=_CHOICES[key])
            else:
                sp.add_argument(flag, type=_TYPES.get(key, str))
        if name == "split":
            sp.add_argument("--method", dest="split_method", choices=_CHOICES["split_method"])
        if name == "analyze":
            sp.add_argument("--counts", help="counts.csv (default: <out>/counts.csv)")
        sp.set_defaults(func=fn)
    return p


def _crop_arg(text: str) -> list[float]:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected four comma-separated fractions")
    return [float(v) for v in parts]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    stage = args.command
    try:
        return args.func(args)
    except _StageFailed as f:
        stage, err = f.stage, f.error
    except (PodPipeError, OSError) as e:
        err = e
    if isinstance(err, PodPipeError):
        code = err.exit_code
    elif isinstance(err, FileNotFoundError):
        code = 4
    else:
        code = 2
    msg = str(err).replace("\n", " ")
    sys.stderr.write(f"ERROR {stage} {code}: {msg}\n")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
