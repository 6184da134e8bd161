"""In-memory orchestration of split -> frames -> detect -> count -> analytics.

The command-line front end wraps these functions with file I/O; tests and
notebooks call them directly on simulated collections.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TypeVar

from .analytics import CorrelationReport, manual_count_comparison, run_stages
from .count import PlotObservation, PlotResult, aggregate_plot, join_truth, merge_all
from .detect import DEFAULT_CONFIDENCE_THRESHOLD, Detector, frame_refs
from .errors import EmptySelectionError, ModeUnavailableError
from .fieldmodel import FieldLayout
from .frames import FrameIndex, FrameSelection, select_frames
from .ingest import Collection
from .split import PlotSlice, SplitReport, assign_and_verify, odometer_track, split_by_gps, split_by_lidar

T = TypeVar("T")
R = TypeVar("R")


def default_workers() -> int:
    env = os.environ.get("PODPIPE_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def ordered_map(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """Map preserving input order, so results never depend on scheduling."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def split_collection(c: Collection, layout: FieldLayout, method: str = "auto") -> tuple[list[PlotSlice], SplitReport]:
    if method == "gps":
        slices = split_by_gps(c, layout)
    elif method == "lidar":
        slices = split_by_lidar(c, layout)
    elif method == "auto":
        try:
            slices = split_by_gps(c, layout)
        except ModeUnavailableError:
            slices = split_by_lidar(c, layout)
    else:
        raise ValueError(f"unknown split method {method!r}")
    return assign_and_verify(slices, c.manifest, layout, c.gps)


def select_collection(
    c: Collection,
    slices: Iterable[PlotSlice],
    layout: FieldLayout,
    footprint_m: float = 0.5,
    k: int | None = None,
) -> tuple[list[FrameSelection], list[tuple[int, str]]]:
    """Frame selections for every slice; also returns (plot, side) pairs with no frames."""
    ot, od = odometer_track(c, layout)
    index = FrameIndex(c.frames, ot, od)
    out, empty = [], []
    for s in slices:
        try:
            out.append(select_frames(s, index, None, None, layout.plot_length_m, footprint_m, k))
        except EmptySelectionError:
            empty.append((s.plot_id, s.side))
    return out, empty


def observe_collection(
    c: Collection,
    selections: Iterable[FrameSelection],
    detector: Detector,
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
    calibration_c: float = 1.0,
) -> list[PlotObservation]:
    refs = frame_refs(c)
    obs = []
    for sel in selections:
        if not sel.selected:
            continue
        counts = [detector.count(refs[fid], confidence_threshold) for fid in sel.frame_ids]
        obs.append(aggregate_plot(sel, counts, calibration_c))
    return obs


@dataclass
class PipelineResult:
    slices: dict[str, list[PlotSlice]]
    split_reports: dict[str, SplitReport]
    selections: dict[str, list[FrameSelection]]
    observations: list[PlotObservation]
    results: list[PlotResult]
    stages: list[CorrelationReport] = field(default_factory=list)
    manual: CorrelationReport | None = None


def run_pipeline(
    collections: Sequence[Collection],
    layout: FieldLayout,
    detector: Detector,
    yields: dict[int, float] | None = None,
    manual_counts: dict[int, float] | None = None,
    split_method: str = "auto",
    footprint_m: float = 0.5,
    k: int | None = None,
    confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD,
    calibration_c: float = 1.0,
    residual_axis: str = "x",
    workers: int = 1,
) -> PipelineResult:
    if not detector.concurrent_safe:
        workers = 1

    def one(c: Collection):
        slices, rep = split_collection(c, layout, split_method)
        sels, _ = select_collection(c, slices, layout, footprint_m, k)
        obs = observe_collection(c, sels, detector, confidence_threshold, calibration_c)
        return slices, rep, sels, obs

    parts = ordered_map(one, list(collections), workers)
    ids = [c.manifest.collection_id for c in collections]
    observations = [o for p in parts for o in p[3]]
    results = merge_all(observations)
    out = PipelineResult(
        slices={i: p[0] for i, p in zip(ids, parts)},
        split_reports={i: p[1] for i, p in zip(ids, parts)},
        selections={i: p[2] for i, p in zip(ids, parts)},
        observations=observations,
        results=results,
    )
    if yields is not None:
        out.results = join_truth(results, yields, manual_counts)
        out.stages = run_stages(out.results, residual_axis=residual_axis)
        if manual_counts:
            out.manual = manual_count_comparison(out.results, manual_counts, residual_axis)
    return out
