"""Per-plot pod counts: sum frame counts per side, then merge the two sides."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateSideError, EmptySelectionError, ParseError, ValidationError
from .frames import FrameSelection
from .ingest import fmt

LOW_COVERAGE = 0.8
COVERAGE_FLOOR = 0.5

COUNTS_HEADER = "plot_id,count_left,count_right,combined_count,n_sides,flags"


@dataclass(frozen=True)
class PlotObservation:
    plot_id: int
    side: str
    frame_counts: tuple[int, ...]
    raw_count: int
    calibrated_count: float
    coverage_frac: float
    quality_flags: frozenset[str] = field(default_factory=frozenset)


@dataclass(frozen=True)
class PlotResult:
    plot_id: int
    count_left: float | None
    count_right: float | None
    combined_count: float
    n_sides: int
    flags: tuple[str, ...] = ()
    yield_g: float | None = None
    manual_count: float | None = None

    def side_counts(self) -> list[tuple[str, float]]:
        return [(s, v) for s, v in (("left", self.count_left), ("right", self.count_right)) if v is not None]


def aggregate_plot(
    selection: FrameSelection, frame_counts: Sequence[int], calibration_c: float = 1.0
) -> PlotObservation:
    if not selection.selected:
        raise EmptySelectionError(selection.plot_id, selection.side)
    if len(frame_counts) != len(selection.selected):
        raise ValidationError("frame_counts", "must align with the selected frames")
    raw = int(sum(frame_counts))
    cov = selection.coverage_frac()
    flags = set()
    if cov < LOW_COVERAGE:
        flags.add("low-coverage")
    if any(c == 0 for c in frame_counts):
        flags.add("empty-frames")
    calibrated = calibration_c * raw / max(cov, COVERAGE_FLOOR)
    return PlotObservation(
        selection.plot_id, selection.side, tuple(int(c) for c in frame_counts), raw,
        float(calibrated), float(cov), frozenset(flags),
    )


def merge_sides(observations: Iterable[PlotObservation]) -> PlotResult:
    obs = sorted(observations, key=lambda o: o.side)
    if not 1 <= len(obs) <= 2:
        raise ValidationError("observations", "need one or two observations")
    if len({o.plot_id for o in obs}) != 1:
        raise ValidationError("observations", "observations belong to different plots")
    if len({o.side for o in obs}) != len(obs):
        raise DuplicateSideError(f"plot {obs[0].plot_id}: two observations on side {obs[0].side}")
    by_side = {o.side: o.calibrated_count for o in obs}
    combined = float(np.mean([o.calibrated_count for o in obs]))
    flags = tuple(sorted(f"{o.side}:{f}" for o in obs for f in o.quality_flags))
    return PlotResult(obs[0].plot_id, by_side.get("left"), by_side.get("right"), combined, len(obs), flags)


def merge_all(observations: Iterable[PlotObservation]) -> list[PlotResult]:
    """Keyed reduction by plot id; output sorted by plot id."""
    groups: dict[int, list[PlotObservation]] = {}
    for o in observations:
        groups.setdefault(o.plot_id, []).append(o)
    return [merge_sides(groups[k]) for k in sorted(groups)]


def fit_calibration(estimates: Sequence[float], manual: Sequence[float]) -> float:
    """Least-squares scale c minimising sum (manual - c * estimate)^2.

    Offered for reporting only; the pipeline never applies it on its own.
    """
    x = np.asarray(estimates, dtype=float)
    y = np.asarray(manual, dtype=float)
    denom = float(np.dot(x, x))
    if denom == 0:
        raise ValidationError("estimates", "all zero")
    return float(np.dot(x, y) / denom)


def join_truth(results: Iterable[PlotResult], yields: dict[int, float],
               manual: dict[int, float] | None = None) -> list[PlotResult]:
    manual = manual or {}
    return [replace(r, yield_g=yields.get(r.plot_id), manual_count=manual.get(r.plot_id)) for r in results]


def _opt(v) -> str:
    return "" if v is None else fmt(v)


def write_counts_csv(results: Iterable[PlotResult], path) -> None:
    with open(path, "w") as fh:
        fh.write(COUNTS_HEADER + "\n")
        for r in sorted(results, key=lambda r: r.plot_id):
            fh.write(
                f"{r.plot_id},{_opt(r.count_left)},{_opt(r.count_right)},{fmt(r.combined_count)},"
                f"{r.n_sides},{';'.join(r.flags)}\n"
            )


def read_counts_csv(path) -> list[PlotResult]:
    out = []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != COUNTS_HEADER:
        raise ParseError(str(path), 1, f"expected header {COUNTS_HEADER!r}")
    for lineno, row in enumerate(csv.reader(lines[1:]), 2):
        if not row:
            continue
        if len(row) != 6:
            raise ParseError(str(path), lineno, f"expected 6 fields, got {len(row)}")
        try:
            left = float(row[1]) if row[1] else None
            right = float(row[2]) if row[2] else None
            out.append(PlotResult(int(row[0]), left, right, float(row[3]), int(row[4]),
                                  tuple(f for f in row[5].split(";") if f)))
        except ValueError as e:
            raise ParseError(str(path), lineno, str(e)) from None
    return out


def read_value_csv(path, column: str) -> dict[int, float]:
    """Read a ``plot_id,<column>`` table such as yields.csv."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "plot_id" not in reader.fieldnames or column not in reader.fieldnames:
            raise ParseError(str(path), 1, f"expected columns plot_id,{column}")
        for lineno, row in enumerate(reader, 2):
            if not row[column]:
                continue
            try:
                out[int(row["plot_id"])] = float(row[column])
            except ValueError as e:
                raise ParseError(str(path), lineno, str(e)) from None
    return out
