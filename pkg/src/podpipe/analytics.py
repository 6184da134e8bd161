"""Count-versus-yield statistics: Pearson r, OLS line, 2-sigma residual filter.

Sums use ``math.fsum`` so results do not depend on record order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .count import PlotResult, join_truth
from .errors import DegenerateSeriesError, InsufficientDataError, ValidationError

SIGMA_CUTOFF = 2.0
RELATIVE_ZERO = 1e-12


class Record(NamedTuple):
    plot_id: int
    x: float
    y: float
    side: str | None = None


@dataclass(frozen=True)
class PairedSeries:
    records: tuple[Record, ...]
    label_x: str = "pod_count"
    label_y: str = "yield_g"

    def __post_init__(self):
        keys = [(r.plot_id, r.side) for r in self.records]
        if len(set(keys)) != len(keys):
            raise ValidationError("records", "duplicate plot ids")
        for r in self.records:
            if not (math.isfinite(r.x) and math.isfinite(r.y)):
                raise ValidationError("records", f"non-finite value for plot {r.plot_id}")

    @classmethod
    def from_arrays(cls, x, y, plot_ids=None, label_x="x", label_y="y") -> "PairedSeries":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ids = range(len(x)) if plot_ids is None else plot_ids
        return cls(tuple(Record(int(i), float(a), float(b)) for i, a, b in zip(ids, x, y)), label_x, label_y)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def x(self) -> np.ndarray:
        return np.array([r.x for r in self.records], dtype=float)

    @property
    def y(self) -> np.ndarray:
        return np.array([r.y for r in self.records], dtype=float)

    def swapped(self) -> "PairedSeries":
        return PairedSeries(tuple(Record(r.plot_id, r.y, r.x, r.side) for r in self.records),
                            self.label_y, self.label_x)

    def subset(self, keep: Sequence[bool]) -> "PairedSeries":
        return PairedSeries(tuple(r for r, k in zip(self.records, keep) if k), self.label_x, self.label_y)


@dataclass(frozen=True)
class CorrelationReport:
    stage: str
    n: int
    r: float
    slope: float
    intercept: float
    removed_outliers: tuple[tuple[int, str | None, float], ...] = ()
    r_before_filter: float | None = None
    n_before_filter: int | None = None
    label_x: str = "pod_count"
    label_y: str = "yield_g"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["removed_outliers"] = [
            {"plot_id": p, "side": s, "standardized_residual": z} for p, s, z in self.removed_outliers
        ]
        return d


def _centered_sums(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = x - mx
    dy = y - my
    return math.fsum(dx * dx), math.fsum(dy * dy), math.fsum(dx * dy)


def _require(series: PairedSeries, n: int) -> tuple[np.ndarray, np.ndarray]:
    if len(series) < n:
        raise InsufficientDataError(len(series), n)
    return series.x, series.y


def pearson_r(series: PairedSeries) -> float:
    x, y = _require(series, 3)
    sxx, syy, sxy = _centered_sums(x, y)
    if sxx == 0:
        raise DegenerateSeriesError(series.label_x)
    if syy == 0:
        raise DegenerateSeriesError(series.label_y)
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def linear_fit(series: PairedSeries) -> tuple[float, float, np.ndarray]:
    """Ordinary least squares ``y = slope * x + intercept``; returns residuals too."""
    x, y = _require(series, 3)
    sxx, _, sxy = _centered_sums(x, y)
    if sxx == 0:
        raise DegenerateSeriesError(series.label_x)
    slope = sxy / sxx
    intercept = math.fsum(y) / len(y) - slope * (math.fsum(x) / len(x))
    return slope, intercept, y - (slope * x + intercept)


def standardized_residuals(series: PairedSeries, residual_axis: str = "y") -> np.ndarray:
    if residual_axis not in ("x", "y"):
        raise ValidationError("residual_axis", "must be 'x' or 'y'")
    oriented = series if residual_axis == "y" else series.swapped()
    _, _, res = linear_fit(oriented)
    n = len(res)
    mean = math.fsum(res) / n
    sd = math.sqrt(math.fsum((res - mean) ** 2) / (n - 1))
    spread = math.sqrt(_centered_sums(oriented.y, oriented.y)[0] / (n - 1))
    # an exact fit leaves only rounding noise in the residuals
    if sd <= RELATIVE_ZERO * spread:
        raise DegenerateSeriesError("residuals")
    return res / sd


def filter_2sigma(
    series: PairedSeries, residual_axis: str = "y", cutoff: float = SIGMA_CUTOFF
) -> tuple[PairedSeries, list[tuple[int, str | None, float]]]:
    """Drop records whose standardized OLS residual exceeds ``cutoff`` in magnitude.

    Single pass. ``residual_axis='y'`` regresses y on x; ``'x'`` regresses
    x on y, which keeps outliers in x from hiding behind their own leverage.
    """
    _require(series, 4)
    z = standardized_residuals(series, residual_axis)
    keep = np.abs(z) <= cutoff
    removed = [(r.plot_id, r.side, float(v)) for r, v, k in zip(series.records, z, keep) if not k]
    return series.subset(keep), removed


def _report(stage: str, series: PairedSeries, removed=(), r_before=None, n_before=None) -> CorrelationReport:
    slope, intercept, _ = linear_fit(series)
    return CorrelationReport(stage, len(series), pearson_r(series), slope, intercept, tuple(removed),
                             r_before, n_before, series.label_x, series.label_y)


def side_series(results: Iterable[PlotResult]) -> PairedSeries:
    recs = []
    for r in results:
        if r.yield_g is None:
            continue
        for side, v in r.side_counts():
            recs.append(Record(r.plot_id, v, r.yield_g, side))
    return PairedSeries(tuple(recs), "pod_count", "yield_g")


def collapse_sides(series: PairedSeries) -> PairedSeries:
    """Average the surviving side records of each plot into one record."""
    groups: dict[int, list[Record]] = {}
    for r in series.records:
        groups.setdefault(r.plot_id, []).append(r)
    recs = tuple(
        Record(pid, float(np.mean([r.x for r in sorted(g, key=lambda r: r.side or "")])), g[0].y)
        for pid, g in sorted(groups.items())
    )
    return PairedSeries(recs, series.label_x, series.label_y)


@dataclass(frozen=True)
class StageSeries:
    all: PairedSeries
    filtered: PairedSeries
    removed: tuple[tuple[int, str | None, float], ...]
    averaged: PairedSeries


def stage_series(results: Sequence[PlotResult], yields: dict[int, float] | None = None,
                 residual_axis: str = "x") -> StageSeries:
    if yields is not None:
        results = join_truth(results, yields)
    s1 = side_series(results)
    if len(s1) < 3:
        raise InsufficientDataError(len(s1), 3)
    try:
        s2, removed = filter_2sigma(s1, residual_axis)
    except DegenerateSeriesError:
        s2, removed = s1, []
    return StageSeries(s1, s2, tuple(removed), collapse_sides(s2))


def run_stages(results: Sequence[PlotResult], yields: dict[int, float] | None = None,
               residual_axis: str = "x") -> list[CorrelationReport]:
    """All observations, then 2-sigma filtered, then sides averaged."""
    return stage_reports(stage_series(results, yields, residual_axis))


def stage_reports(st: StageSeries) -> list[CorrelationReport]:
    return [
        _report("all", st.all),
        _report("filtered", st.filtered, st.removed, r_before=pearson_r(st.all), n_before=len(st.all)),
        _report("averaged", st.averaged),
    ]


def manual_count_comparison(results: Sequence[PlotResult], manual_counts: dict[int, float],
                            residual_axis: str = "x") -> CorrelationReport:
    recs = tuple(
        Record(r.plot_id, r.combined_count, float(manual_counts[r.plot_id]))
        for r in results if r.plot_id in manual_counts
    )
    s = PairedSeries(recs, "pod_count", "manual_count")
    if len(s) < 3:
        raise InsufficientDataError(len(s), 3)
    r_all = pearson_r(s)
    if len(s) < 4:
        return _report("manual", s, (), r_all, len(s))
    try:
        filtered, removed = filter_2sigma(s, residual_axis)
    except DegenerateSeriesError:
        filtered, removed = s, []
    return _report("manual", filtered, removed, r_all, len(s))


REPORT_CSV_HEADER = "stage,n,r,slope,intercept,n_removed,r_before_filter"


def write_report(reports: Sequence[CorrelationReport], json_path, csv_path, config: dict | None = None,
                 extra: dict | None = None) -> None:
    doc = {"config": config or {}, "stages": [r.to_dict() for r in reports]}
    if extra:
        doc.update(extra)
    with open(json_path, "w") as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    with open(csv_path, "w") as fh:
        fh.write(REPORT_CSV_HEADER + "\n")
        for r in reports:
            rb = "" if r.r_before_filter is None else repr(r.r_before_filter)
            fh.write(f"{r.stage},{r.n},{r.r!r},{r.slope!r},{r.intercept!r},{len(r.removed_outliers)},{rb}\n")
