"""Equidistant frame selection within a plot slice, and side cropping."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptySelectionError, ValidationError
from .ingest import Box, FrameRecord

SPACING_EPS = 0.05
CROP_EPS = 1e-9


@dataclass(frozen=True)
class CropSpec:
    left_frac: float = 0.25
    right_frac: float = 0.25
    top_frac: float = 0.0
    bottom_frac: float = 0.0

    def __post_init__(self):
        for name in ("left_frac", "right_frac", "top_frac", "bottom_frac"):
            v = getattr(self, name)
            if not 0.0 <= v < 0.5:
                raise ValidationError(name, f"{v!r} outside [0, 0.5)")

    @property
    def width(self) -> float:
        return 1.0 - self.left_frac - self.right_frac

    @property
    def height(self) -> float:
        return 1.0 - self.top_frac - self.bottom_frac


def apply_crop(spec: CropSpec, box: Box) -> Box | None:
    """Map a raw-frame box into cropped coordinates.

    Boxes touching the removed margin are dropped rather than clipped.
    """
    if not (box.w > 0 and box.h > 0):
        raise ValidationError("box", "w and h must be > 0")
    x1, y1 = box.x, box.y
    x2, y2 = box.x + box.w, box.y + box.h
    if (
        x1 < spec.left_frac - CROP_EPS
        or x2 > 1.0 - spec.right_frac + CROP_EPS
        or y1 < spec.top_frac - CROP_EPS
        or y2 > 1.0 - spec.bottom_frac + CROP_EPS
    ):
        return None
    nx = min(max((x1 - spec.left_frac) / spec.width, 0.0), 1.0)
    ny = min(max((y1 - spec.top_frac) / spec.height, 0.0), 1.0)
    nw = min(box.w / spec.width, 1.0 - nx)
    nh = min(box.h / spec.height, 1.0 - ny)
    return Box(nx, ny, nw, nh, box.conf)


def crop_keep_mask(spec: CropSpec, x, y, w, h) -> np.ndarray:
    """Vector form of the :func:`apply_crop` keep/drop decision."""
    x, y, w, h = (np.asarray(a, dtype=float) for a in (x, y, w, h))
    return (
        (x >= spec.left_frac - CROP_EPS)
        & (x + w <= 1.0 - spec.right_frac + CROP_EPS)
        & (y >= spec.top_frac - CROP_EPS)
        & (y + h <= 1.0 - spec.bottom_frac + CROP_EPS)
    )


@dataclass(frozen=True)
class SelectedFrame:
    frame_id: int
    odometer_m: float
    target_position_m: float
    position_m: float


@dataclass(frozen=True)
class FrameSelection:
    plot_id: int
    side: str
    selected: tuple[SelectedFrame, ...]
    footprint_m: float
    plot_length_m: float
    skipped_targets: tuple[float, ...] = field(default=())

    @property
    def frame_ids(self) -> list[int]:
        return [s.frame_id for s in self.selected]

    def coverage_frac(self) -> float:
        """Fraction of the plot length covered by the union of footprints."""
        half = 0.5 * self.footprint_m
        spans = sorted(
            (max(s.position_m - half, 0.0), min(s.position_m + half, self.plot_length_m))
            for s in self.selected
        )
        total, reach = 0.0, 0.0
        for a, b in spans:
            a = max(a, reach)
            if b > a:
                total += b - a
                reach = b
        # rounding strips float noise from window arithmetic (nanometre scale)
        return min(round(total / self.plot_length_m, 9), 1.0)

    def to_json(self) -> str:
        return json.dumps(
            {
                "plot_id": self.plot_id,
                "side": self.side,
                "footprint_m": self.footprint_m,
                "plot_length_m": self.plot_length_m,
                "selected": [
                    {
                        "frame_id": s.frame_id,
                        "odometer_m": s.odometer_m,
                        "target_position_m": s.target_position_m,
                        "position_m": s.position_m,
                    }
                    for s in self.selected
                ],
                "skipped_targets": list(self.skipped_targets),
            }
        )

    @classmethod
    def from_dict(cls, d: dict) -> "FrameSelection":
        return cls(
            plot_id=int(d["plot_id"]),
            side=d["side"],
            selected=tuple(
                SelectedFrame(int(s["frame_id"]), float(s["odometer_m"]),
                              float(s["target_position_m"]), float(s["position_m"]))
                for s in d["selected"]
            ),
            footprint_m=float(d["footprint_m"]),
            plot_length_m=float(d["plot_length_m"]),
            skipped_targets=tuple(float(t) for t in d.get("skipped_targets", ())),
        )


def default_k(plot_length_m: float, footprint_m: float) -> int:
    return max(1, math.ceil(plot_length_m / footprint_m - 1e-9))


def target_positions(plot_length_m: float, k: int) -> list[float]:
    return [(i + 0.5) / k * plot_length_m for i in range(k)]


class FrameIndex:
    """Per-side frame times and odometer positions, sorted by time."""

    def __init__(self, frames: Sequence[FrameRecord], odom_time_s, odom_m):
        self.by_side: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        for side in ("left", "right"):
            fs = sorted((f for f in frames if f.side == side), key=lambda f: f.time_s)
            t = np.array([f.time_s for f in fs], dtype=float)
            ids = np.array([f.frame_id for f in fs], dtype=np.int64)
            odo = np.interp(t, odom_time_s, odom_m) if len(t) else t
            self.by_side[side] = (t, ids, odo)

    def window(self, side: str, t0: float, t1: float):
        t, ids, odo = self.by_side[side]
        i = np.searchsorted(t, t0, side="left")
        j = np.searchsorted(t, t1, side="right")
        return ids[i:j], odo[i:j]


def select_frames(
    slice_,
    frames: Sequence[FrameRecord] | FrameIndex,
    odom_time_s: np.ndarray | None,
    odom_m: np.ndarray | None,
    plot_length_m: float,
    footprint_m: float = 0.5,
    k: int | None = None,
) -> FrameSelection:
    """Pick up to ``k`` frames nearest to equally spaced targets in the plot.

    ``slice_`` is a :class:`~podpipe.split.PlotSlice`. Frame positions come
    from linear interpolation of the odometer at each frame time. A pick
    that would sit closer than ``footprint_m * (1 - SPACING_EPS)`` to an
    earlier pick is skipped and its target recorded in ``skipped_targets``.
    Pass a prebuilt :class:`FrameIndex` (odometry arguments then unused)
    when selecting many slices from one collection.
    """
    if footprint_m <= 0:
        raise ValidationError("footprint_m", "must be > 0")
    if k is None:
        k = default_k(plot_length_m, footprint_m)
    if k < 1:
        raise ValidationError("k", "must be >= 1")
    index = frames if isinstance(frames, FrameIndex) else FrameIndex(frames, odom_time_s, odom_m)
    t0, t1 = slice_.time_window
    d0, d1 = slice_.odometer_window
    ids, odo = index.window(slice_.side, t0, t1)
    if len(ids) == 0:
        raise EmptySelectionError(slice_.plot_id, slice_.side)
    scale = (d1 - d0) / plot_length_m
    min_gap = footprint_m * (1.0 - SPACING_EPS)

    used: set[int] = set()
    picked: list[SelectedFrame] = []
    skipped: list[float] = []
    for target in target_positions(plot_length_m, k):
        target_odo = d0 + target * scale
        order = np.argsort(np.abs(odo - target_odo), kind="stable")
        j = next((int(i) for i in order if int(i) not in used), None)
        if j is None or any(abs(odo[j] - p.odometer_m) < min_gap for p in picked):
            skipped.append(target)
            continue
        used.add(j)
        picked.append(
            SelectedFrame(int(ids[j]), float(odo[j]), target, float((odo[j] - d0) / scale))
        )
    picked.sort(key=lambda s: s.odometer_m)
    return FrameSelection(
        slice_.plot_id, slice_.side, tuple(picked), footprint_m, plot_length_m, tuple(skipped)
    )
