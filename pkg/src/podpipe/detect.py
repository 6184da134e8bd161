"""Pod detector contract and the two bundled implementations.

Detectors receive frame references (ids plus metadata), never pixels. Real
model inference happens elsewhere and reaches the pipeline through
``detections.jsonl``; the oracle detector reads the simulator's ground truth.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .errors import UnsupportedFrameError, ValidationError
from .fieldsim import GroundTruth, SimConfig, frame_box_arrays, frame_detections, generate_ground_truth, pass_geometry
from .frames import CropSpec, apply_crop, crop_keep_mask
from .ingest import Box, Collection, read_detections_file

log = logging.getLogger(__name__)

DEFAULT_CONFIDENCE_THRESHOLD = 0.5


@dataclass(frozen=True)
class Detection:
    frame_id: int
    box: tuple[float, float, float, float]
    confidence: float

    def __post_init__(self):
        x, y, w, h = self.box
        if not (w > 0 and h > 0):
            raise ValidationError("box", "w and h must be > 0")
        if not (x >= 0 and y >= 0 and x + w <= 1 + 1e-9 and y + h <= 1 + 1e-9):
            raise ValidationError("box", "outside the unit square")
        if not 0 <= self.confidence <= 1:
            raise ValidationError("confidence", "outside [0, 1]")


@dataclass(frozen=True)
class FrameRef:
    collection_id: str
    pass_index: int
    frame_id: int
    time_s: float
    side: str


def frame_refs(c: Collection) -> dict[int, FrameRef]:
    m = c.manifest
    return {f.frame_id: FrameRef(m.collection_id, m.pass_index, f.frame_id, f.time_s, f.side) for f in c.frames}


def _cropped(frame_id: int, boxes: Iterable[Box], crop: CropSpec) -> list[Detection]:
    out = []
    for b in boxes:
        kept = apply_crop(crop, b)
        if kept is not None:
            out.append(Detection(frame_id, (kept.x, kept.y, kept.w, kept.h), kept.conf))
    return out


class Detector(ABC):
    """Anything that turns a frame reference into pod detections."""

    #: whether ``detect`` may be called from several threads at once
    concurrent_safe: bool = True

    @abstractmethod
    def detect(self, frame: FrameRef) -> list[Detection]: ...

    def count(self, frame: FrameRef, confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD) -> int:
        """Pods counted in one frame; override only with an equivalent shortcut."""
        return count_frame(self.detect(frame), confidence_threshold)


def oracle_detect(
    frame: FrameRef,
    cfg: SimConfig,
    truth: GroundTruth,
    recall: float,
    precision: float,
    seed: int,
    crop: CropSpec | None = None,
) -> list[Detection]:
    if not 0 <= frame.pass_index <= cfg.layout.n_columns:
        raise UnsupportedFrameError(f"no simulated pass {frame.pass_index}")
    geom = pass_geometry(cfg, frame.pass_index)
    boxes = frame_detections(cfg, truth, geom, frame.side, frame.frame_id, frame.time_s,
                             recall=recall, precision=precision, seed=seed)
    return _cropped(frame.frame_id, boxes, crop or cfg.crop)


class OracleDetector(Detector):
    """Simulated detector backed by :mod:`podpipe.fieldsim` ground truth."""

    concurrent_safe = True

    def __init__(self, cfg: SimConfig, truth: GroundTruth | None = None, recall: float | None = None,
                 precision: float | None = None, seed: int | None = None, crop: CropSpec | None = None):
        self.cfg = cfg
        self.truth = truth if truth is not None else generate_ground_truth(cfg)
        self.recall = cfg.detector_recall if recall is None else recall
        self.precision = cfg.detector_precision if precision is None else precision
        self.seed = cfg.seed if seed is None else seed
        self.crop = crop or cfg.crop
        self._geoms = {p: pass_geometry(cfg, p) for p in range(cfg.layout.n_columns + 1)}

    def detect(self, frame: FrameRef) -> list[Detection]:
        geom = self._geoms.get(frame.pass_index)
        if geom is None:
            raise UnsupportedFrameError(f"no simulated pass {frame.pass_index}")
        boxes = frame_detections(self.cfg, self.truth, geom, frame.side, frame.frame_id, frame.time_s,
                                 recall=self.recall, precision=self.precision, seed=self.seed)
        return _cropped(frame.frame_id, boxes, self.crop)

    def count(self, frame: FrameRef, confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD) -> int:
        # same draws as detect(), without building a Detection per box
        if not 0 <= confidence_threshold <= 1:
            raise ValidationError("confidence_threshold", "outside [0, 1]")
        geom = self._geoms.get(frame.pass_index)
        if geom is None:
            raise UnsupportedFrameError(f"no simulated pass {frame.pass_index}")
        x, y, w, h, conf = frame_box_arrays(self.cfg, self.truth, geom, frame.side, frame.frame_id, frame.time_s,
                                            recall=self.recall, precision=self.precision, seed=self.seed)
        return int((crop_keep_mask(self.crop, x, y, w, h) & (conf >= confidence_threshold)).sum())


def file_detect(frame: FrameRef | int, detections: Mapping[int, tuple[Box, ...]],
                crop: CropSpec) -> list[Detection]:
    fid = frame if isinstance(frame, int) else frame.frame_id
    stored = detections.get(fid)
    if stored is None:
        log.info("frame %s has no stored detections", fid)
        return []
    return _cropped(fid, stored, crop)


class FileDetector(Detector):
    """Serves detections embedded in frames.jsonl or from detections.jsonl.

    Embedded detections take precedence over the sibling file.
    """

    concurrent_safe = True

    def __init__(self, collection: Collection, crop: CropSpec, detections_path: str | Path | None = None):
        self.crop = crop
        table: dict[int, tuple[Box, ...]] = {}
        path = Path(detections_path) if detections_path else (
            collection.path / "detections.jsonl" if collection.path is not None else None
        )
        if path is not None and path.is_file():
            table.update(read_detections_file(path))
        for f in collection.frames:
            if f.detections is not None:
                table[f.frame_id] = f.detections
        self.table = table

    def detect(self, frame: FrameRef) -> list[Detection]:
        return file_detect(frame, self.table, self.crop)


def count_frame(detections: Iterable[Detection], confidence_threshold: float = DEFAULT_CONFIDENCE_THRESHOLD) -> int:
    if not 0 <= confidence_threshold <= 1:
        raise ValidationError("confidence_threshold", "outside [0, 1]")
    return sum(1 for d in detections if d.confidence >= confidence_threshold)
