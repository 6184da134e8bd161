from dataclasses import replace

import numpy as np
import pytest

from podpipe.errors import ModeUnavailableError, SegmentationMismatchError, ValidationError
from podpipe.fieldmodel import FieldLayout, invert_id, plot_center_geo
from podpipe.fieldsim import generate_collection, generate_ground_truth, pass_geometry, true_frame_plot, zero_noise
from podpipe.geo import GeoPoint, project_to_local
from podpipe.ingest import LidarStream
from podpipe.split import (
    PlotSlice,
    assign_and_verify,
    assign_frames,
    read_slices,
    split_by_gps,
    split_by_lidar,
    write_slices,
)

from conftest import small_cfg

QUIET = zero_noise(small_cfg(seed=3, n_columns=3, n_ranges=6))
QUIET_TRUTH = generate_ground_truth(QUIET)


def quiet_pass(p=1, cfg=QUIET):
    return generate_collection(cfg, QUIET_TRUTH, p)


def test_noiseless_gps_slices():
    c = quiet_pass()
    slices = split_by_gps(c, QUIET.layout)
    assert len(slices) == 2 * QUIET.layout.n_ranges
    for s in slices:
        assert abs(s.odometer_window[1] - s.odometer_window[0] - 1.0) < 1e-9
        assert s.method == "gps" and s.confidence == 1.0


def test_one_sided_pass_has_n_ranges_slices():
    slices = split_by_gps(quiet_pass(0), QUIET.layout)
    assert len(slices) == QUIET.layout.n_ranges and {s.side for s in slices} == {"right"}


def test_truncated_pass():
    cfg = replace(zero_noise(small_cfg(n_columns=2, n_ranges=36)), ranges_driven=18)
    truth = generate_ground_truth(cfg)
    c = generate_collection(cfg, truth, 1)
    slices = split_by_gps(c, cfg.layout)
    assert len(slices) == 36
    assert {invert_id(cfg.layout, s.plot_id).range_index for s in slices} == set(range(18))


@pytest.mark.parametrize("p", [0, 1, 3])
def test_gps_and_lidar_agree_noiseless(p):
    c = quiet_pass(p)
    g = {(s.plot_id, s.side): s for s in split_by_gps(c, QUIET.layout)}
    li = {(s.plot_id, s.side): s for s in split_by_lidar(c, QUIET.layout)}
    assert g.keys() == li.keys()
    for k in g:
        for a, b in zip(g[k].odometer_window, li[k].odometer_window):
            assert abs(a - b) < 0.05


def frame_accuracy(cfg, seeds):
    hits = total = 0
    for seed in seeds:
        cfg_s = replace(cfg, seed=seed)
        truth = generate_ground_truth(cfg_s)
        for p in range(cfg.layout.n_columns + 1):
            c = generate_collection(cfg_s, truth, p)
            geom = pass_geometry(cfg_s, p)
            assigned = assign_frames(split_by_gps(c, cfg.layout), c.frames)
            for f in c.frames:
                total += 1
                hits += assigned.get(f.frame_id) == true_frame_plot(cfg_s, geom, f.side, f.time_s)
    return hits / total


def test_rtk_noise_frame_assignment():
    cfg = small_cfg(n_columns=4, n_ranges=12, gps_noise_sd_m=0.02, frame_phase_s=0.05)
    assert frame_accuracy(cfg, range(3)) >= 0.99


def test_edge_aligned_frames_are_the_only_misses():
    # with frames phase-locked to plot edges, only frames sitting on an edge can flip
    cfg = small_cfg(n_columns=2, n_ranges=8, gps_noise_sd_m=0.02)
    truth = generate_ground_truth(cfg)
    c = generate_collection(cfg, truth, 1)
    geom = pass_geometry(cfg, 1)
    assigned = assign_frames(split_by_gps(c, cfg.layout), c.frames)
    lay = cfg.layout
    for f in c.frames:
        if assigned.get(f.frame_id) != true_frame_plot(cfg, geom, f.side, f.time_s):
            a = float(geom.along(f.time_s))
            edge = min(abs(a - r * lay.pitch_m - o) for r in range(lay.n_ranges) for o in (0.0, lay.plot_length_m))
            assert edge < 1e-6


def test_gps_without_odometry_uses_smoothed_track():
    cfg = replace(QUIET, odometry_available=False)
    c = generate_collection(cfg, QUIET_TRUTH, 1)
    slices = split_by_gps(c, cfg.layout)
    assert len(slices) == 2 * cfg.layout.n_ranges
    for s in slices:
        assert abs(s.odometer_window[1] - s.odometer_window[0] - 1.0) < 0.02


def test_gps_unavailable():
    c = generate_collection(replace(QUIET, gps_available=False), QUIET_TRUTH, 1)
    with pytest.raises(ModeUnavailableError):
        split_by_gps(c, QUIET.layout)
    assert len(split_by_lidar(c, QUIET.layout)) == 2 * QUIET.layout.n_ranges


def test_low_rtk_is_unavailable():
    c = generate_collection(replace(QUIET, rtk_fraction=0.1), QUIET_TRUTH, 1)
    with pytest.raises(ModeUnavailableError):
        split_by_gps(c, QUIET.layout)


def test_fused_alley_is_a_segmentation_mismatch():
    c = quiet_pass()
    li = c.lidar
    along = pass_geometry(QUIET, 1).along(li.time_s)
    # fill the alley between ranges 2 and 3
    fill = (along >= 3 * 1.9 - 0.9) & (along < 3 * 1.9)
    left = np.where(fill, 1.0, li.left)
    fused = replace(c, lidar=LidarStream(li.time_s, left, li.right))
    with pytest.raises(SegmentationMismatchError) as info:
        split_by_lidar(fused, QUIET.layout)
    assert info.value.side == "left" and info.value.found == QUIET.layout.n_ranges - 1


def test_lidar_refuses_without_alleys():
    lay = FieldLayout(n_ranges=6, n_columns=3, alley_length_m=0.0)
    with pytest.raises(ModeUnavailableError):
        split_by_lidar(quiet_pass(), lay)


def test_lidar_survives_noise():
    cfg = replace(QUIET, lidar_noise_sd=0.05)
    c = generate_collection(cfg, QUIET_TRUTH, 2)
    g = {(s.plot_id, s.side): s for s in split_by_gps(c, cfg.layout)}
    for s in split_by_lidar(c, cfg.layout):
        ref = g[(s.plot_id, s.side)]
        assert abs(s.odometer_window[0] - ref.odometer_window[0]) < 0.1
        assert s.confidence > 0.8


def test_consistent_assignment_has_no_flags_and_accurate_centers():
    c = quiet_pass(2)
    slices, report = assign_and_verify(split_by_gps(c, QUIET.layout), c.manifest, QUIET.layout, c.gps)
    assert report.flags == [] and report.diagnoses == []
    assert len(report.centers) == len(slices)
    lay = QUIET.layout
    for pid, lat, lon in report.centers:
        truth = project_to_local(lay.origin, plot_center_geo(lay, invert_id(lay, pid)))
        est = project_to_local(lay.origin, GeoPoint(lat, lon))
        assert np.hypot(est.east_m - truth.east_m, est.north_m - truth.north_m) < 0.05


def test_reversed_direction_single_diagnosis():
    c = quiet_pass(1)
    slices = split_by_gps(c, QUIET.layout)
    _, report = assign_and_verify(slices, replace(c.manifest, direction="decreasing"), QUIET.layout)
    assert len(report.diagnoses) == 1 and "direction mismatch" in report.diagnoses[0]
    flagged = {(f["plot_id"], f["side"]) for f in report.flags if f["reason"] == "direction mismatch"}
    assert flagged == {(s.plot_id, s.side) for s in slices}


def test_wrong_column_flagged_not_fixed():
    c = quiet_pass(1)
    slices = split_by_gps(c, QUIET.layout)
    m = replace(c.manifest, left_column_index=2)
    out, report = assign_and_verify(slices, m, QUIET.layout)
    assert out == slices
    assert any(f["side"] == "left" and "column" in f["reason"] for f in report.flags)


def test_empty_slices_empty_report():
    c = quiet_pass(1)
    out, report = assign_and_verify([], c.manifest, QUIET.layout, c.gps)
    assert out == [] and report.flags == [] and report.diagnoses == [] and report.centers == []


def test_slice_validation_and_io(tmp_path):
    with pytest.raises(ValidationError):
        PlotSlice(4560, "left", (2.0, 1.0), (0.0, 1.0), 1.0, "gps")
    slices = split_by_gps(quiet_pass(), QUIET.layout)
    write_slices(slices, tmp_path / "s.jsonl")
    assert read_slices(tmp_path / "s.jsonl") == slices
