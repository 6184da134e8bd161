from dataclasses import replace

import pytest

from podpipe.errors import FileFormatError, MissingFileError
from podpipe.fieldmodel import serpentine_id
from podpipe.fieldsim import generate_collection, generate_ground_truth
from podpipe.ingest import (
    Box,
    read_collection,
    read_detections_file,
    validate_metadata,
    write_collection,
    write_detections_file,
)

from conftest import small_cfg
from malformed import MALFORMED

CFG = small_cfg(seed=1, n_columns=3, n_ranges=3)
TRUTH = generate_ground_truth(CFG)


@pytest.fixture
def coll_dir(tmp_path):
    c = generate_collection(replace(CFG, embed_detections=True), TRUTH, 1)
    return write_collection(c, tmp_path / "pass_01")


def tree_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_round_trip_structural_and_bytes(tmp_path, coll_dir):
    c = read_collection(coll_dir)
    original = generate_collection(replace(CFG, embed_detections=True), TRUTH, 1)
    assert c == original
    again = write_collection(c, tmp_path / "copy")
    assert tree_bytes(again) == tree_bytes(coll_dir)


def test_optional_streams(tmp_path):
    c = generate_collection(replace(CFG, gps_available=False, odometry_available=False), TRUTH, 1)
    d = write_collection(c, tmp_path / "bare")
    assert not (d / "gps.csv").exists() and not (d / "odom.csv").exists()
    back = read_collection(d)
    assert back.gps is None and back.odometry is None and back == c


def test_detections_file_round_trip(tmp_path):
    table = {3: (Box(0.3, 0.1, 0.04, 0.06, 0.9),), 1: (Box(0.5, 0.5, 0.1, 0.1, 0.6), Box(0.3, 0.2, 0.1, 0.1, 0.7))}
    write_detections_file(tmp_path / "d.jsonl", table)
    assert read_detections_file(tmp_path / "d.jsonl") == table


def test_corpus_size():
    assert len(MALFORMED) >= 20


@pytest.mark.parametrize("name,fname,mutate,kind,line", MALFORMED, ids=[m[0] for m in MALFORMED])
def test_malformed_collection(coll_dir, name, fname, mutate, kind, line):
    mutate(coll_dir)
    with pytest.raises(kind) as info:
        read_collection(coll_dir)
    err = info.value
    assert err.path == str(coll_dir / fname)
    assert err.line == line
    assert f"{fname}:{line}:" in str(err)


@pytest.mark.parametrize("name", ["manifest.json", "lidar.csv", "frames.jsonl"])
def test_missing_required_file(coll_dir, name):
    (coll_dir / name).unlink()
    with pytest.raises(MissingFileError) as info:
        read_collection(coll_dir)
    assert info.value.path == str(coll_dir / name)
    assert isinstance(info.value, FileNotFoundError) and isinstance(info.value, FileFormatError)


def test_metadata_consistent_simulation():
    for p in range(CFG.layout.n_columns + 1):
        assert validate_metadata(generate_collection(CFG, TRUTH, p), CFG.layout) == []


def test_metadata_shifted_column():
    cfg = small_cfg(seed=1, n_columns=8, n_ranges=4)
    truth = generate_ground_truth(cfg)
    c = generate_collection(cfg, truth, 6)  # runs between columns 5 and 6
    m = c.manifest
    lay = cfg.layout
    shifted = replace(
        m,
        left_column_index=4,
        right_column_index=5,
        start_plot_id={"left": serpentine_id(lay, 4, 0), "right": serpentine_id(lay, 5, 0)},
        end_plot_id={"left": serpentine_id(lay, 4, 3), "right": serpentine_id(lay, 5, 3)},
    )
    warnings = validate_metadata(replace(c, manifest=shifted), lay)
    assert any("lateral offset" in w for w in warnings)


def test_metadata_direction_mismatch():
    c = generate_collection(CFG, TRUTH, 1)
    warnings = validate_metadata(replace(c, manifest=replace(c.manifest, direction="decreasing")), CFG.layout)
    assert any("direction mismatch" in w for w in warnings)


def test_metadata_without_gps():
    c = generate_collection(replace(CFG, gps_available=False), TRUTH, 1)
    assert any(w.startswith("GPS verification skipped") for w in validate_metadata(c, CFG.layout))
    low = generate_collection(replace(CFG, rtk_fraction=0.2), TRUTH, 1)
    assert any(w.startswith("GPS verification skipped") for w in validate_metadata(low, CFG.layout))


def test_metadata_wrong_start_id():
    c = generate_collection(CFG, TRUTH, 1)
    m = c.manifest
    bad = replace(m, start_plot_id={**m.start_plot_id, "left": m.start_plot_id["left"] + 1})
    warnings = validate_metadata(replace(c, manifest=bad), CFG.layout)
    assert any("start plot" in w for w in warnings)
