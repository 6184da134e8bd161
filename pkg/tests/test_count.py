import numpy as np
import pytest

from podpipe.count import (
    PlotObservation,
    aggregate_plot,
    fit_calibration,
    join_truth,
    merge_all,
    merge_sides,
    read_counts_csv,
    read_value_csv,
    write_counts_csv,
)
from podpipe.errors import DuplicateSideError, EmptySelectionError, ParseError, ValidationError
from podpipe.frames import FrameSelection, SelectedFrame


def selection(positions, footprint=1 / 3, plot_id=4560, side="left"):
    sel = tuple(SelectedFrame(i, p, p, p) for i, p in enumerate(positions))
    return FrameSelection(plot_id, side, sel, footprint, 1.0)


def obs(pid, side, value, flags=()):
    return PlotObservation(pid, side, (), int(value), float(value), 1.0, frozenset(flags))


def test_full_coverage_sum():
    o = aggregate_plot(selection([1 / 6, 0.5, 5 / 6]), [10, 12, 8])
    assert o.coverage_frac == 1.0 and o.calibrated_count == 30 and o.quality_flags == frozenset()


def test_partial_coverage_scales_up():
    o = aggregate_plot(selection([0.125, 0.375, 0.625], footprint=0.25), [10, 12, 8])
    assert o.coverage_frac == 0.75
    assert o.calibrated_count == pytest.approx(40.0)
    assert "low-coverage" in o.quality_flags


def test_coverage_floor_and_calibration():
    o = aggregate_plot(selection([0.5], footprint=0.1), [3], calibration_c=2.0)
    assert o.calibrated_count == pytest.approx(2.0 * 3 / 0.5)


def test_empty_frames_flag_and_errors():
    assert "empty-frames" in aggregate_plot(selection([1 / 6, 0.5, 5 / 6]), [1, 0, 2]).quality_flags
    with pytest.raises(ValidationError):
        aggregate_plot(selection([0.5]), [1, 2])
    with pytest.raises(EmptySelectionError):
        aggregate_plot(selection([]), [])


def test_merge_two_sides():
    r = merge_sides([obs(1, "right", 120), obs(1, "left", 100)])
    assert (r.count_left, r.count_right, r.combined_count, r.n_sides) == (100, 120, 110, 2)


def test_merge_one_side():
    r = merge_sides([obs(1, "left", 100)])
    assert r.combined_count == 100 and r.n_sides == 1 and r.count_right is None


def test_merge_rejects_bad_groups():
    with pytest.raises(DuplicateSideError):
        merge_sides([obs(1, "left", 1), obs(1, "left", 2)])
    with pytest.raises(ValidationError):
        merge_sides([obs(1, "left", 1), obs(2, "right", 2)])
    with pytest.raises(ValidationError):
        merge_sides([])


def test_merge_all_is_order_independent():
    o = [obs(p, s, p * 10 + (s == "left")) for p in range(5) for s in ("left", "right")]
    rng = np.random.default_rng(0)
    shuffled = [o[i] for i in rng.permutation(len(o))]
    assert merge_all(o) == merge_all(shuffled)
    assert [r.plot_id for r in merge_all(shuffled)] == list(range(5))


def test_flags_carry_side():
    r = merge_sides([obs(1, "left", 5, {"low-coverage"}), obs(1, "right", 5)])
    assert r.flags == ("left:low-coverage",)


def test_counts_csv_round_trip(tmp_path):
    results = merge_all([obs(3, "left", 0.1 + 0.2, {"empty-frames"}), obs(3, "right", 7), obs(1, "right", 2)])
    write_counts_csv(results, tmp_path / "counts.csv")
    text = (tmp_path / "counts.csv").read_text()
    assert text.splitlines()[0] == "plot_id,count_left,count_right,combined_count,n_sides,flags"
    assert read_counts_csv(tmp_path / "counts.csv") == results


def test_counts_csv_errors(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("plot,count\n")
    with pytest.raises(ParseError):
        read_counts_csv(p)
    p.write_text("plot_id,count_left,count_right,combined_count,n_sides,flags\n1,x,,1,1,\n")
    with pytest.raises(ParseError) as info:
        read_counts_csv(p)
    assert info.value.line == 2


def test_value_csv(tmp_path):
    p = tmp_path / "y.csv"
    p.write_text("plot_id,yield_g\n1,2.5\n2,\n3,4\n")
    assert read_value_csv(p, "yield_g") == {1: 2.5, 3: 4.0}
    p.write_text("plot_id,yield_g\n1,abc\n")
    with pytest.raises(ParseError):
        read_value_csv(p, "yield_g")
    with pytest.raises(ParseError):
        read_value_csv(p, "manual_count")


def test_fit_calibration():
    assert fit_calibration([10, 20, 30], [12, 24, 36]) == pytest.approx(1.2)
    with pytest.raises(ValidationError):
        fit_calibration([0, 0], [1, 2])


def test_join_truth():
    r = join_truth(merge_all([obs(1, "left", 3), obs(2, "left", 4)]), {1: 9.0}, {2: 4})
    assert (r[0].yield_g, r[0].manual_count, r[1].yield_g, r[1].manual_count) == (9.0, None, None, 4)
