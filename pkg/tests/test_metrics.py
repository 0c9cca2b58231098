import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import label_grid_pairs, square
from sdt.metrics import (
    CSV_COLUMNS,
    EvalReport,
    Matching,
    aggregate,
    evaluate,
    f1_score,
    match_instances,
    object_dice,
    object_hausdorff,
    split_merge_counts,
    summary_line,
    write_report_csv,
)
from sdt.raster import LabelMap, RasterError


def _two_squares():
    a = np.zeros((20, 20), np.int64)
    a[:, :10] = 1
    a[:, 10:] = 2
    return LabelMap(a)


def _permute(lab: LabelMap, seed: int) -> LabelMap:
    ids = lab.ids
    perm = np.random.default_rng(seed).permutation(len(ids)) + 1
    lut = np.zeros(max(ids, default=0) + 1, np.int64)
    lut[ids] = perm * 7
    return LabelMap(lut[lab.labels])


# -- matching / F1 -------------------------------------------------------------------


def test_identical_maps_all_true_positive():
    gt = _two_squares()
    m = match_instances(gt, gt)
    assert (m.true_pos, m.false_pos, m.false_neg) == (2, 0, 0)
    assert f1_score(m) == 1.0


def test_empty_prediction_all_false_negative():
    gt = _two_squares()
    m = match_instances(LabelMap.empty(20, 20), gt)
    assert (m.true_pos, m.false_pos, m.false_neg) == (0, 0, 2)
    assert f1_score(m) == 0.0


def test_one_blob_over_two_squares():
    # each gt square is 200 px; the 400 px blob gives IoU 200/400 = 0.5, not > 0.5
    gt = _two_squares()
    pred = LabelMap(np.ones((20, 20), np.int64))
    rep = evaluate(pred, gt)
    assert (rep.true_pos, rep.false_pos, rep.false_neg) == (0, 1, 2)
    assert rep.merges == 1 and rep.splits == 0


def test_iou_exactly_threshold_is_not_a_hit():
    gt = LabelMap(square(4, 4, 0, 0, 4))
    half = np.zeros((4, 4), np.int64)
    half[:2] = 1
    assert match_instances(LabelMap(half), gt).true_pos == 0


def test_f1_formula_cases():
    assert f1_score(Matching((), 0, 0)) == 1.0
    m = Matching(((1, 1, 0.9), (2, 2, 0.8)), n_pred=3, n_gt=3)
    assert (m.true_pos, m.false_pos, m.false_neg) == (2, 1, 1)
    assert f1_score(m) == pytest.approx(2 / 3, abs=1e-15)


def test_no_overlap_f1_zero():
    a = np.zeros((10, 10), np.int64)
    b = np.zeros((10, 10), np.int64)
    a[:3, :3] = 1
    b[6:, 6:] = 1
    rep = evaluate(LabelMap(a), LabelMap(b))
    assert rep.f1 == 0.0 and rep.obj_dice == 0.0


def test_dimension_mismatch():
    with pytest.raises(RasterError):
        match_instances(LabelMap.empty(3, 3), LabelMap.empty(3, 4))
    with pytest.raises(RasterError):
        object_dice(LabelMap.empty(3, 3), LabelMap.empty(4, 3))


def test_report_checks_f1_consistency():
    with pytest.raises(ValueError):
        EvalReport(0.9, 1.0, 0.0, 1, 0, 0, 0, 0)


@given(label_grid_pairs(12, 4), st.integers(0, 100))
def test_matching_invariant_under_relabelling(ab, seed):
    a, b = ab
    pa, pb = LabelMap(a), LabelMap(b)
    m = match_instances(pa, pb)
    m2 = match_instances(_permute(pa, seed), _permute(pb, seed + 1))
    assert (m.true_pos, m.false_pos, m.false_neg) == (m2.true_pos, m2.false_pos, m2.false_neg)
    assert len({p for p, _, _ in m.pairs}) == len(m.pairs) == len({g for _, g, _ in m.pairs})


# -- object Dice ---------------------------------------------------------------------


def test_dice_identity_and_half_square():
    gt = np.zeros((6, 6), np.int64)
    gt[2:4, 2:4] = 1
    pred = np.zeros((6, 6), np.int64)
    pred[2:4, 3:5] = 1  # covers 2 gt pixels and 2 background pixels
    assert object_dice(LabelMap(gt), LabelMap(gt)) == 1.0
    assert object_dice(LabelMap(pred), LabelMap(gt)) == 0.5


def test_dice_both_empty_is_flagged():
    rep = evaluate(LabelMap.empty(5, 5), LabelMap.empty(5, 5))
    assert rep.obj_dice == 1.0 and rep.obj_hausdorff == 0.0
    assert "both_empty" in rep.flags and "dice_both_empty" in rep.flags


@given(label_grid_pairs(10, 4))
def test_dice_symmetric_and_matches_oracle(ab):
    a, b = ab
    pa, pb = LabelMap(a), LabelMap(b)
    d = object_dice(pa, pb)
    assert d == pytest.approx(object_dice(pb, pa), abs=1e-12)
    assert d == pytest.approx(oracles.object_dice(a, b), abs=1e-12)
    assert 0.0 <= d <= 1.0


# -- object Hausdorff ----------------------------------------------------------------


def test_hausdorff_identity_zero():
    gt = _two_squares()
    assert object_hausdorff(gt, gt) == 0.0


def test_unit_pixels_offset_three():
    a = np.zeros((8, 8), np.int64)
    b = np.zeros((8, 8), np.int64)
    a[2, 2] = 1
    b[5, 2] = 1
    assert object_hausdorff(LabelMap(a), LabelMap(b)) == 3.0


def test_protrusion_matches_brute_force():
    gt = square(24, 24, 6, 6, 10)
    pred = gt.copy()
    pred[10, 16:21] = 1  # five-pixel spur to the right
    got = object_hausdorff(LabelMap(pred), LabelMap(gt))
    assert got == pytest.approx(oracles.object_hausdorff(pred, gt), abs=1e-9)
    # the spur tip (10, 20) sits 5 px from the nearest gt contour pixel (10, 15)
    assert got == 5.0


def test_empty_opponent_pairs_with_frame():
    gt = square(10, 10, 4, 4, 2)
    flags: list[str] = []
    h = object_hausdorff(LabelMap.empty(10, 10), LabelMap(gt), flags)
    assert "hausdorff_vs_frame" in flags
    assert h == pytest.approx(oracles.object_hausdorff(np.zeros_like(gt), gt), abs=1e-9)
    assert np.isfinite(h)


@given(label_grid_pairs(12, 4))
def test_hausdorff_symmetric_and_matches_oracle(ab):
    a, b = ab
    pa, pb = LabelMap(a), LabelMap(b)
    h = object_hausdorff(pa, pb)
    assert h == pytest.approx(object_hausdorff(pb, pa), abs=1e-12)
    assert abs(h - oracles.object_hausdorff(a, b)) <= 1e-9


# -- split / merge -------------------------------------------------------------------


def test_split_merge_cases():
    gt = _two_squares()
    assert split_merge_counts(gt, gt) == (0, 0)
    assert split_merge_counts(LabelMap(np.ones((20, 20), np.int64)), gt) == (0, 1)
    bar = np.zeros((6, 20), np.int64)
    bar[2:4, 1:19] = 1
    halves = bar.copy()
    halves[2:4, 10:19] = 2
    assert split_merge_counts(LabelMap(halves), LabelMap(bar)) == (1, 0)


def test_sliver_below_floor_ignored():
    gt = np.zeros((10, 20), np.int64)
    gt[:, :10] = 1
    gt[:, 10:] = 2
    pred = np.zeros_like(gt)
    pred[:, :11] = 1  # one column (10% of 100 = 10 px) of instance 2
    pred[:, 11:] = 2
    assert split_merge_counts(LabelMap(pred), LabelMap(gt)) == (1, 1)
    pred[0, 10] = 2  # now only 9 px of instance 2 go to pred 1
    assert split_merge_counts(LabelMap(pred), LabelMap(gt)) == (0, 0)


# -- reports -------------------------------------------------------------------------


def test_identity_report_and_summary_line():
    gt = _two_squares()
    rep = evaluate(gt, gt)
    assert summary_line(rep) == "1.0,1.0,0.0"


def test_aggregate_pools_counts():
    gt = _two_squares()
    a = evaluate(gt, gt)
    b = evaluate(LabelMap.empty(20, 20), gt)
    agg = aggregate([a, b])
    assert (agg.true_pos, agg.false_neg) == (2, 2)
    assert agg.f1 == pytest.approx(2 * 2 / (2 * 2 + 2))
    assert "empty" in aggregate([]).flags


def test_csv_and_metadata(tmp_path):
    gt = _two_squares()
    out = tmp_path / "report.csv"
    write_report_csv([("a", evaluate(gt, gt)), ("b", evaluate(LabelMap.empty(20, 20), gt))], out)
    rows = list(csv.reader(out.open()))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [r[0] for r in rows[1:]] == ["a", "b", "ALL"]
    meta = json.loads(out.with_suffix(".json").read_text())
    assert meta["iou_threshold"] == 0.5 and "hausdorff_unmatched" in meta
