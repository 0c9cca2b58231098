from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from conftest import disk, square
from sdt.geometry import boundary_mask
from sdt.raster import BACKGROUND, EnergyMap, LabelMap, RasterError
from sdt.representations import (
    QuantizedMap,
    QuantParams,
    SdtParams,
    boundary_energy,
    dequantize,
    dt_distances,
    encode_boundary,
    encode_dt,
    encode_sdt,
    encode_ss,
    quantize,
    quantize_value,
    read_scales,
    sdt_ingredients,
    write_scales,
)
from sdt.synth import SceneSpec, generate


def _chain_violations(labels: LabelMap, energy: EnergyMap, params=SdtParams()) -> int:
    ing = sdt_ingredients(labels, params)
    v = energy.values
    fg = labels.labels > 0
    gb, gs = ing.boundary, ing.skeleton
    bad = 0
    bad += int((v[gs & ~gb] != 1.0).sum())
    bad += int((v[gb] != 0.0).sum())
    inner = fg & ~gb & ~gs
    bad += int(((v[inner] <= 0.0) | (v[inner] >= 1.0)).sum())
    bad += int((v[~fg] != BACKGROUND).sum())
    return bad


# -- params --------------------------------------------------------------------------


@pytest.mark.parametrize("kw", [{"alpha": 0}, {"alpha": -1}, {"epsilon": 0}, {"sigma": -1}, {"level": 1.0}])
def test_sdt_params_validated(kw):
    with pytest.raises(ValueError):
        SdtParams(**kw)


@pytest.mark.parametrize("k", [0, -3, 2.5])
def test_quant_params_validated(k):
    with pytest.raises(ValueError):
        QuantParams(k)


# -- SDT -----------------------------------------------------------------------------


def test_energy_chain_on_square_and_disk():
    for a in (square(20, 20, 3, 4, 11), disk(8).astype(np.int64)):
        lab = LabelMap(a)
        assert _chain_violations(lab, encode_sdt(lab)) == 0


def test_skeleton_pixels_are_exactly_one():
    lab = LabelMap(square(21, 21, 5, 5, 11))
    e = encode_sdt(lab).values
    assert e[10, 10] == 1.0


def test_ratio_two_two():
    # a pixel with d_b = d_s = 2 gets 0.5 ** alpha
    a = np.zeros((13, 13), np.int64)
    a[2:11, 2:11] = 1  # 9x9 square, centre (6,6) is the skeleton
    e = encode_sdt(LabelMap(a), SdtParams(alpha=0.8)).values
    # (6, 4): boundary column 2 is 2 away, skeleton pixel (6,6) is 2 away
    assert e[6, 4] == pytest.approx(0.5 ** 0.8, abs=1e-7)
    assert e[6, 4] == pytest.approx(0.57435, abs=1e-5)


def test_one_pixel_wide_part_is_zero():
    # a 1-pixel line is boundary and skeleton at once, so it gets energy 0
    a = np.zeros((5, 12), np.int64)
    a[2, 1:11] = 1
    lab = LabelMap(a)
    ing = sdt_ingredients(lab)
    both = ing.boundary & ing.skeleton
    assert both.sum() == 10
    assert (encode_sdt(lab).values[both] == 0.0).all()


def test_full_grid_instance_is_degenerate(caplog):
    e = encode_sdt(LabelMap(np.ones((6, 6), np.int64)))
    assert (e.values == 1.0).all()
    assert e.meta["degenerate"] == [1]
    assert "no boundary" in caplog.text


def test_alpha_monotone_at_fixed_pixel():
    lab = LabelMap(square(21, 21, 5, 5, 11))
    lo = encode_sdt(lab, SdtParams(alpha=0.5)).values
    hi = encode_sdt(lab, SdtParams(alpha=1.5)).values
    inner = (lo > 0) & (lo < 1)
    assert inner.any()
    assert (lo[inner] > hi[inner]).all()


def test_sdt_energy_is_local():
    a = np.zeros((40, 60), np.int64)
    a[5:20, 5:20] = 1
    a[25:35, 40:55] = 2
    b = a.copy()
    b[25:35, 40:55] = 0
    b[22:38, 35:58] = 2  # reshape the far instance
    ea, eb = encode_sdt(LabelMap(a)).values, encode_sdt(LabelMap(b)).values
    assert np.array_equal(ea[a == 1], eb[a == 1])


@pytest.mark.parametrize("side", [9, 11, 15])
@pytest.mark.parametrize("op", [lambda x: np.rot90(x), np.flipud, np.fliplr, np.transpose])
def test_sdt_equivariant_on_odd_squares(side, op):
    a = square(side + 8, side + 8, 4, 4, side)
    e = encode_sdt(LabelMap(a)).values
    e2 = encode_sdt(LabelMap(np.ascontiguousarray(op(a)))).values
    assert np.array_equal(op(e), e2)


def test_boundary_and_distances_equivariant_on_suite(suite_maps):
    for lab in suite_maps[:30]:
        a = lab.labels
        rot = LabelMap(np.rot90(a).copy())
        assert np.array_equal(np.rot90(boundary_mask(lab)), boundary_mask(rot))
        d, d2 = dt_distances(lab).values, dt_distances(rot).values
        assert np.array_equal(np.rot90(d), d2, equal_nan=True)


def test_empty_skeleton_is_an_error(monkeypatch):
    import sdt.representations as rep
    from sdt.raster import PixelSet

    monkeypatch.setattr(rep, "local_skeleton", lambda labels, i, s, l: PixelSet([], labels.shape))
    with pytest.raises(rep.EncodeError, match="instance 3"):
        encode_sdt(LabelMap(np.full((4, 4), 3, np.int64)))


def test_energy_chain_on_generated_scenes(suite_maps):
    for lab in suite_maps[::7]:
        assert _chain_violations(lab, encode_sdt(lab)) == 0


# -- DT ------------------------------------------------------------------------------


def test_dt_boundary_zero_and_centre_one():
    lab = LabelMap(square(15, 15, 2, 2, 11))
    e = encode_dt(lab).values
    assert (e[boundary_mask(lab)] == 0).all()
    assert e[7, 7] == 1.0
    assert encode_dt(lab).meta["normalized"] is True


def test_dt_unnormalized_matches_brute_force():
    lab = LabelMap(square(15, 15, 2, 2, 11))
    raw = encode_dt(lab, normalize=False).values
    ref = oracles.brute_distance(boundary_mask(lab))
    fg = lab.labels > 0
    assert np.abs(raw[fg] - ref[fg]).max() <= 1e-12
    assert np.isnan(raw[~fg]).all()


def test_dumbbell_neck_dt_low_sdt_one():
    lab = generate(SceneSpec(60, 60, "dumbbell", 1, 0, seed=1, neck_width=3, bulb_width=11))
    dt = encode_dt(lab).values
    sdt = encode_sdt(lab).values
    ing = sdt_ingredients(lab)
    # neck midline: skeleton pixels whose distance to the boundary is 1
    raw = encode_dt(lab, normalize=False).values
    neck = ing.skeleton & (np.nan_to_num(raw) == 1.0)
    assert neck.sum() >= 3
    assert (dt[neck] < 0.3).all()
    assert (sdt[neck] == 1.0).all()


# -- boundary map --------------------------------------------------------------------


def test_boundary_map_cases():
    a = np.zeros((3, 3), np.int64)
    a[1, 1] = 1
    assert encode_boundary(LabelMap(a)).bits[1, 1]

    a = square(7, 7, 1, 1, 5)
    b = encode_boundary(LabelMap(a))
    assert b.count() == 16 and ((a > 0) & ~b.bits).sum() == 9

    t = np.zeros((6, 8), np.int64)
    t[1:5, 1:4] = 1
    t[1:5, 4:7] = 2
    b = encode_boundary(LabelMap(t)).bits
    assert b[1:5, 3].all() and b[1:5, 4].all()


def test_boundary_energy_convention():
    lab = LabelMap(square(7, 7, 1, 1, 5))
    e = boundary_energy(lab).values
    assert set(np.unique(e)) == {-1.0, 0.0, 1.0}
    assert np.array_equal(e == 0.0, encode_boundary(lab).bits)


# -- SS ------------------------------------------------------------------------------


def test_ss_bar_scales_zero():
    a = np.zeros((5, 12), np.int64)
    a[2, 1:11] = 1
    ss = encode_ss(LabelMap(a))
    assert len(ss.skeleton) == 10 and (ss.scales == 0).all()


def test_ss_disk_centre_scale():
    r = 8
    d = disk(r)
    ss = encode_ss(LabelMap(d.astype(np.int64)))
    c = d.shape[0] // 2
    assert (c, c) in ss.skeleton
    i = [tuple(p) for p in ss.skeleton.coords].index((c, c))
    ref = oracles.brute_distance(boundary_mask(LabelMap(d.astype(np.int64))))[c, c]
    assert ss.scales[i] == ref
    assert r - 1.5 <= ss.scales[i] <= r


def test_ss_scales_bounded(suite_maps):
    for lab in suite_maps[::9]:
        ss = encode_ss(lab)
        assert (ss.scales >= 0).all()
        for (r, c), s in zip(ss.skeleton, ss.scales):
            rr, cc = np.nonzero(lab.labels == lab.labels[r, c])
            half = 0.5 * max(rr.max() - rr.min(), cc.max() - cc.min()) + 1
            assert s <= half


def test_ss_file_round_trip(tmp_path, suite_maps):
    ss = encode_ss(suite_maps[3])
    write_scales(ss, tmp_path / "s")
    back = read_scales(tmp_path / "s")
    assert back.skeleton == ss.skeleton
    assert np.array_equal(back.scales, ss.scales.astype(np.float32))


# -- quantization --------------------------------------------------------------------


@pytest.mark.parametrize("e,k,c", [(0.0, 10, 1), (1.0, 10, 10), (0.75, 10, 8), (0.1, 10, 2), (0.0999, 10, 1)])
def test_quantize_value(e, k, c):
    assert quantize_value(e, k) == c


def test_quantize_map_and_background():
    e = EnergyMap(np.array([[-1.0, 0.0, 0.75, 1.0]]))
    q = quantize(e, QuantParams(10))
    assert q.classes.tolist() == [[0, 1, 8, 10]]


def test_dequantize_midpoints():
    q = QuantizedMap(np.array([[0, 1, 10]]), 10)
    d = dequantize(q).values
    assert d[0, 0] == BACKGROUND
    assert d[0, 1] == np.float32(0.05) and d[0, 2] == np.float32(0.95)


def test_dequantize_rejects_class_above_k():
    with pytest.raises(ValueError):
        dequantize(QuantizedMap(np.array([[5]]), 5), QuantParams(4))
    with pytest.raises(RasterError):
        QuantizedMap(np.array([[11]]), 10)


@given(st.floats(0.0, 1.0), st.integers(1, 64))
def test_quantization_error_bound_exact(e, k):
    c = quantize_value(e, k)
    mid = Fraction(2 * c - 1, 2 * k)
    assert abs(mid - Fraction(e)) <= Fraction(1, 2 * k)


@given(st.lists(st.floats(0.0, 1.0, width=32), min_size=1, max_size=30), st.integers(1, 20))
def test_quantize_dequantize_quantize_stable(vals, k):
    e = EnergyMap(np.array([vals], np.float32))
    p = QuantParams(k)
    q = quantize(e, p)
    assert quantize(dequantize(q, p), p) == q
