import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radvlp.corpus.preprocess import (
    PAD_VALUE,
    PRESETS,
    bbox_slices,
    center_crop,
    otsu_threshold,
    pad_or_crop,
    preprocess,
    random_crop,
    resample,
    resample_to_shape,
    window_normalize,
    zscore_foreground,
)
from radvlp.corpus.volume import VolumeTensor

from oracles import otsu_oracle


def vol(data, spacing=(1.0, 1.0, 1.0)):
    return VolumeTensor(np.asarray(data, dtype=np.float32), spacing)


def test_window_endpoints_exact():
    out = window_normalize(vol(np.array([-1000.0, 200.0, -2000.0, 3000.0]).reshape(1, 1, 4)), -1000, 200).data
    assert out.ravel().tolist() == [-1.0, 1.0, -1.0, 1.0]
    assert out.dtype == np.float32


def test_window_formula_midpoints():
    # 2 (v - lo) / (hi - lo) - 1 on the lung window
    out = window_normalize(vol(np.array([-400.0, -520.0, 0.0]).reshape(1, 1, 3)), -1000, 200).data.ravel()
    assert out == pytest.approx([0.0, -0.2, 2 * 1000 / 1200 - 1], abs=1e-7)


@given(st.lists(st.floats(-5000, 5000), min_size=1, max_size=20))
def test_window_range_and_monotone(values):
    v = np.sort(np.asarray(values))
    out = window_normalize(vol(v.reshape(1, 1, -1)), -1000, 200).data.ravel()
    assert out.min() >= -1 and out.max() <= 1
    assert np.all(np.diff(out) >= 0)


def test_window_rejects_inverted_range():
    with pytest.raises(ValueError):
        window_normalize(vol(np.zeros((1, 1, 1))), 10, 10)


@pytest.mark.parametrize("target", [(0.5, 0.7, 1.3), (2.0, 2.0, 3.0), (1.5, 1.5, 3.0)])
def test_resample_preserves_constants(target):
    out = resample(vol(np.full((7, 6, 5), 37.5), (1.0, 1.2, 2.0)), target).data
    assert np.max(np.abs(out - 37.5)) < 1e-6


@pytest.mark.parametrize("target", [(0.5, 1.0, 1.0), (0.75, 2.0, 1.5), (3.0, 0.6, 0.9)])
def test_resample_matches_linear_ramp(target):
    spacing = (1.5, 1.0, 3.0)
    shape = (8, 9, 6)
    a = (0.01, -0.02, 0.03)  # values stay O(1) so float32 storage is within 1e-7
    # f(x) = sum_k a_k * x_k with x in millimetres from the first voxel
    idx = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
    data = sum(a[k] * idx[k] * spacing[k] for k in range(3))
    out = resample(vol(data, spacing), target)
    oidx = np.meshgrid(*[np.arange(n) for n in out.shape], indexing="ij")
    mm = [np.minimum(oidx[k] * target[k], (shape[k] - 1) * spacing[k]) for k in range(3)]  # edge clamp
    expected = sum(a[k] * mm[k] for k in range(3))
    assert out.spacing_mm == target
    assert np.max(np.abs(out.data - expected)) < 1e-6


def test_resample_to_shape_ramp_float64_exact_to_1e6():
    ramp = np.arange(10, dtype=np.float64)[:, None, None] * np.ones((1, 3, 2))
    out = resample_to_shape(ramp, (19, 3, 2))
    assert np.max(np.abs(out[:, 0, 0] - np.arange(19) * 0.5)) < 1e-6


def test_resample_output_shape_and_identity():
    v = vol(np.random.default_rng(0).normal(size=(10, 10, 4)), (1.0, 1.0, 2.5))
    assert resample(v, (2.0, 0.5, 5.0)).shape == (5, 20, 2)
    same = resample(v, v.spacing_mm)
    assert np.array_equal(same.data, v.data) and same.data is not v.data


def test_resample_nearest_keeps_label_values():
    m = np.random.default_rng(0).integers(0, 5, size=(6, 6, 3)).astype(np.uint8)
    out = resample(VolumeTensor(m, (1, 1, 1), "label"), (0.5, 0.5, 0.5), order=0).data
    assert set(np.unique(out)) <= set(np.unique(m)) and out.dtype == np.uint8


def test_resample_rejects_nonfinite():
    d = np.zeros((2, 2, 2))
    d[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        resample(vol(d), (2, 2, 2))


def test_presets_field_for_field():
    chest, abd, abd5, mri = PRESETS["chest"], PRESETS["abdomen"], PRESETS["abd-5mm"], PRESETS["mri"]
    assert (chest.target_spacing_mm, chest.clip_lo, chest.clip_hi) == ((1.5, 1.5, 3.0), -1000, 200)
    assert (chest.canvas, chest.train_crop, chest.eval_crop) == ((240, 240, 120), (192, 192, 96), (192, 192, 96))
    assert (abd.target_spacing_mm, abd.clip_lo, abd.clip_hi) == ((1.5, 1.5, 3.0), -1000, 1000)
    assert (abd.canvas, abd.train_crop, abd.eval_crop) == ((280, 280, 180), (224, 224, 144), (224, 224, 144))
    assert (abd5.target_spacing_mm, abd5.min_slices, abd5.canvas, abd5.train_crop) == (
        (1.5, 1.5, 5.0), 50, (280, 280, 180), (224, 224, 144))
    assert (mri.mode, mri.canvas, mri.train_crop) == ("mri_zscore", (240, 240, 24), (192, 192, 20))
    desk = PRESETS["desk"]
    assert (desk.clip_lo, desk.clip_hi, desk.train_crop) == (-1000, 200, (32, 32, 16))


def test_pad_or_crop_centres_and_fills():
    v = vol(np.ones((2, 5, 3)))
    out = pad_or_crop(v, (4, 3, 3)).data
    assert out.shape == (4, 3, 3)
    assert np.all(out[0] == PAD_VALUE) and np.all(out[3] == PAD_VALUE) and np.all(out[1:3] == 1)


@given(st.tuples(*[st.integers(1, 12)] * 3), st.tuples(*[st.integers(1, 12)] * 3))
def test_pad_or_crop_shape(shape, canvas):
    assert pad_or_crop(vol(np.zeros(shape)), canvas).shape == canvas


def test_crops():
    data = np.arange(6 * 6 * 4, dtype=np.float32).reshape(6, 6, 4)
    c = center_crop(vol(data), (2, 2, 2)).data
    assert np.array_equal(c, data[2:4, 2:4, 1:3])
    r = random_crop(vol(data), (3, 3, 2), np.random.default_rng(0))
    assert r.shape == (3, 3, 2)
    with pytest.raises(ValueError):
        center_crop(vol(data), (7, 1, 1))


def test_otsu_matches_brute_force(rng):
    for _ in range(10):
        data = np.concatenate([rng.normal(0, 1, 300), rng.normal(float(rng.uniform(3, 8)), 1, 200)])
        edges = np.linspace(data.min(), data.max(), 65)
        assert otsu_threshold(data, bins=64) == pytest.approx(otsu_oracle(data, edges))


def test_otsu_rejects_constant():
    with pytest.raises(ValueError):
        otsu_threshold(np.ones(10))


def test_zscore_foreground_statistics(rng):
    data = rng.normal(5, 3, size=(6, 6, 6))
    mask = data > 5
    out = zscore_foreground(vol(data), mask).data
    assert out[mask].mean() == pytest.approx(0, abs=1e-5) and out[mask].std() == pytest.approx(1, abs=1e-5)


def test_bbox_slices_with_margin():
    m = np.zeros((10, 10, 10), dtype=bool)
    m[4:6, 2, 8] = True
    assert bbox_slices(m, 2) == (slice(2, 8), slice(0, 5), slice(6, 10))


def test_preprocess_mri_shape():
    data = np.zeros((30, 30, 10), dtype=np.float32)
    data[5:25, 8:20, 2:8] = 100
    out = preprocess(vol(data), PRESETS["mri"])
    assert out.shape == (240, 240, 24) and out.intensity_domain == "zscored"


def test_preprocess_ct_desk():
    out = preprocess(vol(np.full((40, 40, 20), -1000.0), (3, 3, 6)), PRESETS["desk"])
    assert out.shape == (48, 48, 24) and np.all(out.data == -1.0)
