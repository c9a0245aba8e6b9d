import numpy as np
import pytest
import torch
from PIL import Image

from radvlp.interpret import Heatmap, gradcam, gradcam_from_features, iou, overlay_export, top_fraction_mask


def test_toy_alpha_is_weight_over_positions():
    # S = sum_k w_k * mean(A^k)  =>  dS/dA^k_ij = w_k / Z  and  alpha_k = w_k / Z
    g = torch.Generator().manual_seed(0)
    fm = torch.rand(1, 3, 2, 2, 2, generator=g, dtype=torch.float64, requires_grad=True)
    w = torch.tensor([0.5, -2.0, 1.5], dtype=torch.float64)
    score = (fm[0].flatten(1).mean(1) * w).sum()
    cam = gradcam_from_features(fm, score, (2, 2, 2))
    z = 8
    expected = np.maximum(np.einsum("k,kxyz->xyz", w.numpy() / z, fm[0].detach().numpy()), 0)
    assert np.allclose(cam, expected, atol=1e-12)


def test_cam_upsamples_to_input_shape():
    fm = torch.rand(1, 2, 2, 2, 1, dtype=torch.float64, requires_grad=True)
    cam = gradcam_from_features(fm, fm.sum(), (8, 8, 4))
    assert cam.shape == (8, 8, 4) and cam.min() >= 0
    # constant positive alpha on a constant map gives a constant heatmap
    fm2 = torch.ones(1, 2, 2, 2, 1, dtype=torch.float64, requires_grad=True)
    assert np.allclose(gradcam_from_features(fm2, fm2.sum(), (4, 4, 2)), 2.0)


def test_gradcam_contracts_on_model(tiny_data, tiny_model):
    for i in range(5):
        vol = tiny_data.center_volume(i)
        h = gradcam(vol, "There is emphysema.", tiny_model)
        assert isinstance(h, Heatmap) and h.data.shape == vol.shape
        assert np.all(h.data >= 0) and np.isfinite(h.score)
    for stage in (0, -2):
        assert gradcam(vol, "There is emphysema.", tiny_model, stage=stage).data.shape == vol.shape


def test_gradcam_rejects_empty_prompt_and_bad_stage(tiny_data, tiny_model):
    vol = tiny_data.center_volume(0)
    for prompt in ("", "   "):
        with pytest.raises(ValueError):
            gradcam(vol, prompt, tiny_model)
    with pytest.raises(IndexError):
        gradcam(vol, "There is emphysema.", tiny_model, stage=5)


def test_overlay_of_zero_heatmap_is_grey(tmp_path, rng):
    vol = rng.uniform(-1, 1, size=(6, 5, 4))
    path = overlay_export(np.zeros_like(vol), vol, tmp_path / "o.png", columns=2)
    img = np.asarray(Image.open(path))
    assert img.shape == (12, 10, 3)
    assert np.array_equal(img[..., 0], img[..., 1]) and np.array_equal(img[..., 1], img[..., 2])
    expected = np.round((vol[:, :, 0] + 1) / 2 * 255).astype(np.uint8)
    assert np.array_equal(img[:6, :5, 0], expected)


def test_overlay_colours_hot_regions(tmp_path):
    vol = np.zeros((4, 4, 1))
    heat = np.zeros((4, 4, 1))
    heat[0, 0, 0] = 1.0
    img = np.asarray(Image.open(overlay_export(heat, vol, tmp_path / "o.png", quantile=1.0)))
    assert not (img[0, 0, 0] == img[0, 0, 1] == img[0, 0, 2])
    assert img[3, 3, 0] == img[3, 3, 1] == img[3, 3, 2]


def test_overlay_shape_mismatch(tmp_path):
    with pytest.raises(ValueError):
        overlay_export(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)), tmp_path / "x.png")


def test_top_fraction_and_iou():
    heat = np.arange(20, dtype=float).reshape(2, 5, 2)
    m = top_fraction_mask(heat, 0.1)
    assert m.sum() == 2 and m.ravel()[-2:].all()
    assert top_fraction_mask(np.zeros(10), 0.3).ravel().tolist() == [True] * 3 + [False] * 7
    a = np.array([1, 1, 0, 0], bool)
    b = np.array([0, 1, 1, 0], bool)
    assert iou(a, b) == pytest.approx(1 / 3) and iou(a, a) == 1.0 and iou(~a & a, ~a & a) == 0.0
