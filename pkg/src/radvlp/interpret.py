"""Prompt-conditioned Grad-CAM on the vision encoder and PNG overlay export."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from matplotlib import colormaps
from PIL import Image


@dataclass
class Heatmap:
    data: np.ndarray
    prompt: str
    score: float


def gradcam_from_features(fm: torch.Tensor, score: torch.Tensor, out_shape) -> np.ndarray:
    """ReLU(sum_k alpha_k A^k) with alpha_k the spatial mean of dS/dA^k,
    trilinearly upsampled to ``out_shape``. ``fm`` is (1, C, ...) and must be
    part of the graph that produced ``score``."""
    (grads,) = torch.autograd.grad(score, fm, retain_graph=False)
    alpha = grads[0].flatten(1).mean(dim=1)  # divide by Z = number of positions
    cam = F.relu(torch.einsum("k,k...->...", alpha, fm[0]))
    up = F.interpolate(cam[None, None], size=tuple(out_shape), mode="trilinear", align_corners=False)
    return up[0, 0].detach().double().numpy()


def gradcam(volume, prompt: str, model, stage: int = -1) -> Heatmap:
    """Heatmap for similarity sim(f_I(volume), f_T(prompt)) at the output of
    vision stage ``stage`` (default: last)."""
    if not prompt.strip() or len(model.tokenizer.encode(prompt)) < 2:
        raise ValueError("prompt tokenizes to an empty body")
    data = volume.data if hasattr(volume, "data") else volume
    x = torch.as_tensor(np.asarray(data), dtype=torch.float32)[None]
    model.eval()
    with torch.no_grad():
        t = model.encode_text([prompt])[0]
    n_stages = len(model.vision.stages)
    if not -n_stages <= stage < n_stages:
        raise IndexError(f"stage {stage} out of range for {n_stages} stages")
    with torch.enable_grad():
        # stage_outputs runs every stage, so the last feature map depends on the target one
        outs = model.vision.stage_outputs(x)
        score = (model.vision.embed(outs[-1])[0] * t).sum()
        cam = gradcam_from_features(outs[stage], score, x.shape[-3:])
    return Heatmap(cam, prompt, float(score.detach()))


def _normalize_for_display(heat: np.ndarray, quantile: float) -> np.ndarray:
    hi = np.quantile(heat, quantile) if heat.size else 0.0
    if hi <= 0:
        hi = heat.max()
    if hi <= 0:
        return np.zeros_like(heat)
    return np.clip(heat / hi, 0.0, 1.0)


def overlay_export(
    heatmap: Heatmap | np.ndarray,
    volume,
    path,
    quantile: float = 0.99,
    alpha: float = 0.5,
    cmap: str = "jet",
    columns: int | None = None,
) -> Path:
    """Per-slice montage (slices along the last axis) with the heatmap alpha-blended.

    The grey level comes from the volume (assumed in [-1, 1]); blending weight
    is proportional to the clipped, max-normalized heatmap, so a zero heatmap
    yields a pure grayscale image.
    """
    heat = heatmap.data if isinstance(heatmap, Heatmap) else np.asarray(heatmap)
    vol = np.asarray(volume.data if hasattr(volume, "data") else volume, dtype=np.float64)
    if heat.shape != vol.shape:
        raise ValueError(f"heatmap {heat.shape} and volume {vol.shape} differ in shape")
    grey = np.clip((vol + 1.0) / 2.0, 0.0, 1.0)
    h = _normalize_for_display(heat, quantile)
    colours = colormaps[cmap](h)[..., :3]
    w = (alpha * h)[..., None]
    rgb = (1.0 - w) * grey[..., None] + w * colours
    n = vol.shape[2]
    cols = columns or int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    H, W = vol.shape[:2]
    canvas = np.zeros((rows * H, cols * W, 3))
    for k in range(n):
        r, c = divmod(k, cols)
        canvas[r * H : (r + 1) * H, c * W : (c + 1) * W] = rgb[:, :, k]
    path = Path(path)
    Image.fromarray(np.round(canvas * 255).astype(np.uint8)).save(path)
    return path


def top_fraction_mask(heat: np.ndarray, fraction: float = 0.1) -> np.ndarray:
    """Voxels in the top ``fraction`` of heatmap values (ties broken by index)."""
    flat = heat.ravel()
    k = max(1, int(round(fraction * flat.size)))
    order = np.argsort(-flat, kind="stable")
    out = np.zeros(flat.size, dtype=bool)
    out[order[:k]] = True
    return out.reshape(heat.shape)


def iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.logical_or(a, b).sum()
    return float(np.logical_and(a, b).sum() / union) if union else 0.0
