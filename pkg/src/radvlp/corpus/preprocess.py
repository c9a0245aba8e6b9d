"""Volume preprocessing: resampling, HU windowing, canvas/crop, Otsu + z-score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import VolumeTensor

PAD_VALUE = -1.0  # air after windowing to [-1, 1]


@dataclass(frozen=True)
class PreprocessSpec:
    name: str
    target_spacing_mm: tuple[float, float, float] | None
    clip_lo: float | None
    clip_hi: float | None
    canvas: tuple[int, int, int]
    train_crop: tuple[int, int, int]
    mode: str = "ct_window"
    min_slices: int | None = None
    bbox_margin: int = 5

    def __post_init__(self):
        if self.mode not in ("ct_window", "mri_zscore"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "ct_window" and not (self.clip_lo < self.clip_hi):
            raise ValueError("clip_lo must be below clip_hi")
        if any(c > v for c, v in zip(self.train_crop, self.canvas)):
            raise ValueError("train_crop must fit inside canvas")

    @property
    def eval_crop(self):
        return self.train_crop


PRESETS = {
    "chest": PreprocessSpec("chest", (1.5, 1.5, 3.0), -1000.0, 200.0, (240, 240, 120), (192, 192, 96)),
    "abdomen": PreprocessSpec("abdomen", (1.5, 1.5, 3.0), -1000.0, 1000.0, (280, 280, 180), (224, 224, 144)),
    "abd-5mm": PreprocessSpec(
        "abd-5mm", (1.5, 1.5, 5.0), -1000.0, 1000.0, (280, 280, 180), (224, 224, 144), min_slices=50
    ),
    # MRI is resampled to the PD sequence's own spacing, so no fixed target.
    "mri": PreprocessSpec("mri", None, None, None, (240, 240, 24), (192, 192, 20), mode="mri_zscore"),
    "desk": PreprocessSpec("desk", (3.0, 3.0, 6.0), -1000.0, 200.0, (48, 48, 24), (32, 32, 16)),
}


def get_preset(name: str) -> PreprocessSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def _interp_axis(data: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    n = data.shape[axis]
    coords = np.clip(coords, 0.0, n - 1)
    lo = np.floor(coords).astype(np.int64)
    hi = np.minimum(lo + 1, n - 1)
    w = coords - lo
    shape = [1] * data.ndim
    shape[axis] = -1
    w = w.reshape(shape)
    return (1.0 - w) * np.take(data, lo, axis=axis) + w * np.take(data, hi, axis=axis)


def _nearest_axis(data: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    idx = np.clip(np.floor(coords + 0.5).astype(np.int64), 0, data.shape[axis] - 1)
    return np.take(data, idx, axis=axis)


def resample_to_shape(data: np.ndarray, out_shape, scale=None, order: int = 1) -> np.ndarray:
    """Separable linear (order=1) or nearest (order=0) resampling.

    Output index ``j`` samples input coordinate ``j * scale`` along each axis
    (voxel-corner grids aligned at the origin); coordinates past the last
    voxel clamp to the edge.
    """
    out = np.asarray(data, dtype=np.float64 if order == 1 else data.dtype)
    if scale is None:
        scale = [
            (n_in - 1) / (n_out - 1) if n_out > 1 else 0.0
            for n_in, n_out in zip(data.shape, out_shape)
        ]
    fn = _interp_axis if order == 1 else _nearest_axis
    for axis, (n_out, s) in enumerate(zip(out_shape, scale)):
        out = fn(out, np.arange(n_out, dtype=np.float64) * s, axis)
    return out


def resample(volume: VolumeTensor, target_spacing_mm, order: int = 1) -> VolumeTensor:
    target = tuple(float(t) for t in target_spacing_mm)
    if len(target) != 3 or min(target) <= 0:
        raise ValueError(f"target spacing must be three positive values, got {target_spacing_mm}")
    if not np.all(np.isfinite(volume.data)):
        raise ValueError("volume contains non-finite values")
    if target == volume.spacing_mm:
        return volume.replace(data=volume.data.copy())
    out_shape = [
        max(1, int(round(n * s / t))) for n, s, t in zip(volume.shape, volume.spacing_mm, target)
    ]
    scale = [t / s for s, t in zip(volume.spacing_mm, target)]
    data = resample_to_shape(volume.data, out_shape, scale, order=order)
    if order == 1:
        data = data.astype(np.float32)
    return volume.replace(data=data, spacing_mm=target)


def resample_mask(mask: np.ndarray, spacing_mm, target_spacing_mm) -> np.ndarray:
    vol = VolumeTensor(mask, spacing_mm, "label")
    return resample(vol, target_spacing_mm, order=0).data


def window_normalize(volume: VolumeTensor, lo: float, hi: float) -> VolumeTensor:
    if not lo < hi:
        raise ValueError("lo must be below hi")
    v = np.clip(volume.data.astype(np.float64), lo, hi)
    out = 2.0 * (v - lo) / (hi - lo) - 1.0
    return volume.replace(data=out.astype(np.float32), intensity_domain="normalized")


def _pad_crop_array(data: np.ndarray, canvas, fill) -> np.ndarray:
    out = data
    for axis, target in enumerate(canvas):
        n = out.shape[axis]
        if n < target:
            before = (target - n) // 2
            width = [(0, 0)] * out.ndim
            width[axis] = (before, target - n - before)
            out = np.pad(out, width, mode="constant", constant_values=fill)
        elif n > target:
            start = (n - target) // 2
            out = np.take(out, np.arange(start, start + target), axis=axis)
    return out


def pad_or_crop(volume: VolumeTensor, canvas, fill: float = PAD_VALUE) -> VolumeTensor:
    return volume.replace(data=_pad_crop_array(volume.data, canvas, fill))


def pad_or_crop_mask(mask: np.ndarray, canvas) -> np.ndarray:
    return _pad_crop_array(mask, canvas, 0)


def center_offsets(shape, size) -> tuple[int, ...]:
    if any(s > n for s, n in zip(size, shape)):
        raise ValueError(f"crop {tuple(size)} larger than volume {tuple(shape)}")
    return tuple((n - s) // 2 for n, s in zip(shape, size))


def random_offsets(shape, size, rng: np.random.Generator) -> tuple[int, ...]:
    if any(s > n for s, n in zip(size, shape)):
        raise ValueError(f"crop {tuple(size)} larger than volume {tuple(shape)}")
    return tuple(int(rng.integers(0, n - s + 1)) for n, s in zip(shape, size))


def crop_at(data: np.ndarray, offsets, size) -> np.ndarray:
    sl = tuple(slice(o, o + s) for o, s in zip(offsets, size))
    return data[(...,) + sl] if data.ndim > 3 else data[sl]


def center_crop(volume: VolumeTensor, size) -> VolumeTensor:
    return volume.replace(data=crop_at(volume.data, center_offsets(volume.shape, size), size).copy())


def random_crop(volume: VolumeTensor, size, rng: np.random.Generator) -> VolumeTensor:
    off = random_offsets(volume.shape, size, rng)
    return volume.replace(data=crop_at(volume.data, off, size).copy())


def otsu_threshold(data: np.ndarray, bins: int = 256) -> float:
    """Threshold maximizing between-class variance over a ``bins``-bin histogram.

    Voxels ``>= threshold`` are foreground. Class means use the actual voxel
    sums per bin rather than bin centres.
    """
    v = np.asarray(data, dtype=np.float64).ravel()
    vmin, vmax = v.min(), v.max()
    if vmin == vmax:
        raise ValueError("Otsu threshold undefined for a constant volume")
    edges = np.linspace(vmin, vmax, bins + 1)
    idx = np.clip(np.searchsorted(edges, v, side="right") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    sums = np.bincount(idx, weights=v, minlength=bins)
    n0 = np.cumsum(counts)[:-1]  # class 0 = bins [0, k)
    s0 = np.cumsum(sums)[:-1]
    n1 = v.size - n0
    s1 = sums.sum() - s0
    valid = (n0 > 0) & (n1 > 0)
    mu0 = np.divide(s0, n0, out=np.zeros_like(s0), where=valid)
    mu1 = np.divide(s1, n1, out=np.zeros_like(s1), where=valid)
    between = np.where(valid, n0 * n1 * (mu0 - mu1) ** 2, -1.0)
    k = int(np.argmax(between)) + 1
    return float(edges[k])


def otsu_foreground(volume: VolumeTensor) -> np.ndarray:
    return volume.data >= otsu_threshold(volume.data)


def zscore_foreground(volume: VolumeTensor, mask: np.ndarray) -> VolumeTensor:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != volume.shape:
        raise ValueError("mask shape differs from volume shape")
    if not mask.any():
        raise ValueError("empty foreground mask")
    fg = volume.data[mask].astype(np.float64)
    std = max(fg.std(), 1e-6)
    out = (volume.data.astype(np.float64) - fg.mean()) / std
    return volume.replace(data=out.astype(np.float32), intensity_domain="zscored")


def bbox_slices(mask: np.ndarray, margin: int) -> tuple[slice, ...]:
    idx = np.argwhere(mask)
    if idx.size == 0:
        return tuple(slice(0, n) for n in mask.shape)
    lo = np.maximum(idx.min(axis=0) - margin, 0)
    hi = np.minimum(idx.max(axis=0) + 1 + margin, mask.shape)
    return tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))


def resize(volume: VolumeTensor, shape) -> VolumeTensor:
    data = resample_to_shape(volume.data, shape).astype(np.float32)
    spacing = tuple(s * n / m for s, n, m in zip(volume.spacing_mm, volume.shape, shape))
    return volume.replace(data=data, spacing_mm=spacing)


def preprocess_ct(volume: VolumeTensor, spec: PreprocessSpec) -> VolumeTensor:
    """Resample, window to [-1, 1], then pad/crop to the canvas."""
    vol = resample(volume, spec.target_spacing_mm)
    vol = window_normalize(vol, spec.clip_lo, spec.clip_hi)
    return pad_or_crop(vol, spec.canvas)


def preprocess_mri(volume: VolumeTensor, spec: PreprocessSpec) -> VolumeTensor:
    """Otsu bounding-box crop, foreground z-score, pad in-plane to square, resize."""
    fg = otsu_foreground(volume)
    sl = bbox_slices(fg, spec.bbox_margin)
    vol = zscore_foreground(volume.replace(data=volume.data[sl].copy()), fg[sl])
    side = max(vol.shape[0], vol.shape[1])
    fill = float(vol.data.min())
    vol = vol.replace(data=_pad_crop_array(vol.data, (side, side, vol.shape[2]), fill))
    return resize(vol, spec.canvas)


def preprocess(volume: VolumeTensor, spec: PreprocessSpec) -> VolumeTensor:
    if spec.mode == "mri_zscore":
        return preprocess_mri(volume, spec)
    return preprocess_ct(volume, spec)
