"""Volumes with physical spacing, and their on-disk binary format.

File layout (little endian)::

    0   4s   magic b"RVOL"
    4   u16  format version
    6   u8   dtype code (0 float32, 1 uint8)
    7   u8   intensity domain code
    8   3u32 dims (H, W, D)
    20  3f32 spacing in mm (x, y, z)
    32  ...  C-order voxel data
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"RVOL"
VERSION = 1
_HEADER = struct.Struct("<4sHBB3I3f")
assert _HEADER.size == 32

DOMAINS = ("raw_hu", "normalized", "zscored", "label")
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("u1")}


@dataclass
class VolumeTensor:
    data: np.ndarray
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 1.0)
    intensity_domain: str = "raw_hu"

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or min(self.data.shape) < 1:
            raise ValueError(f"volume must be 3D with all dims >= 1, got shape {self.data.shape}")
        self.spacing_mm = tuple(float(s) for s in self.spacing_mm)
        if len(self.spacing_mm) != 3 or min(self.spacing_mm) <= 0:
            raise ValueError(f"spacing must be three positive values, got {self.spacing_mm}")
        if self.intensity_domain not in DOMAINS:
            raise ValueError(f"unknown intensity domain {self.intensity_domain!r}")

    @property
    def shape(self):
        return self.data.shape

    def replace(self, data=None, spacing_mm=None, intensity_domain=None) -> "VolumeTensor":
        return VolumeTensor(
            self.data if data is None else data,
            self.spacing_mm if spacing_mm is None else spacing_mm,
            self.intensity_domain if intensity_domain is None else intensity_domain,
        )


def save_volume(vol: VolumeTensor, path) -> None:
    code = 1 if vol.intensity_domain == "label" else 0
    data = np.ascontiguousarray(vol.data, dtype=_DTYPES[code])
    header = _HEADER.pack(
        MAGIC, VERSION, code, DOMAINS.index(vol.intensity_domain), *data.shape, *vol.spacing_mm
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_header(path) -> tuple[tuple[int, int, int], tuple[float, float, float], str, int]:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, code, domain, h, w, d, sx, sy, sz = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if code not in _DTYPES or domain >= len(DOMAINS):
        raise ValueError(f"{path}: corrupt header")
    return (h, w, d), (sx, sy, sz), DOMAINS[domain], code


def load_volume(path) -> VolumeTensor:
    shape, spacing, domain, code = read_header(path)
    dtype = _DTYPES[code]
    data = np.fromfile(Path(path), dtype=dtype, offset=_HEADER.size)
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {np.prod(shape)} voxels, found {data.size}")
    data = data.reshape(shape)
    if code == 0:
        data = data.astype(np.float32)
    return VolumeTensor(data, spacing, domain)
