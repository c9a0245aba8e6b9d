"""Shared diagnostic classifier and the coarse segmentation decoder."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


def shared_classifier(e: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Affine map from embedding space to per-category logits."""
    if e.shape[-1] != weight.shape[1]:
        raise ValueError(f"embedding dim {e.shape[-1]} != classifier input dim {weight.shape[1]}")
    return F.linear(e, weight, bias)


class SegDecoder(nn.Module):
    """Transposed-convolution decoder from the last feature map to per-voxel class logits."""

    def __init__(self, in_channels: int, n_classes: int, total_stride: int, width: int = 16):
        super().__init__()
        n_up = int(round(math.log2(total_stride)))
        layers, c = [], in_channels
        for _ in range(n_up):
            c_out = max(width, c // 2)
            layers += [nn.ConvTranspose3d(c, c_out, kernel_size=2, stride=2), nn.ReLU()]
            c = c_out
        self.up = nn.Sequential(*layers)
        self.head = nn.Conv3d(c, n_classes, kernel_size=1)
        self.n_classes = n_classes
        nn.init.normal_(self.head.weight, std=1e-2)
        nn.init.zeros_(self.head.bias)

    def forward(self, fm: torch.Tensor, out_shape=None) -> torch.Tensor:
        x = self.up(fm)
        if out_shape is not None and tuple(x.shape[2:]) != tuple(out_shape):
            x = F.interpolate(x, size=tuple(out_shape), mode="trilinear", align_corners=False)
        return self.head(x)
