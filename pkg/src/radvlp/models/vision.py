"""3D residual vision encoder with GAP / max / noisy-OR pooling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

POOLINGS = ("gap", "max", "noisy_or")


@dataclass
class VisionEncoderConfig:
    channels_per_stage: list[int] = field(default_factory=lambda: [16, 32])
    blocks_per_stage: list[int] = field(default_factory=lambda: [1, 1])
    stem: str = "lite"
    pooling: str = "gap"
    embed_dim: int = 64
    in_channels: int = 1

    def __post_init__(self):
        if self.stem not in ("standard", "lite"):
            raise ValueError(f"unknown stem {self.stem!r}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if len(self.channels_per_stage) != len(self.blocks_per_stage) or not self.channels_per_stage:
            raise ValueError("channels_per_stage and blocks_per_stage must be equal-length and nonempty")

    @property
    def total_stride(self) -> int:
        return 4 * 2 ** (len(self.channels_per_stage) - 1)

    @classmethod
    def resnet18(cls, **kw):
        return cls(channels_per_stage=[64, 128, 256, 512], blocks_per_stage=[2, 2, 2, 2], stem="standard", **kw)


def pool_features(fm: torch.Tensor, mode: str) -> torch.Tensor:
    """Pool a (B, C, D', H', W') feature map to (B, C)."""
    flat = fm.flatten(2)
    if mode == "gap":
        return flat.mean(dim=2)
    if mode == "max":
        return flat.amax(dim=2)
    if mode == "noisy_or":
        # 1 - prod(1 - sigmoid(f)), with log(1 - sigmoid(f)) = logsigmoid(-f)
        return -torch.expm1(F.logsigmoid(-flat).sum(dim=2))
    raise ValueError(f"unknown pooling {mode!r}")


class BasicBlock3d(nn.Module):
    def __init__(self, c_in, c_out, stride=1):
        super().__init__()
        self.conv1 = nn.Conv3d(c_in, c_out, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm3d(c_out)
        self.conv2 = nn.Conv3d(c_out, c_out, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(c_out)
        self.down = None
        if stride != 1 or c_in != c_out:
            self.down = nn.Sequential(nn.Conv3d(c_in, c_out, 1, stride=stride, bias=False), nn.BatchNorm3d(c_out))

    def forward(self, x):
        identity = x if self.down is None else self.down(x)
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + identity)


class VisionEncoder(nn.Module):
    def __init__(self, cfg: VisionEncoderConfig):
        super().__init__()
        self.cfg = cfg
        c0 = cfg.channels_per_stage[0]
        if cfg.stem == "lite":
            self.stem = nn.Sequential(
                nn.Conv3d(cfg.in_channels, c0, kernel_size=4, stride=4, bias=False),
                nn.BatchNorm3d(c0),
                nn.ReLU(),
            )
        else:
            self.stem = nn.Sequential(
                nn.Conv3d(cfg.in_channels, c0, kernel_size=7, stride=2, padding=3, bias=False),
                nn.BatchNorm3d(c0),
                nn.ReLU(),
                nn.MaxPool3d(kernel_size=3, stride=2, padding=1),
            )
        stages, c_in = [], c0
        for i, (c, n) in enumerate(zip(cfg.channels_per_stage, cfg.blocks_per_stage)):
            blocks = [BasicBlock3d(c_in, c, stride=1 if i == 0 else 2)]
            blocks += [BasicBlock3d(c, c) for _ in range(n - 1)]
            stages.append(nn.Sequential(*blocks))
            c_in = c
        self.stages = nn.ModuleList(stages)
        self.proj = nn.Linear(c_in, cfg.embed_dim)
        self.reset_parameters()

    @property
    def feature_channels(self) -> int:
        return self.cfg.channels_per_stage[-1]

    def reset_parameters(self):
        for m in self.modules():
            if isinstance(m, nn.Conv3d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
            elif isinstance(m, nn.BatchNorm3d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)
        nn.init.normal_(self.proj.weight, std=1.0 / math.sqrt(self.proj.in_features))
        nn.init.zeros_(self.proj.bias)

    def stage_outputs(self, x: torch.Tensor) -> list[torch.Tensor]:
        if x.dim() == 4:
            x = x.unsqueeze(1)
        if any(s < 1 for s in x.shape[2:]):
            raise ValueError(f"empty input spatial shape {tuple(x.shape[2:])}")
        out = self.stem(x)
        outs = []
        for stage in self.stages:
            if min(out.shape[2:]) < 1:
                raise ValueError("spatial dims collapsed to zero")
            out = stage(out)
            outs.append(out)
        return outs

    def embed(self, fm: torch.Tensor) -> torch.Tensor:
        return self.proj(pool_features(fm, self.cfg.pooling))

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(B, [1,] H, W, D) volume -> (last feature map, unnormalized embedding)."""
        for n in x.shape[-3:]:
            if n // self.cfg.total_stride < 1:
                raise ValueError(
                    f"input extent {n} collapses to zero under total stride {self.cfg.total_stride}"
                )
        fm = self.stage_outputs(x)[-1]
        return fm, self.embed(fm)


def vision_forward(volume, encoder: VisionEncoder):
    """Single-volume convenience wrapper; returns (feature map, embedding) without batch dim."""
    data = volume.data if hasattr(volume, "data") else volume
    x = torch.as_tensor(data, dtype=torch.float32)[None]
    fm, emb = encoder(x)
    return fm[0], emb[0]
