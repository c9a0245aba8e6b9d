"""Loss functions for supervised pre-training and contrastive alignment."""

from __future__ import annotations

import torch
import torch.nn.functional as F

POLICIES = ("ignore", "map_to_negative")


def masked_bce(logits: torch.Tensor, labels: torch.Tensor, policy: str = "ignore") -> torch.Tensor:
    """Mean BCE over cells with a usable target.

    ``labels`` holds -1/0/1. Under ``ignore`` the -1 cells are dropped from
    the mean; under ``map_to_negative`` they count as 0. No class weighting.
    """
    labels = torch.as_tensor(labels, device=logits.device)
    if logits.shape != labels.shape:
        raise ValueError(f"logits {tuple(logits.shape)} and labels {tuple(labels.shape)} differ")
    if policy == "ignore":
        keep = labels != -1
        target = labels.clamp(min=0)
    elif policy == "map_to_negative":
        keep = torch.ones_like(labels, dtype=torch.bool)
        target = (labels == 1).to(labels.dtype)
    else:
        raise ValueError(f"unknown uncertain-label policy {policy!r}")
    if not keep.any():
        raise ValueError("every label cell is masked")
    per_cell = F.binary_cross_entropy_with_logits(logits, target.to(logits.dtype), reduction="none")
    return per_cell[keep].mean()


def seg_ce(logit_volume: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Mean per-voxel cross-entropy; logits (B, K, ...) against integer mask (B, ...)."""
    mask = torch.as_tensor(mask, device=logit_volume.device).long()
    if logit_volume.shape[0] != mask.shape[0] or logit_volume.shape[2:] != mask.shape[1:]:
        raise ValueError(f"logits {tuple(logit_volume.shape)} do not match mask {tuple(mask.shape)}")
    k = logit_volume.shape[1]
    if mask.numel() and (mask.min() < 0 or mask.max() >= k):
        raise ValueError(f"mask class index outside [0, {k})")
    return F.cross_entropy(logit_volume, mask)


def similarity(z: torch.Tensor, t: torch.Tensor, l2_normalize: bool = False) -> torch.Tensor:
    if z.shape[-1] != t.shape[-1]:
        raise ValueError(f"embedding dims differ: {z.shape[-1]} vs {t.shape[-1]}")
    if l2_normalize:
        z = F.normalize(z, dim=-1)
        t = F.normalize(t, dim=-1)
    return z @ t.T


def contrastive_loss(z: torch.Tensor, t: torch.Tensor, l2_normalize: bool = False) -> torch.Tensor:
    """Symmetric InfoNCE on raw dot products, no temperature.

    -(1/2N) sum_i [log softmax_row(S)_ii + log softmax_col(S)_ii], S = Z T^T.
    """
    if z.shape[0] != t.shape[0] or z.shape[0] < 1:
        raise ValueError("image and text batches must have the same nonzero size")
    s = similarity(z, t, l2_normalize)
    target = torch.arange(s.shape[0], device=s.device)
    return 0.5 * (F.cross_entropy(s, target) + F.cross_entropy(s.T, target))


def total_align_loss(
    z: torch.Tensor,
    t: torch.Tensor,
    labels: torch.Tensor,
    classify,
    lam: float = 1.0,
    policy: str = "ignore",
    l2_normalize: bool = False,
) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
    """Contrastive loss plus lam * (image BCE + text BCE) through one shared classifier."""
    clip = contrastive_loss(z, t, l2_normalize)
    cls_img = masked_bce(classify(z), labels, policy)
    cls_txt = masked_bce(classify(t), labels, policy)
    total = clip + lam * (cls_img + cls_txt)
    return total, {"clip": clip, "cls_img": cls_img, "cls_txt": cls_txt, "total": total}
