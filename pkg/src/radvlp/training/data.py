"""In-memory arrays for training and evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..corpus.preprocess import (
    PreprocessSpec,
    center_offsets,
    crop_at,
    pad_or_crop_mask,
    preprocess,
    random_offsets,
    resample_mask,
)


@dataclass
class CorpusArrays:
    """Preprocessed canvases for a list of studies.

    ``volumes`` and ``masks`` are (N, H, W, D) at canvas size; crops are cut
    on the fly so random training crops differ per epoch.
    """

    study_ids: list[str]
    volumes: np.ndarray
    masks: np.ndarray | None
    labels: np.ndarray
    reports: list[str]
    splits: np.ndarray
    crop: tuple[int, int, int]
    records: list | None = None

    @classmethod
    def from_records(cls, records, spec: PreprocessSpec, keep_records: bool = True) -> "CorpusArrays":
        if not records:
            raise ValueError("no studies")
        vols, masks = [], []
        has_mask = all(r.mask is not None for r in records)
        for r in records:
            vols.append(preprocess(r.volume, spec).data)
            if has_mask:
                m = r.mask
                if spec.target_spacing_mm is not None:
                    m = resample_mask(m, r.volume.spacing_mm, spec.target_spacing_mm)
                masks.append(pad_or_crop_mask(m, spec.canvas))
        return cls(
            study_ids=[r.study_id for r in records],
            volumes=np.stack(vols).astype(np.float32),
            masks=np.stack(masks).astype(np.uint8) if has_mask else None,
            labels=np.stack([r.labels.as_array() for r in records]),
            reports=[r.report for r in records],
            splits=np.array([r.split for r in records]),
            crop=tuple(spec.train_crop),
            records=list(records) if keep_records else None,
        )

    def __len__(self):
        return len(self.study_ids)

    def indices(self, split: str | None) -> np.ndarray:
        if split is None or split == "all":
            return np.arange(len(self))
        return np.flatnonzero(self.splits == split)

    def subset(self, idx) -> "CorpusArrays":
        idx = np.asarray(idx)
        return CorpusArrays(
            [self.study_ids[i] for i in idx],
            self.volumes[idx],
            None if self.masks is None else self.masks[idx],
            self.labels[idx],
            [self.reports[i] for i in idx],
            self.splits[idx],
            self.crop,
            None if self.records is None else [self.records[i] for i in idx],
        )

    def crop_offsets(self, idx, rng: np.random.Generator | None):
        shape = self.volumes.shape[1:]
        if rng is None:
            return [center_offsets(shape, self.crop)] * len(idx)
        return [random_offsets(shape, self.crop, rng) for _ in idx]

    def batch(self, idx, rng: np.random.Generator | None = None):
        """Volumes (B, H, W, D), masks or None, labels (B, C); random crops iff rng given."""
        offs = self.crop_offsets(idx, rng)
        vols = np.stack([crop_at(self.volumes[i], o, self.crop) for i, o in zip(idx, offs)])
        masks = None
        if self.masks is not None:
            masks = np.stack([crop_at(self.masks[i], o, self.crop) for i, o in zip(idx, offs)])
            masks = torch.from_numpy(masks.astype(np.int64))
        return torch.from_numpy(vols), masks, torch.from_numpy(self.labels[idx])

    def center_volume(self, i: int) -> np.ndarray:
        return crop_at(self.volumes[i], center_offsets(self.volumes.shape[1:], self.crop), self.crop)

    def center_mask(self, i: int) -> np.ndarray:
        return crop_at(self.masks[i], center_offsets(self.masks.shape[1:], self.crop), self.crop)
