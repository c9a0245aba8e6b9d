"""Stage-1 supervised pre-training, Stage-2 alignment and the joint baseline."""

from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from ..models.dual import DualEncoder, load_parts
from .data import CorpusArrays
from .losses import POLICIES, contrastive_loss, masked_bce, seg_ce, total_align_loss

log = logging.getLogger(__name__)

STAGES = ("vision_pretrain", "text_pretrain", "align", "joint_baseline")
REFERENCE_LR = {"vision_pretrain": 1e-4, "text_pretrain": 1e-5, "align": 1e-5, "joint_baseline": 1e-5}
# Desk-scale schedule: the encoders start from random weights and see only a
# few hundred studies, so the reference fine-tuning learning rates barely move
# them within a CPU budget. Stage 1 gets 10 epochs, Stage 2 gets 10, and the
# joint baseline gets the matched total of 20.
DESK_LR = {"vision_pretrain": 3e-3, "text_pretrain": 1e-3, "align": 1e-3, "joint_baseline": 1e-3}
DESK_EPOCHS = {"vision_pretrain": 10, "text_pretrain": 10, "align": 10, "joint_baseline": 20}


@dataclass
class TrainingConfig:
    stage: str
    lr: float | None = None
    batch_size: int = 10
    epochs: int = 5
    lambda_cls: float = 1.0
    uncertain_policy: str = "ignore"
    use_seg: bool = True
    l2_normalize: bool = False
    seed: int = 0
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    freeze_encoders: bool = False
    deterministic: bool = True

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.lr is None:
            self.lr = REFERENCE_LR[self.stage]
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.uncertain_policy not in POLICIES:
            raise ValueError(f"unknown uncertain policy {self.uncertain_policy!r}")
        if self.stage in ("align", "joint_baseline") and self.batch_size < 2:
            raise ValueError("contrastive stages need batch_size >= 2")
        if self.lambda_cls < 0:
            raise ValueError("lambda_cls must be >= 0")
        self.betas = tuple(self.betas)


def desk_config(stage: str, **overrides) -> TrainingConfig:
    """TrainingConfig with the desk-scale learning rate and epoch budget."""
    kw = {"lr": DESK_LR[stage], "epochs": DESK_EPOCHS[stage], **overrides}
    return TrainingConfig(stage=stage, **kw)


class DivergenceError(RuntimeError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


@dataclass
class LossTrace:
    rows: list[dict] = field(default_factory=list)

    COLUMNS = ("stage", "epoch", "step", "split", "component", "value")

    def add(self, stage, epoch, step, split, components: dict):
        for name, value in components.items():
            v = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
            self.rows.append(
                {"stage": stage, "epoch": epoch, "step": step, "split": split, "component": name, "value": v}
            )

    def series(self, split: str, component: str, stage: str | None = None) -> list[float]:
        return [
            r["value"]
            for r in self.rows
            if r["split"] == split and r["component"] == component and (stage is None or r["stage"] == stage)
        ]

    def components(self) -> set[str]:
        return {r["component"] for r in self.rows}

    def all_finite(self) -> bool:
        return all(math.isfinite(r["value"]) for r in self.rows)

    def extend(self, other: "LossTrace"):
        self.rows.extend(other.rows)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow({**r, "value": repr(r["value"])})

    @classmethod
    def from_csv(cls, path) -> "LossTrace":
        with open(path, newline="") as fh:
            rows = [
                {**r, "epoch": int(r["epoch"]), "step": int(r["step"]), "value": float(r["value"])}
                for r in csv.DictReader(fh)
            ]
        return cls(rows)


@dataclass
class StageResult:
    model: DualEncoder
    trace: LossTrace
    best_epoch: int
    best_val: float
    config: dict


def set_determinism(seed: int, deterministic: bool = True):
    torch.manual_seed(seed)
    if deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def _optimizer(params, cfg: TrainingConfig):
    return torch.optim.AdamW(params, lr=cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay)


def _batches(idx: np.ndarray, size: int, rng: np.random.Generator | None, min_size: int = 1):
    order = idx if rng is None else rng.permutation(idx)
    chunks = [order[i : i + size] for i in range(0, len(order), size)]
    if len(chunks) > 1 and len(chunks[-1]) < min_size:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return [c for c in chunks if len(c) >= min_size]


def _check_finite(losses: dict, trace: LossTrace, where: str):
    for k, v in losses.items():
        if not torch.isfinite(v).all():
            raise DivergenceError(f"non-finite {k} loss at {where}", trace)


# --- per-stage loss computations -------------------------------------------------


def vision_losses(model: DualEncoder, data: CorpusArrays, idx, cfg: TrainingConfig, rng=None):
    vols, masks, labels = data.batch(idx, rng)
    fm, z = model.vision(vols)
    out = {"bce": masked_bce(model.classify(z), labels, cfg.uncertain_policy)}
    if cfg.use_seg and model.seg_decoder is not None and masks is not None:
        out["seg"] = seg_ce(model.seg_decoder(fm, vols.shape[1:]), masks)
    out["total"] = sum(out.values())
    return out


def text_losses(model: DualEncoder, data: CorpusArrays, idx, cfg: TrainingConfig, rng=None):
    t = model.encode_text([data.reports[i] for i in idx])
    labels = torch.from_numpy(data.labels[idx])
    bce = masked_bce(model.text_head(t), labels, cfg.uncertain_policy)
    return {"bce": bce, "total": bce}


def align_losses(model: DualEncoder, data: CorpusArrays, idx, cfg: TrainingConfig, rng=None):
    vols, masks, labels = data.batch(idx, rng)
    fm, z = model.vision(vols)
    t = model.encode_text([data.reports[i] for i in idx])
    total, comps = total_align_loss(
        z, t, labels, model.classify, cfg.lambda_cls, cfg.uncertain_policy, cfg.l2_normalize
    )
    if cfg.stage == "joint_baseline":
        comps["bce"] = masked_bce(model.classify(z), labels, cfg.uncertain_policy)
        extra = comps["bce"]
        if cfg.use_seg and model.seg_decoder is not None and masks is not None:
            comps["seg"] = seg_ce(model.seg_decoder(fm, vols.shape[1:]), masks)
            extra = extra + comps["seg"]
        comps["total"] = total + extra
    return comps


_LOSS_FNS = {
    "vision_pretrain": vision_losses,
    "text_pretrain": text_losses,
    "align": align_losses,
    "joint_baseline": align_losses,
}


def evaluate_losses(model, data, idx, cfg: TrainingConfig) -> dict[str, float]:
    """Batch-size-weighted mean of each component over fixed, unshuffled batches."""
    fn = _LOSS_FNS[cfg.stage]
    min_size = 2 if cfg.stage in ("align", "joint_baseline") else 1
    sums, n = {}, 0
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for b in _batches(np.asarray(idx), cfg.batch_size, None, min_size):
            comps = fn(model, data, b, cfg)
            for k, v in comps.items():
                sums[k] = sums.get(k, 0.0) + float(v) * len(b)
            n += len(b)
    model.train(was_training)
    if n == 0:
        raise ValueError("no evaluation batches")
    return {k: v / n for k, v in sums.items()}


def _trainable(model: DualEncoder, cfg: TrainingConfig):
    if cfg.stage == "vision_pretrain":
        mods = [model.vision, model.classifier] + ([model.seg_decoder] if cfg.use_seg and model.seg_decoder else [])
    elif cfg.stage == "text_pretrain":
        mods = [model.text, model.text_head]
    elif cfg.stage == "align":
        if cfg.freeze_encoders:
            mods = [model.vision.proj, model.text.proj]
        else:
            mods = [model.vision, model.text, model.classifier]
    else:
        mods = [model.vision, model.text, model.classifier] + (
            [model.seg_decoder] if cfg.use_seg and model.seg_decoder else []
        )
    params = []
    for m in mods:
        params.extend(p for p in m.parameters())
    return mods, params


def _set_modes(model: DualEncoder, mods):
    model.eval()
    for m in mods:
        m.train()


def train_stage(model: DualEncoder, data: CorpusArrays, cfg: TrainingConfig) -> StageResult:
    """Generic loop: constant-lr AdamW, per-step and per-epoch traces, best-val checkpoint."""
    set_determinism(cfg.seed, cfg.deterministic)
    rng = np.random.default_rng(cfg.seed)
    fn = _LOSS_FNS[cfg.stage]
    train_idx, val_idx = data.indices("train"), data.indices("val")
    if len(train_idx) == 0:
        raise ValueError("training split is empty")
    if len(val_idx) == 0:
        val_idx = train_idx
        log.warning("no validation split; validating on the training split")
    mods, params = _trainable(model, cfg)
    for p in model.parameters():
        p.requires_grad_(False)
    for p in params:
        p.requires_grad_(True)
    opt = _optimizer(params, cfg)
    trace = LossTrace()
    min_size = 2 if cfg.stage in ("align", "joint_baseline") else 1

    def record_eval(epoch, step):
        trace.add(cfg.stage, epoch, step, "train_eval", evaluate_losses(model, data, train_idx, cfg))
        val = evaluate_losses(model, data, val_idx, cfg)
        trace.add(cfg.stage, epoch, step, "val", val)
        if not all(math.isfinite(v) for v in val.values()):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}", trace)
        return val["total"]

    step = 0
    best_val = record_eval(0, 0)
    best_epoch, best_state = 0, copy.deepcopy(model.state_dict())
    for epoch in range(1, cfg.epochs + 1):
        _set_modes(model, mods)
        sums, n = {}, 0
        for b in _batches(train_idx, cfg.batch_size, rng, min_size):
            comps = fn(model, data, b, cfg, rng)
            _check_finite(comps, trace, f"epoch {epoch} step {step}")
            opt.zero_grad(set_to_none=True)
            comps["total"].backward()
            opt.step()
            step += 1
            trace.add(cfg.stage, epoch, step, "train", comps)
            for k, v in comps.items():
                sums[k] = sums.get(k, 0.0) + float(v.detach()) * len(b)
            n += len(b)
        trace.add(cfg.stage, epoch, step, "train_epoch", {k: v / n for k, v in sums.items()})
        val = record_eval(epoch, step)
        log.info("%s epoch %d: val total %.4f", cfg.stage, epoch, val)
        if val < best_val:
            best_val, best_epoch = val, epoch
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    for p in model.parameters():
        p.requires_grad_(True)
    model.eval()
    return StageResult(model, trace, best_epoch, best_val, asdict(cfg))


def run_stage1_vision(data: CorpusArrays, cfg: TrainingConfig, model: DualEncoder) -> StageResult:
    if cfg.stage != "vision_pretrain":
        raise ValueError("config stage must be vision_pretrain")
    if cfg.use_seg and data.masks is None:
        raise ValueError("use_seg requires anatomy masks in the corpus")
    return train_stage(model, data, cfg)


def run_stage1_text(data: CorpusArrays, cfg: TrainingConfig, model: DualEncoder) -> StageResult:
    if cfg.stage != "text_pretrain":
        raise ValueError("config stage must be text_pretrain")
    return train_stage(model, data, cfg)


def run_stage2_align(
    data: CorpusArrays, cfg: TrainingConfig, model: DualEncoder, vision_ckpt=None, text_ckpt=None
) -> StageResult:
    """Align matured encoders. The shared classifier starts from the vision
    stage's classifier; the segmentation decoder is not used."""
    if cfg.stage != "align":
        raise ValueError("config stage must be align")
    if vision_ckpt is not None:
        load_parts(model, vision_ckpt, ("vision.", "classifier."))
    if text_ckpt is not None:
        load_parts(model, text_ckpt, ("text.", "text_head."))
    return train_stage(model, data, cfg)


def run_joint_baseline(data: CorpusArrays, cfg: TrainingConfig, model: DualEncoder) -> StageResult:
    """All objectives at once from random initialization."""
    if cfg.stage != "joint_baseline":
        raise ValueError("config stage must be joint_baseline")
    return train_stage(model, data, cfg)


def val_clip_loss(model: DualEncoder, data: CorpusArrays, batch_size: int = 10, l2_normalize=False) -> float:
    cfg = TrainingConfig(stage="align", batch_size=batch_size, l2_normalize=l2_normalize)
    idx = data.indices("val")
    return evaluate_losses(model, data, idx if len(idx) else data.indices(None), cfg)["clip"]


__all__ = [
    "TrainingConfig",
    "LossTrace",
    "StageResult",
    "DivergenceError",
    "run_stage1_vision",
    "run_stage1_text",
    "run_stage2_align",
    "run_joint_baseline",
    "evaluate_losses",
    "val_clip_loss",
    "contrastive_loss",
]
