"""End-to-end desk-scale runs: two-stage pipeline and the joint baseline."""

from __future__ import annotations

import time

import numpy as np
from dataclasses import dataclass, field

from .corpus.preprocess import get_preset
from .corpus.synth import SynthConfig, synth_corpus
from .labels.schemas import DESK_8, LabelSchema
from .models.dual import DualEncoder, build_model
from .models.text import Tokenizer
from .training.data import CorpusArrays
from .training.loops import (
    StageResult,
    desk_config,
    run_joint_baseline,
    run_stage1_text,
    run_stage1_vision,
    run_stage2_align,
    val_clip_loss,
)


def desk_corpus(seed: int, n_studies: int = 500, schema: LabelSchema = DESK_8, preset: str = "desk", cfg=None):
    records = synth_corpus(seed, n_studies, schema, cfg=cfg or SynthConfig())
    return CorpusArrays.from_records(records, get_preset(preset))


def corpus_tokenizer(data: CorpusArrays, max_tokens: int = 64) -> Tokenizer:
    """Vocabulary from training-split reports only."""
    return Tokenizer.build([data.reports[i] for i in data.indices("train")], max_tokens=max_tokens)


@dataclass
class PipelineRun:
    seed: int
    data: CorpusArrays
    model: DualEncoder  # after Stage 2
    random_model: DualEncoder  # same architecture and seed, untrained
    stages: dict[str, StageResult] = field(default_factory=dict)
    joint_model: DualEncoder | None = None
    seconds: dict[str, float] = field(default_factory=dict)

    @property
    def two_stage_val_clip(self) -> float:
        return val_clip_loss(self.model, self.data)

    @property
    def joint_val_clip(self) -> float:
        if self.joint_model is None:
            raise ValueError("the joint baseline was not run")
        return val_clip_loss(self.joint_model, self.data)


def run_two_stage(data: CorpusArrays, seed: int, schema: LabelSchema = DESK_8, **overrides) -> PipelineRun:
    """Stage 1 (vision, then text) and Stage 2 on one model object.

    ``overrides`` maps a stage name to TrainingConfig keyword overrides.
    """
    tok = corpus_tokenizer(data)
    random_model = build_model(schema, tok, seed=seed)
    model = build_model(schema, tok, seed=seed)
    run = PipelineRun(seed, data, model, random_model)
    for stage, runner in (
        ("vision_pretrain", run_stage1_vision),
        ("text_pretrain", run_stage1_text),
        ("align", run_stage2_align),
    ):
        t0 = time.perf_counter()
        cfg = desk_config(stage, seed=seed, **overrides.get(stage, {}))
        run.stages[stage] = runner(data, cfg, model)
        run.seconds[stage] = time.perf_counter() - t0
    return run


def add_joint_baseline(run: PipelineRun, schema: LabelSchema = DESK_8, **overrides) -> PipelineRun:
    """Joint baseline from scratch with the matched epoch budget
    (Stage-1 epochs + Stage-2 epochs of the two-stage run)."""
    stages = run.stages
    budget = max(stages["vision_pretrain"].config["epochs"], stages["text_pretrain"].config["epochs"])
    budget += stages["align"].config["epochs"]
    kw = {"epochs": budget, **overrides}
    t0 = time.perf_counter()
    model = build_model(schema, run.model.tokenizer, seed=run.seed)
    stages["joint_baseline"] = run_joint_baseline(run.data, desk_config("joint_baseline", seed=run.seed, **kw), model)
    run.joint_model = model
    run.seconds["joint_baseline"] = time.perf_counter() - t0
    return run


def gradcam_localization(model, data: CorpusArrays, n_studies: int = 30, split: str = "test",
                         fraction: float = 0.1, n_perm: int = 10, seed: int = 0, prompt: str = "There is {}.",
                         stage: int = -1):
    """Mean IoU of the top-``fraction`` Grad-CAM mask against the lesion mask,
    and the same IoU for spatially permuted heatmaps (chance level).

    Uses the first ``n_studies`` (study, category) pairs with a positive
    label and a visible lesion in the evaluation crop. ``stage`` selects the
    vision stage whose feature map is explained.
    """
    from .corpus.synth import LESION_BASE
    from .interpret import gradcam, iou, top_fraction_mask

    rng = np.random.default_rng(seed)
    cats = model.schema.categories
    real, perm = [], []
    for i in data.indices(split):
        for c in np.flatnonzero(data.labels[i] == 1):
            lesion = data.center_mask(i) == LESION_BASE + c
            if not lesion.any():
                continue
            heat = gradcam(data.center_volume(i), prompt.format(cats[c].replace("_", " ")), model, stage).data
            real.append(iou(top_fraction_mask(heat, fraction), lesion))
            perm.append(np.mean([
                iou(top_fraction_mask(rng.permutation(heat.ravel()).reshape(heat.shape), fraction), lesion)
                for _ in range(n_perm)
            ]))
            if len(real) == n_studies:
                return float(np.mean(real)), float(np.mean(perm))
    raise ValueError(f"only {len(real)} positive (study, category) pairs with visible lesions")
