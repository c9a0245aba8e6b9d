"""Losses, corpus arrays and the two-stage / joint training loops."""

from .data import CorpusArrays
from .loops import (
    DESK_EPOCHS,
    DESK_LR,
    REFERENCE_LR,
    STAGES,
    DivergenceError,
    LossTrace,
    StageResult,
    TrainingConfig,
    desk_config,
    evaluate_losses,
    run_joint_baseline,
    run_stage1_text,
    run_stage1_vision,
    run_stage2_align,
    set_determinism,
    train_stage,
    val_clip_loss,
)
from .losses import POLICIES, contrastive_loss, masked_bce, seg_ce, similarity, total_align_loss
