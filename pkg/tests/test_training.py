import math

import numpy as np
import pytest
import torch

from radvlp.models.dual import build_model
from radvlp.labels.schemas import DESK_8
from radvlp.training.data import CorpusArrays
from radvlp.training.loops import (
    LossTrace,
    TrainingConfig,
    desk_config,
    evaluate_losses,
    run_joint_baseline,
    run_stage1_text,
    run_stage1_vision,
    run_stage2_align,
    val_clip_loss,
)


def test_training_config_validation():
    with pytest.raises(ValueError, match="stage"):
        TrainingConfig(stage="finetune")
    with pytest.raises(ValueError, match="batch_size"):
        TrainingConfig(stage="align", batch_size=1)
    with pytest.raises(ValueError, match="uncertain"):
        TrainingConfig(stage="align", uncertain_policy="drop")
    with pytest.raises(ValueError, match="lr"):
        TrainingConfig(stage="align", lr=0.0)
    assert TrainingConfig(stage="vision_pretrain").lr == 1e-4
    assert desk_config("align", epochs=3).epochs == 3


def test_stage_runners_reject_wrong_stage(tiny_data, tiny_model):
    cfg = TrainingConfig(stage="align", epochs=1)
    for runner in (run_stage1_vision, run_stage1_text, run_joint_baseline):
        with pytest.raises(ValueError, match="stage"):
            runner(tiny_data, cfg, tiny_model)
    with pytest.raises(ValueError, match="stage"):
        run_stage2_align(tiny_data, TrainingConfig(stage="vision_pretrain"), tiny_model)


def test_vision_stage_trace_and_frozen_text(tiny_data, tiny_model):
    text_before = {k: v.clone() for k, v in tiny_model.text.state_dict().items()}
    res = run_stage1_vision(tiny_data, desk_config("vision_pretrain", epochs=1), tiny_model)
    assert res.trace.all_finite()
    assert {"bce", "seg", "total"} <= res.trace.components()
    assert len(res.trace.series("val", "total")) == 2  # epoch 0 and epoch 1
    assert res.best_val == min(res.trace.series("val", "total"))
    for k, v in tiny_model.text.state_dict().items():
        assert torch.equal(v, text_before[k])


def test_best_val_model_is_restored(tiny_data, tiny_model):
    cfg = desk_config("text_pretrain", epochs=2)
    res = run_stage1_text(tiny_data, cfg, tiny_model)
    now = evaluate_losses(tiny_model, tiny_data, tiny_data.indices("val"), cfg)["total"]
    assert now == pytest.approx(res.best_val, rel=1e-6)


def test_align_components_and_total(tiny_data, tiny_model):
    res = run_stage2_align(tiny_data, desk_config("align", epochs=1), tiny_model)
    val = [r for r in res.trace.rows if r["split"] == "val" and r["epoch"] == 1]
    comps = {r["component"]: r["value"] for r in val}
    assert comps["total"] == pytest.approx(comps["clip"] + comps["cls_img"] + comps["cls_txt"], rel=1e-6)


def test_joint_includes_segmentation(tiny_data, tiny_model):
    res = run_joint_baseline(tiny_data, desk_config("joint_baseline", epochs=1), tiny_model)
    assert {"clip", "bce", "seg", "total"} <= res.trace.components()


def test_training_is_deterministic(tiny_data, tiny_tokenizer):
    traces = []
    for _ in range(2):
        model = build_model(DESK_8, tiny_tokenizer, seed=5)
        traces.append(run_stage2_align(tiny_data, desk_config("align", epochs=1, seed=5), model).trace.rows)
    assert traces[0] == traces[1]


def test_trace_csv_roundtrip(tmp_path):
    trace = LossTrace()
    trace.add("align", 0, 0, "val", {"clip": 1 / 3, "total": torch.tensor(0.1)})
    trace.add("align", 1, 4, "train", {"clip": 2.0 ** -40})
    trace.to_csv(tmp_path / "t.csv")
    again = LossTrace.from_csv(tmp_path / "t.csv")
    assert again.rows == trace.rows
    assert again.all_finite()
    trace.add("align", 1, 5, "train", {"clip": math.nan})
    assert not trace.all_finite()


def test_val_clip_loss_equals_align_eval(tiny_data, tiny_model):
    ref = evaluate_losses(tiny_model, tiny_data, tiny_data.indices("val"), TrainingConfig(stage="align"))["clip"]
    assert val_clip_loss(tiny_model, tiny_data) == ref
    assert ref > 0


def test_empty_train_split_raises(tiny_data, tiny_model):
    test_only = tiny_data.subset(tiny_data.indices("test"))
    with pytest.raises(ValueError, match="training split"):
        run_stage1_text(test_only, desk_config("text_pretrain", epochs=1), tiny_model)
