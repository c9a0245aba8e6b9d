import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from radvlp.evaluation.zeroshot import (
    MetricsReport,
    PromptPair,
    eval_retrieval,
    eval_zero_shot,
    prompt_bank,
    retrieval_scores,
    score_zero_shot,
    zero_shot_probability,
)


def test_prompt_bank_literals():
    bank = [(p.positive, p.negative) for p in prompt_bank()]
    assert bank == [
        ("{pathology}.", "not {pathology}."),
        ("{pathology}.", ""),
        ("There is {pathology}.", "There is no {pathology}."),
        ("{pathology} is present.", "{pathology} is not present."),
        ("Findings are compatible with {pathology}.", "Findings are not compatible with {pathology}."),
    ]


def test_prompt_fill_and_validation():
    assert prompt_bank()[2].fill("emphysema") == ("There is emphysema.", "There is no emphysema.")
    assert prompt_bank()[1].fill("x") == ("x.", "")
    with pytest.raises(ValueError):
        PromptPair("no slot", "")
    with pytest.raises(ValueError):
        PromptPair("{pathology}", "{pathology} {pathology}")


def test_probability_is_two_way_softmax(rng):
    v, tp, tn = rng.normal(size=(5, 4)), rng.normal(size=4), rng.normal(size=4)
    p = zero_shot_probability(v, tp, tn)
    for i in range(5):
        a, b = math.exp(v[i] @ tp), math.exp(v[i] @ tn)
        assert p[i] == pytest.approx(a / (a + b), abs=1e-12)


@given(st.floats(-1e4, 1e4), st.floats(0, 10))
def test_probability_is_stable_and_monotone(gap, step):
    p = zero_shot_probability(np.array([[gap], [gap + step]]), np.array([1.0]), np.array([0.0]))
    assert 0.0 <= p[0] <= p[1] <= 1.0


def test_decisions_follow_the_sign_of_the_gap():
    img = np.array([[-1e-303], [0.0], [1e-303], [-50.0], [50.0]])
    labels = np.array([[0], [1], [1], [0], [1]])
    rep = score_zero_shot(img, labels, ["a"], np.array([[1.0]]), np.array([[0.0]]))
    assert rep.per_class["a"]["acc"] == 1.0


def test_score_zero_shot_skips_uncertain_and_degenerate(rng):
    img = rng.normal(size=(6, 3))
    labels = np.array([[1, 0], [0, 0], [-1, 0], [1, 0], [0, 0], [0, 0]])
    t_pos, t_neg = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
    rep = score_zero_shot(img, labels, ["a", "b"], t_pos, t_neg)
    assert list(rep.per_class) == ["a"] and rep.excluded_classes == ["b"]
    assert rep.macro["auc"] == rep.per_class["a"]["auc"]


def test_score_zero_shot_scale_invariant(rng):
    img = rng.normal(size=(50, 6))
    labels = rng.integers(0, 2, size=(50, 3))
    t_pos, t_neg = rng.normal(size=(3, 6)), rng.normal(size=(3, 6))
    base = score_zero_shot(img, labels, list("abc"), t_pos, t_neg)
    for alpha in (0.1, 3.0, 100.0):
        scaled = score_zero_shot(alpha * img, labels, list("abc"), t_pos, t_neg)
        for c in "abc":
            for m in ("auc", "acc", "f1", "sensitivity", "specificity", "precision"):
                assert scaled.per_class[c][m] == base.per_class[c][m]


def test_retrieval_scores_orientation():
    img = np.eye(4)
    txt = np.eye(4)[[0, 1, 3, 2]]  # queries 2 and 3 match the wrong volume
    # the two misses tie their true column with lower-indexed ones: rank 4
    r = retrieval_scores(txt, img, (1, 3, 4))
    assert r == {1: 0.5, 3: 0.5, 4: 1.0}


def test_report_serialization():
    rep = MetricsReport(recall_at={1: 0.5}, n_eval=3)
    d = json.loads(rep.to_json())
    assert d["recall_at"] == {"1": 0.5} and d["n_eval"] == 3
    assert "R@1=0.5000" in rep.to_table()


def test_eval_on_tiny_corpus(tiny_data, tiny_model):
    rep = eval_zero_shot(tiny_model, tiny_data, split="test")
    assert rep.n_eval == len(tiny_data.indices("test"))
    assert rep.prompt == {"positive": "There is {pathology}.", "negative": "There is no {pathology}."}
    assert all(0.0 <= r["auc"] <= 1.0 for r in rep.per_class.values())
    ret = eval_retrieval(tiny_model, tiny_data, split="val", ks=(1, 5, 100))
    assert set(ret.recall_at) == {1, 5}  # k above the split size is skipped


def test_eval_empty_split_errors(tiny_data, tiny_model):
    empty = tiny_data.subset(tiny_data.indices("train"))
    with pytest.raises(ValueError):
        eval_zero_shot(tiny_model, empty, split="test")
