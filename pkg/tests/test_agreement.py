import numpy as np
import pytest

from radvlp.labels.agreement import agreement_metrics, cohen_kappa, confusion_matrix, consensus_filter
from radvlp.labels.schemas import DESK_8, LabelVector

from oracles import kappa_oracle


def test_kappa_matches_formula(rng):
    for _ in range(200):
        n = int(rng.integers(2, 50))
        a = rng.integers(-1, 2, size=n).tolist()
        b = np.where(rng.random(n) < 0.6, a, rng.integers(-1, 2, size=n)).tolist()
        cm = confusion_matrix(b, a, (-1, 0, 1))
        assert cohen_kappa(cm) == pytest.approx(kappa_oracle(a, b), abs=1e-9)


def test_kappa_special_cases():
    assert cohen_kappa(np.array([[5, 0], [0, 0]])) == 1.0
    assert cohen_kappa(np.array([[3, 0], [0, 3]])) == 1.0
    with pytest.raises(ValueError):
        cohen_kappa(np.zeros((2, 2), dtype=int))


def test_confusion_matrix_orientation():
    cm = confusion_matrix(pred=[1, 1], gold=[0, 1], classes=(0, 1))
    assert cm.tolist() == [[0, 1], [0, 1]]


def _vec(*v):
    return LabelVector(DESK_8, v)


def test_protocols_differ_on_uncertain_cells():
    gold = [_vec(1, 0, -1, -1, 0, 0, 1, 0)]
    pred = [_vec(1, 0, 0, -1, 0, 1, 1, 0)]
    strict = agreement_metrics(pred, gold, "strict")
    ignore = agreement_metrics(pred, gold, "ignore_uncertain")
    mapped = agreement_metrics(pred, gold, "map_uncertain_to_negative")
    assert strict.n_cells == 8 and ignore.n_cells == 6 and mapped.n_cells == 8
    assert strict.accuracy == pytest.approx(6 / 8)
    assert ignore.accuracy == pytest.approx(5 / 6)
    assert mapped.accuracy == pytest.approx(7 / 8)
    # binary protocols score the positive class: tp=2, fp=1, fn=0
    assert ignore.precision == pytest.approx(2 / 3) and ignore.recall == 1.0


def test_agreement_rejects_bad_input():
    with pytest.raises(ValueError):
        agreement_metrics([_vec(*[0] * 8)], [], "strict")
    with pytest.raises(ValueError):
        agreement_metrics([_vec(*[0] * 8)], [_vec(*[0] * 8)], "lenient")


def test_consensus_filter_is_strict_inequality():
    a = [[1, 0], [1, 0], [1, 0], [1, 0], [1, 0], [1, 0], [1, 0], [1, 0], [1, 0], [1, 0]]
    b = [list(r) for r in a]
    b[0] = [0, 1]  # category 0 and 1 both at exactly 90% agreement
    b[1] = [1, 1]  # category 1 drops to 80%
    assert consensus_filter(a, b, 0.90) == set()
    assert consensus_filter(a, b, 0.85) == {0}
    assert consensus_filter(a, a) == {0, 1}
    with pytest.raises(ValueError):
        consensus_filter(a, b, 0.0)
