"""Agreement between label sources: Cohen's kappa and friends, consensus filtering."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .schemas import LabelVector

PROTOCOLS = ("strict", "ignore_uncertain", "map_uncertain_to_negative")


@dataclass
class AgreementReport:
    protocol: str
    kappa: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    n_cells: int

    def to_dict(self):
        return asdict(self)


def confusion_matrix(pred, gold, classes) -> np.ndarray:
    """Rows index gold, columns index prediction."""
    idx = {c: i for i, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(cm, ([idx[g] for g in gold], [idx[p] for p in pred]), 1)
    return cm


def cohen_kappa(cm: np.ndarray) -> float:
    n = cm.sum()
    if n == 0:
        raise ValueError("empty confusion matrix")
    po = np.trace(cm) / n
    pe = float(cm.sum(axis=0) @ cm.sum(axis=1)) / n**2
    if pe == 1.0:
        # Both raters used one identical class throughout.
        return 1.0 if po == 1.0 else 0.0
    return float((po - pe) / (1.0 - pe))


def _prf(cm: np.ndarray, k: int) -> tuple[float, float, float]:
    tp = cm[k, k]
    pred_pos = cm[:, k].sum()
    gold_pos = cm[k, :].sum()
    precision = tp / pred_pos if pred_pos else 0.0
    recall = tp / gold_pos if gold_pos else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return float(precision), float(recall), float(f1)


def _stack(vectors) -> np.ndarray:
    return np.stack([v.as_array() if isinstance(v, LabelVector) else np.asarray(v) for v in vectors])


def agreement_metrics(pred, gold, protocol: str = "strict") -> AgreementReport:
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    if len(pred) != len(gold):
        raise ValueError("pred and gold differ in length")
    if pred and isinstance(pred[0], LabelVector) and isinstance(gold[0], LabelVector):
        if pred[0].schema != gold[0].schema:
            raise ValueError("pred and gold use different schemas")
    p = _stack(pred).ravel()
    g = _stack(gold).ravel()
    if p.shape != g.shape:
        raise ValueError("pred and gold have different shapes")

    if protocol == "strict":
        classes = (-1, 0, 1)
        cm = confusion_matrix(p, g, classes)
        scores = np.array([_prf(cm, k) for k in range(3)])
        precision, recall, f1 = scores.mean(axis=0)
    else:
        if protocol == "ignore_uncertain":
            keep = g != -1
            p, g = p[keep], g[keep]
            p = np.where(p == -1, 0, p)
        else:
            p = np.where(p == -1, 0, p)
            g = np.where(g == -1, 0, g)
        if p.size == 0:
            raise ValueError("no cells left to score after filtering")
        classes = (0, 1)
        cm = confusion_matrix(p, g, classes)
        precision, recall, f1 = _prf(cm, 1)
    if cm.sum() == 0:
        raise ValueError("no cells to score")
    return AgreementReport(
        protocol=protocol,
        kappa=cohen_kappa(cm),
        accuracy=float(np.trace(cm) / cm.sum()),
        precision=float(precision),
        recall=float(recall),
        f1=float(f1),
        n_cells=int(cm.sum()),
    )


def per_category_agreement(labels_a, labels_b) -> np.ndarray:
    a, b = _stack(labels_a), _stack(labels_b)
    if a.shape != b.shape:
        raise ValueError(f"label sets differ in shape: {a.shape} vs {b.shape}")
    return (a == b).mean(axis=0)


def consensus_filter(labels_a, labels_b, threshold: float = 0.90) -> set[int]:
    """Categories on which the two labelers agree on more than ``threshold``
    of the studies (strictly greater)."""
    if not labels_a or len(labels_a) != len(labels_b):
        raise ValueError("need two nonempty label lists of equal length")
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    if isinstance(labels_a[0], LabelVector) and isinstance(labels_b[0], LabelVector):
        if labels_a[0].schema != labels_b[0].schema:
            raise ValueError("labelers used different schemas")
    a, b = _stack(labels_a), _stack(labels_b)
    if a.shape != b.shape:
        raise ValueError(f"label sets differ in shape: {a.shape} vs {b.shape}")
    rate = (a == b).sum(axis=0) / a.shape[0]
    return {int(c) for c in np.flatnonzero(rate > threshold)}
