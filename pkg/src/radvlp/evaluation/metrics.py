"""Scalar metrics: tie-corrected AUC, thresholded binary metrics, Recall@k."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)  # average ranks handle ties
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def binary_metrics(probs, labels, threshold: float = 0.5) -> dict[str, float]:
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    pred = probs >= threshold
    tp = int(np.sum(pred & y))
    tn = int(np.sum(~pred & ~y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    precision = tp / (tp + fp) if tp + fp else 0.0
    sensitivity = tp / (tp + fn) if tp + fn else 0.0
    specificity = tn / (tn + fp) if tn + fp else 0.0
    f1 = 2 * precision * sensitivity / (precision + sensitivity) if precision + sensitivity else 0.0
    return {
        "acc": (tp + tn) / y.size,
        "f1": f1,
        "precision": precision,
        "sensitivity": sensitivity,
        "specificity": specificity,
    }


def true_match_ranks(sim) -> np.ndarray:
    """1-based rank of column i in row i; ties go to the lower column index."""
    sim = np.asarray(sim, dtype=np.float64)
    n = sim.shape[0]
    if sim.ndim != 2 or sim.shape[1] != n:
        raise ValueError("similarity matrix must be square")
    diag = np.diag(sim)[:, None]
    cols = np.arange(n)
    ahead = (sim > diag) | ((sim == diag) & (cols[None, :] < cols[:, None]))
    return ahead.sum(axis=1) + 1


def recall_at_k(sim, ks=(1, 5, 10, 50, 100)) -> dict[int, float]:
    """Row i is a query whose true match is column i."""
    ranks = true_match_ranks(sim)
    n = ranks.size
    out = {}
    for k in ks:
        if k > n:
            raise ValueError(f"k={k} exceeds the number of candidates ({n})")
        if k < 1:
            raise ValueError("k must be >= 1")
        out[int(k)] = float(np.mean(ranks <= k))
    return out
