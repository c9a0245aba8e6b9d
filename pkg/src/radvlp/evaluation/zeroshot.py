"""Zero-shot diagnosis with prompt pairs, and report-to-volume retrieval."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from ..training.data import CorpusArrays
from .metrics import auc, binary_metrics, recall_at_k

SLOT = "{pathology}"
METRIC_NAMES = ("auc", "acc", "f1", "precision", "sensitivity", "specificity")


@dataclass(frozen=True)
class PromptPair:
    positive: str
    negative: str

    def __post_init__(self):
        if self.positive.count(SLOT) != 1:
            raise ValueError(f"positive template needs exactly one {SLOT} slot")
        # An empty negative is allowed (prompt 2).
        if self.negative and self.negative.count(SLOT) != 1:
            raise ValueError(f"negative template needs exactly one {SLOT} slot")

    def fill(self, pathology: str) -> tuple[str, str]:
        return self.positive.replace(SLOT, pathology), self.negative.replace(SLOT, pathology)


def prompt_bank() -> list[PromptPair]:
    return [
        PromptPair("{pathology}.", "not {pathology}."),
        PromptPair("{pathology}.", ""),
        PromptPair("There is {pathology}.", "There is no {pathology}."),
        PromptPair("{pathology} is present.", "{pathology} is not present."),
        PromptPair("Findings are compatible with {pathology}.", "Findings are not compatible with {pathology}."),
    ]


def zero_shot_logit(v, t_pos, t_neg):
    """v.t+ - v.t-, the log-odds of the positive prompt."""
    v = np.asarray(v, dtype=np.float64)
    return v @ np.asarray(t_pos, dtype=np.float64) - v @ np.asarray(t_neg, dtype=np.float64)


def zero_shot_probability(v, t_pos, t_neg):
    """exp(v.t+) / (exp(v.t+) + exp(v.t-)), evaluated as a sigmoid of the gap."""
    return _stable_sigmoid(zero_shot_logit(v, t_pos, t_neg))


def _log_odds(p: float) -> float:
    if p <= 0.0:
        return -np.inf
    if p >= 1.0:
        return np.inf
    return float(np.log(p) - np.log1p(-p))


def _stable_sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return float(out) if out.ndim == 0 else out


@dataclass
class MetricsReport:
    per_class: dict[str, dict[str, float]] = field(default_factory=dict)
    macro: dict[str, float] = field(default_factory=dict)
    recall_at: dict[int, float] = field(default_factory=dict)
    n_eval: int = 0
    excluded_classes: list[str] = field(default_factory=list)
    prompt: dict[str, str] | None = None
    threshold: float = 0.5

    def to_dict(self):
        d = asdict(self)
        d["recall_at"] = {str(k): v for k, v in self.recall_at.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        lines = []
        if self.per_class:
            head = f"{'class':32s}" + "".join(f"{m:>12s}" for m in METRIC_NAMES)
            lines.append(head)
            lines.append("-" * len(head))
            for name, row in self.per_class.items():
                lines.append(f"{name:32s}" + "".join(f"{row[m]:12.4f}" for m in METRIC_NAMES))
            lines.append(f"{'MACRO':32s}" + "".join(f"{self.macro[m]:12.4f}" for m in METRIC_NAMES))
        if self.recall_at:
            lines.append("  ".join(f"R@{k}={v:.4f}" for k, v in sorted(self.recall_at.items())))
        if self.excluded_classes:
            lines.append("excluded (degenerate gold): " + ", ".join(self.excluded_classes))
        lines.append(f"n_eval={self.n_eval}")
        return "\n".join(lines)


@torch.no_grad()
def embed_images(model, data: CorpusArrays, idx, batch_size: int = 32) -> np.ndarray:
    model.eval()
    out = []
    for start in range(0, len(idx), batch_size):
        b = np.asarray(idx[start : start + batch_size])
        vols, _, _ = data.batch(b, None)
        out.append(model.encode_image(vols).double().numpy())
    return np.concatenate(out)


@torch.no_grad()
def embed_texts(model, texts, batch_size: int = 64) -> np.ndarray:
    model.eval()
    texts = list(texts)
    out = [model.encode_text(texts[i : i + batch_size]).double().numpy() for i in range(0, len(texts), batch_size)]
    return np.concatenate(out)


def prompt_embeddings(model, categories, prompt: PromptPair):
    pairs = [prompt.fill(c.replace("_", " ")) for c in categories]
    t_pos = embed_texts(model, [p for p, _ in pairs])
    t_neg = embed_texts(model, [n for _, n in pairs])
    return t_pos, t_neg


def score_zero_shot(img_emb, labels, categories, t_pos, t_neg, threshold=0.5) -> MetricsReport:
    """Metrics from precomputed image and prompt embeddings; gold -1 cells are skipped."""
    report = MetricsReport(n_eval=int(img_emb.shape[0]), threshold=threshold)
    for c, name in enumerate(categories):
        logit = zero_shot_logit(img_emb, t_pos[c], t_neg[c])
        gold = labels[:, c]
        keep = gold != -1
        y = gold[keep] == 1
        if y.all() or not y.any():
            report.excluded_classes.append(name)
            continue
        # Rank on the logit: same ordering as the probability, but large
        # embedding norms cannot saturate distinct scores into ties.
        row = {"auc": auc(logit[keep], y)}
        # Decisions likewise compare the logit with logit(threshold): identical
        # to probs >= threshold except where the sigmoid rounds to the threshold.
        row.update(binary_metrics(logit[keep], y, _log_odds(threshold)))
        report.per_class[name] = row
    if report.per_class:
        report.macro = {m: float(np.mean([r[m] for r in report.per_class.values()])) for m in METRIC_NAMES}
    return report


def eval_zero_shot(model, data: CorpusArrays, split="test", prompt: PromptPair | None = None, threshold=0.5):
    prompt = prompt or prompt_bank()[2]
    idx = data.indices(split)
    if len(idx) == 0:
        raise ValueError(f"split {split!r} is empty")
    img = embed_images(model, data, idx)
    t_pos, t_neg = prompt_embeddings(model, model.schema.categories, prompt)
    report = score_zero_shot(img, data.labels[idx], model.schema.categories, t_pos, t_neg, threshold)
    report.prompt = {"positive": prompt.positive, "negative": prompt.negative}
    return report


def retrieval_scores(txt_emb, img_emb, ks) -> dict[int, float]:
    sim = np.asarray(txt_emb) @ np.asarray(img_emb).T  # rows: reports, cols: volumes
    return recall_at_k(sim, ks)


def eval_retrieval(model, data: CorpusArrays, split="test", ks=(1, 5, 10, 50, 100)) -> MetricsReport:
    idx = data.indices(split)
    if len(idx) == 0:
        raise ValueError(f"split {split!r} is empty")
    usable = [k for k in ks if k <= len(idx)]
    img = embed_images(model, data, idx)
    txt = embed_texts(model, [data.reports[i] for i in idx])
    return MetricsReport(recall_at=retrieval_scores(txt, img, usable), n_eval=len(idx))
