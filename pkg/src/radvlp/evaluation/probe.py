"""Alignment probe: contrastive loss on label-related vs label-unrelated report sentences."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np
import torch

from ..corpus.synth import FILLER
from ..labels.clients import split_sentences
from ..training.data import CorpusArrays
from ..training.losses import contrastive_loss
from ..training.loops import _batches
from .zeroshot import embed_images, embed_texts

FILTERS = ("all", "related", "unrelated")


@dataclass
class ProbeResult:
    sentence_filter: str
    loss: float
    n_used: int
    n_skipped: int


def keyword_is_related(sentence: str, categories) -> bool:
    s = sentence.lower()
    return any(re.search(rf"\b{re.escape(c.replace('_', ' ').lower())}\b", s) for c in categories)


def filter_report(report: str, sentence_filter: str, categories, tagged=None) -> str:
    """Keep all / only label-related / only label-unrelated sentences.

    With ``tagged`` (generator sentence tags) the split is exact; otherwise a
    sentence is label-related when it names a schema category.
    """
    if sentence_filter == "all":
        return report
    if tagged:
        sents = [(s, tag != FILLER) for s, tag, _ in tagged]
    else:
        sents = [(s, keyword_is_related(s, categories)) for s in split_sentences(report)]
    want = sentence_filter == "related"
    return " ".join(s for s, related in sents if related == want)


def alignment_probe(
    model, data: CorpusArrays, split="val", sentence_filter="all", batch_size=10, use_tags=False
) -> ProbeResult:
    if sentence_filter not in FILTERS:
        raise ValueError(f"unknown sentence filter {sentence_filter!r}")
    idx = data.indices(split)
    if len(idx) == 0:
        raise ValueError(f"split {split!r} is empty")
    keep, texts = [], []
    for i in idx:
        tagged = data.records[i].sentences if (use_tags and data.records is not None) else None
        text = filter_report(data.reports[i], sentence_filter, model.schema.categories, tagged)
        if text.strip():
            keep.append(i)
            texts.append(text)
    if len(keep) < 2:
        raise ValueError(f"filter {sentence_filter!r} leaves fewer than two studies with sentences")
    img = torch.from_numpy(embed_images(model, data, np.asarray(keep)))
    txt = torch.from_numpy(embed_texts(model, texts))
    total, n = 0.0, 0
    for b in _batches(np.arange(len(keep)), batch_size, None, min_size=2):
        bt = torch.as_tensor(b)
        total += float(contrastive_loss(img[bt], txt[bt])) * len(b)
        n += len(b)
    return ProbeResult(sentence_filter, total / n, len(keep), len(idx) - len(keep))
