"""Zero-shot diagnosis, retrieval, metrics and the alignment probe."""

from .metrics import auc, binary_metrics, recall_at_k, true_match_ranks
from .probe import FILTERS, ProbeResult, alignment_probe, filter_report, keyword_is_related
from .zeroshot import (
    MetricsReport,
    PromptPair,
    embed_images,
    embed_texts,
    eval_retrieval,
    eval_zero_shot,
    prompt_bank,
    prompt_embeddings,
    retrieval_scores,
    score_zero_shot,
    zero_shot_logit,
    zero_shot_probability,
)
