"""LLM-distilled labels: prompts, verification, retry loop, agreement."""

from .agreement import AgreementReport, agreement_metrics, cohen_kappa, consensus_filter
from .clients import ChatCompletionsClient, KeywordMockClient, LLMClient, TransportError
from .extraction import (
    Backoff,
    ExtractionOutcome,
    extract_corpus,
    extract_with_retry,
    read_label_file,
    write_label_file,
)
from .parsing import FormatError, parse_label_response
from .prompts import build_extraction_prompt, system_prompt
from .schemas import (
    BUNDLED_SCHEMAS,
    CT_RATE_18,
    DESK_8,
    MERLIN_30,
    VISUAL_11,
    LabelSchema,
    LabelVector,
    get_schema,
)
