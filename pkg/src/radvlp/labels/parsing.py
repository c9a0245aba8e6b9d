"""Strict verification of LLM label responses."""

from __future__ import annotations

import re

from .schemas import LabelSchema, LabelVector

_INT_TOKEN = re.compile(r"-?\d+")


class FormatError(ValueError):
    """Response rejected by the verifier. ``reason`` is one of
    ``wrong_count``, ``bad_token`` or ``extra_text``."""

    REASONS = ("wrong_count", "bad_token", "extra_text")

    def __init__(self, reason: str, detail: str = ""):
        if reason not in self.REASONS:
            raise ValueError(f"unknown reason {reason!r}")
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


def parse_label_response(text: str, schema: LabelSchema) -> LabelVector:
    body = text.strip()
    if not body:
        raise FormatError("wrong_count", "empty response")
    # Anything outside a single comma-separated line of integers (prose,
    # code fences, extra lines) is rejected outright, never salvaged.
    if "\n" in body or "\r" in body:
        raise FormatError("extra_text", "response spans multiple lines")
    tokens = [t.strip() for t in body.split(",")]
    for tok in tokens:
        if tok and not _INT_TOKEN.fullmatch(tok) and not _looks_numeric(tok):
            raise FormatError("extra_text", f"non-numeric token {tok!r}")
    if len(tokens) != schema.arity:
        raise FormatError("wrong_count", f"expected {schema.arity} tokens, got {len(tokens)}")
    allowed = {str(v) for v in schema.value_domain}
    for i, tok in enumerate(tokens):
        if tok not in allowed:
            raise FormatError("bad_token", f"token {i} = {tok!r}")
    return LabelVector(schema, tuple(int(t) for t in tokens))


def _looks_numeric(tok: str) -> bool:
    # "+1", "1.0", "01" etc. are malformed numbers, not surrounding prose.
    return re.fullmatch(r"[+-]?[\d.]+", tok) is not None
