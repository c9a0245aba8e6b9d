"""Extraction loop: query, verify, back off, retry, flag."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .clients import LLMClient
from .parsing import FormatError, parse_label_response
from .prompts import system_prompt
from .schemas import LabelSchema, LabelVector

log = logging.getLogger(__name__)

OK = "ok"
FLAGGED = "flagged_for_review"


@dataclass
class Backoff:
    base_delay: float = 0.5
    factor: float = 2.0

    def delay(self, attempt: int) -> float:
        """Wait after failed attempt number ``attempt`` (1-based)."""
        return self.base_delay * self.factor ** (attempt - 1)


@dataclass
class ExtractionOutcome:
    status: str
    labels: LabelVector | None
    attempts: int
    raw_responses: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == OK


def extract_with_retry(
    client: LLMClient,
    report: str,
    schema: LabelSchema,
    max_attempts: int = 3,
    backoff: Backoff | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> ExtractionOutcome:
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    backoff = backoff or Backoff()
    system = system_prompt(schema)
    raw, errors = [], []
    for attempt in range(1, max_attempts + 1):
        try:
            text = client.send(system, report)
        except Exception as exc:  # transport failures count as attempts
            errors.append(f"transport: {exc}")
        else:
            raw.append(text)
            try:
                labels = parse_label_response(text, schema)
                return ExtractionOutcome(OK, labels, attempt, raw, errors)
            except FormatError as exc:
                errors.append(str(exc))
        if attempt < max_attempts:
            sleep(backoff.delay(attempt))
    log.warning("flagging report for manual review after %d attempts", max_attempts)
    return ExtractionOutcome(FLAGGED, None, max_attempts, raw, errors)


def extract_corpus(
    client: LLMClient,
    reports: dict[str, str],
    schema: LabelSchema,
    max_attempts: int = 3,
    backoff: Backoff | None = None,
    workers: int = 1,
    sleep: Callable[[float], None] = time.sleep,
) -> dict[str, ExtractionOutcome]:
    """Label every report; result order follows the input mapping."""
    ids = list(reports)

    def one(sid):
        return extract_with_retry(client, reports[sid], schema, max_attempts, backoff, sleep)

    if workers <= 1:
        results = [one(sid) for sid in ids]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, ids))
    return dict(zip(ids, results))


def write_label_file(outcomes: dict[str, ExtractionOutcome], schema: LabelSchema, path) -> None:
    with open(path, "w") as fh:
        for sid, oc in outcomes.items():
            rec = {
                "study_id": sid,
                "labels": list(oc.labels.values) if oc.ok else [],
                "schema": schema.name,
                "status": "ok" if oc.ok else "flagged",
            }
            fh.write(json.dumps(rec) + "\n")


def read_label_file(path, schema: LabelSchema) -> dict[str, LabelVector | None]:
    """Map study_id -> labels (None for flagged studies)."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            if rec["schema"] != schema.name:
                raise ValueError(f"schema {rec['schema']!r} != {schema.name!r}")
            if rec["status"] == "ok":
                out[rec["study_id"]] = LabelVector(schema, rec["labels"])
            elif rec["status"] == "flagged":
                out[rec["study_id"]] = None
            else:
                raise ValueError(f"bad status {rec['status']!r}")
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out
