"""LLM clients: an OpenAI-compatible HTTP client and an offline keyword mock."""

from __future__ import annotations

import os
import re
from abc import ABC, abstractmethod

import requests


class LLMClient(ABC):
    @abstractmethod
    def send(self, system: str, user: str) -> str:
        """Return the raw text of the model's reply."""


class TransportError(RuntimeError):
    pass


class ChatCompletionsClient(LLMClient):
    """Client for any endpoint speaking the ``/chat/completions`` JSON shape.

    The API key is read from the environment variable named by
    ``api_key_env`` at call time and never stored in configs.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "LLM_API_KEY",
        timeout: float = 60.0,
        temperature: float = 0.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.temperature = temperature
        self.session = session or requests.Session()

    def request_body(self, system: str, user: str) -> dict:
        return {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }

    def send(self, system: str, user: str) -> str:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self.session.post(
                f"{self.base_url}/chat/completions",
                json=self.request_body(system, user),
                headers=headers,
                timeout=self.timeout,
            )
            resp.raise_for_status()
            payload = resp.json()
            return payload["choices"][0]["message"]["content"]
        except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
            raise TransportError(str(exc)) from exc


_ITEM = re.compile(r"^\s*\d+\.\s+(.+?)\s*$")
_NEGATION = re.compile(r"\b(no|not|without|negative for|free of)\b", re.IGNORECASE)


def categories_from_prompt(system: str) -> list[str]:
    """Recover the ordered category list from a rendered system prompt."""
    cats = []
    lines = system.splitlines()
    for i, line in enumerate(lines):
        m = _ITEM.match(line)
        if not m:
            continue
        item = m.group(1)
        # Wrapped visual items continue on the next line.
        if "(" not in item and i + 1 < len(lines) and lines[i + 1].strip().startswith("("):
            item = f"{item} {lines[i + 1].strip()}"
        key = re.search(r"\(([^()]+)\)\s*$", item)
        cats.append(key.group(1) if key else item)
    return cats


def split_sentences(text: str) -> list[str]:
    return [s for s in re.split(r"(?<=[.!?])\s+", text.strip()) if s]


class KeywordMockClient(LLMClient):
    """Deterministic offline stand-in for an LLM labeler.

    Reads the category list out of the system prompt, then per category:
    a mentioning sentence with a negation cue gives 0, without one gives 1,
    no mention gives -1 (0 for binary prompts). Underscores in category
    keys match spaces in the report.
    """

    def __init__(self):
        self.calls = 0

    def send(self, system: str, user: str) -> str:
        self.calls += 1
        binary = "binary digits" in system
        sentences = [s.lower() for s in split_sentences(user)]
        out = []
        for cat in categories_from_prompt(system):
            phrase = cat.replace("_", " ").lower()
            pattern = re.compile(rf"\b{re.escape(phrase)}\b")
            hits = [s for s in sentences if pattern.search(s)]
            if not hits:
                out.append(0 if binary else -1)
            elif all(_NEGATION.search(s) for s in hits):
                out.append(0)
            else:
                out.append(1)
        return ",".join(str(v) for v in out)
