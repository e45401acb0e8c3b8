"""LLM provider access: one HTTP chat provider, one scripted provider.

The gateway owns query counting. Every logical query gets exactly one
QueryRecord with a gap-free sequence number, whether the provider answered,
timed out, or errored. Transport retries happen inside the provider and do
not create extra records.

The API credential is read from the environment at request time and goes
into the Authorization header only. It is never stored on config objects,
never logged, and never written to transcripts or session files.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .errors import (
    CredentialMissing,
    FixtureInvalid,
    GatewayError,
    ProviderError,
    ProviderTimeout,
    ScriptExhausted,
)
from .prompts import PromptEnvelope


@dataclass(frozen=True)
class ProviderConfig:
    endpoint: str
    model: str
    auth_source: str = "LLM_API_KEY"  # name of the env var, never the secret itself
    timeout: float = 60.0
    max_retries: int = 2
    retry_backoff: float = 1.0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class ChatTurn:
    role: str  # "system" | "user" | "assistant"
    content: str


@dataclass
class QueryRecord:
    sequence: int
    envelope_template: str
    request_chars: int
    response_chars: int
    latency: float
    outcome: str  # "ok" | "timed_out" | "provider_error"
    error: str | None = None


class Provider(Protocol):
    def complete(self, messages: list[ChatTurn], template_id: str) -> str: ...


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class HttpChatProvider:
    """OpenAI-style chat completions over HTTP.

    Retries transport failures and retryable statuses with doubling backoff,
    then gives up. The bearer token comes from the configured env var and is
    checked before any connection is attempted.
    """

    def __init__(
        self,
        config: ProviderConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._sleep = sleep
        self._client = httpx.Client(
            timeout=config.timeout, transport=transport, follow_redirects=False
        )

    def complete(self, messages: list[ChatTurn], template_id: str) -> str:
        token = os.environ.get(self.config.auth_source)
        if not token:
            raise CredentialMissing(
                f"environment variable {self.config.auth_source} is not set"
            )
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        body = {
            "model": self.config.model,
            "messages": [{"role": t.role, "content": t.content} for t in messages],
        }
        headers = {"Authorization": f"Bearer {token}"}

        attempts = self.config.max_retries + 1
        delay = self.config.retry_backoff
        last_error: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                self._sleep(delay)
                delay *= 2
            try:
                response = self._client.post(url, json=body, headers=headers)
            except httpx.TimeoutException as err:
                last_error = ProviderTimeout(f"request timed out: {err}")
                continue
            except httpx.HTTPError as err:
                last_error = ProviderError(f"transport failure: {err}")
                continue
            if response.status_code in _RETRYABLE_STATUS:
                last_error = ProviderError(
                    f"provider returned {response.status_code}",
                    status_code=response.status_code,
                )
                continue
            if response.status_code != 200:
                raise ProviderError(
                    f"provider returned {response.status_code}",
                    status_code=response.status_code,
                )
            return self._extract_content(response)
        assert last_error is not None
        raise last_error

    @staticmethod
    def _extract_content(response: httpx.Response) -> str:
        try:
            payload = response.json()
            content = payload["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as err:
            raise ProviderError(f"malformed provider response: {err}") from err
        if not isinstance(content, str):
            raise ProviderError("malformed provider response: content is not text")
        return content


@dataclass
class ScriptEntry:
    response: str
    template: str | None = None
    contains: str | None = None
    consumed: bool = False

    def matches(self, prompt_text: str, template_id: str) -> bool:
        if self.consumed:
            return False
        if self.template is not None and self.template != template_id:
            return False
        if self.contains is not None and self.contains not in prompt_text:
            return False
        return True


class ScriptedProvider:
    """Deterministic provider driven by an ordered list of canned responses.

    Each entry may constrain the template id, a prompt substring, or both.
    The first unconsumed matching entry answers and is used up. A prompt
    with no match fails loudly instead of improvising.
    """

    def __init__(self, entries: list[ScriptEntry]):
        self.entries = entries

    @classmethod
    def from_raw(cls, raw: list[dict]) -> ScriptedProvider:
        entries = []
        for i, item in enumerate(raw):
            if not isinstance(item, dict) or "response" not in item:
                raise FixtureInvalid(f"script entry #{i} must be an object with a response")
            match = item.get("match", {})
            entries.append(
                ScriptEntry(
                    response=item["response"],
                    template=match.get("template"),
                    contains=match.get("contains"),
                )
            )
        return cls(entries)

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedProvider:
        try:
            raw = json.loads(Path(path).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as err:
            raise FixtureInvalid(f"cannot load provider script {path}: {err}") from err
        if not isinstance(raw, list):
            raise FixtureInvalid(f"provider script {path} must be a JSON list")
        return cls.from_raw(raw)

    def remaining(self) -> int:
        return sum(1 for e in self.entries if not e.consumed)

    def complete(self, messages: list[ChatTurn], template_id: str) -> str:
        prompt_text = messages[-1].content if messages else ""
        for entry in self.entries:
            if entry.matches(prompt_text, template_id):
                entry.consumed = True
                return entry.response
        raise ScriptExhausted(
            f"no scripted response left for template {template_id} "
            f"({self.remaining()} unconsumed entries)"
        )


class LlmGateway:
    """Session-scoped wrapper that counts queries and keeps the records."""

    def __init__(self, provider: Provider, history_turn_budget: int | None = None):
        self.provider = provider
        self.history_turn_budget = history_turn_budget
        self.records: list[QueryRecord] = []
        self._next_sequence = 1

    @property
    def next_sequence(self) -> int:
        return self._next_sequence

    def ask(self, envelope: PromptEnvelope, history: list[ChatTurn]) -> tuple[str, QueryRecord]:
        """Send one logical query. Raises GatewayError with the record attached."""
        messages = list(history) + [ChatTurn("user", envelope.rendered_text)]
        if self.history_turn_budget is not None:
            messages = messages[-self.history_turn_budget :]
        record = QueryRecord(
            sequence=self._next_sequence,
            envelope_template=envelope.template_id.value,
            request_chars=sum(len(m.content) for m in messages),
            response_chars=0,
            latency=0.0,
            outcome="ok",
        )
        self._next_sequence += 1
        started = time.monotonic()
        try:
            text = self.provider.complete(messages, envelope.template_id.value)
        except GatewayError as err:
            record.latency = time.monotonic() - started
            record.outcome = "timed_out" if isinstance(err, ProviderTimeout) else "provider_error"
            record.error = str(err)
            self.records.append(record)
            err.record = record
            raise
        record.latency = time.monotonic() - started
        record.response_chars = len(text)
        self.records.append(record)
        return text, record
