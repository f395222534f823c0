"""Chat-completion backends (HTTP and scripted) with retry and token accounting."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import httpx

from .domain import Role
from .errors import (
    BackendError,
    BackendUnavailable,
    InvalidResponse,
    ScriptMiss,
    TransientBackendError,
)

log = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-4o-mini"
ENV_BASE_URL = "CAPCOT_BASE_URL"
ENV_API_KEY = "CAPCOT_API_KEY"
ENV_MODEL = "CAPCOT_MODEL"


@dataclass(frozen=True)
class DecodingConfig:
    temperature: float = 0.0
    max_tokens: int = 2048
    frequency_penalty: float = 0.0
    presence_penalty: float = 0.0
    nucleus_sampling: bool = False
    # only sent when nucleus_sampling is enabled
    top_p: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def with_temperature(self, t: float) -> "DecodingConfig":
        return replace(self, temperature=t)

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "frequency_penalty": self.frequency_penalty,
            "presence_penalty": self.presence_penalty,
            "nucleus_sampling": self.nucleus_sampling,
            "top_p": self.top_p,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DecodingConfig":
        known = {k: d[k] for k in cls().to_dict() if k in d}
        return cls(**known)


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class RequestTag:
    """Who is asking: used for scripted lookup and token bookkeeping. Never sent."""

    role: Role
    round: int = 0
    query_id: str = ""
    run_id: str = ""
    dataset: str = ""


@dataclass(frozen=True)
class CompletionRequest:
    model: str
    messages: tuple[Message, ...]
    decoding: DecodingConfig = DecodingConfig()
    tag: RequestTag | None = None

    def body(self) -> dict:
        d = self.decoding
        body = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": d.temperature,
            "max_tokens": d.max_tokens,
            "frequency_penalty": d.frequency_penalty,
            "presence_penalty": d.presence_penalty,
        }
        if d.nucleus_sampling:
            body["top_p"] = d.top_p
        return body

    def to_bytes(self) -> bytes:
        return json.dumps(self.body(), sort_keys=True, ensure_ascii=False).encode("utf-8")


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")


@dataclass(frozen=True)
class CompletionResponse:
    content: str
    usage: Usage = Usage()
    truncated: bool = False


class Backend(Protocol):
    def send(self, request: CompletionRequest) -> CompletionResponse: ...


# -- token ledger -----------------------------------------------------------


@dataclass(frozen=True)
class UsageRecord:
    run_id: str
    round: int
    role: str
    query_id: str
    prompt_tokens: int
    completion_tokens: int
    dataset: str = ""

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "round": self.round,
            "role": self.role,
            "query_id": self.query_id,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "dataset": self.dataset,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "UsageRecord":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


class TokenLedger:
    """Append-only usage log. Appends are serialized by a lock."""

    def __init__(self, records: Iterable[UsageRecord] = ()):
        self._records: list[UsageRecord] = list(records)
        self._lock = threading.Lock()

    def append(self, record: UsageRecord) -> None:
        with self._lock:
            self._records.append(record)

    @property
    def records(self) -> tuple[UsageRecord, ...]:
        with self._lock:
            return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def since(self, mark: int) -> tuple[UsageRecord, ...]:
        return self.records[mark:]

    def totals(self) -> Usage:
        recs = self.records
        return Usage(sum(r.prompt_tokens for r in recs), sum(r.completion_tokens for r in recs))


@dataclass(frozen=True)
class ReportRow:
    group: str
    records: int
    questions: int
    prompt_tokens: int
    completion_tokens: int

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def per_question(self, attr: str = "total_tokens") -> float:
        return getattr(self, attr) / self.questions if self.questions else 0.0

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "records": self.records,
            "questions": self.questions,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "total_tokens": self.total_tokens,
            "mean_prompt_per_question": self.per_question("prompt_tokens"),
            "mean_completion_per_question": self.per_question("completion_tokens"),
            "mean_total_per_question": self.per_question(),
        }


ALL_GROUP = "all"


def token_report(ledger: TokenLedger | Iterable[UsageRecord], group_by: str = "role") -> list[ReportRow]:
    """Aggregate usage per ``role``, ``round`` or ``dataset``.

    Rows are sorted by group key and followed by an ``all`` row. Per-question
    means divide by the number of distinct (run, query) pairs in the group.
    """
    if group_by not in ("role", "round", "dataset"):
        raise ValueError(f"cannot group by {group_by!r}")
    records = ledger.records if isinstance(ledger, TokenLedger) else tuple(ledger)
    groups: dict = {}
    for r in records:
        groups.setdefault(getattr(r, group_by), []).append(r)

    def row(name: str, recs) -> ReportRow:
        return ReportRow(
            group=name,
            records=len(recs),
            questions=len({(r.run_id, r.query_id) for r in recs}),
            prompt_tokens=sum(r.prompt_tokens for r in recs),
            completion_tokens=sum(r.completion_tokens for r in recs),
        )

    rows = [row(str(k), groups[k]) for k in sorted(groups)]
    rows.append(row(ALL_GROUP, records))
    return rows


# -- backends ---------------------------------------------------------------


def whitespace_tokens(text: str) -> int:
    return len(text.split())


ScriptKey = tuple  # (role value, round or None, query id)


class ScriptedBackend:
    """Pure lookup backend keyed by ``(role, round, query_id)``.

    A key with round ``None`` matches any round for that role and query.
    Every call is appended to :attr:`calls`.
    """

    def __init__(self, script: Mapping[tuple, str]):
        self.script: dict[ScriptKey, str] = {}
        for (role, rnd, qid), text in script.items():
            self.script[(Role(role).value, rnd, qid)] = text
        self.calls: list[CompletionRequest] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls({(e["role"], e.get("round"), e["query_id"]): e["text"] for e in entries})

    def send(self, request: CompletionRequest) -> CompletionResponse:
        self.calls.append(request)
        tag = request.tag
        if tag is None:
            raise ScriptMiss(None)
        key = (tag.role.value, tag.round, tag.query_id)
        text = self.script.get(key)
        if text is None:
            text = self.script.get((tag.role.value, None, tag.query_id))
        if text is None:
            raise ScriptMiss(key)
        prompt = sum(whitespace_tokens(m.content) for m in request.messages)
        return CompletionResponse(text, Usage(prompt, whitespace_tokens(text)))

    def count(self, role: Role | None = None) -> int:
        return sum(1 for c in self.calls if role is None or c.tag.role is role)


class OpenAIBackend:
    """Client for an OpenAI-compatible ``/v1/chat/completions`` endpoint."""

    def __init__(self, base_url: str, api_key: str | None = None, timeout: float = 120.0,
                 transport: httpx.BaseTransport | None = None):
        base = base_url.rstrip("/")
        if base.endswith("/v1"):
            base = base[:-3]
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(base_url=base, headers=headers, timeout=timeout, transport=transport)

    @classmethod
    def from_env(cls, **kwargs) -> "OpenAIBackend":
        url = os.environ.get(ENV_BASE_URL, "https://api.openai.com")
        return cls(url, os.environ.get(ENV_API_KEY), **kwargs)

    def close(self) -> None:
        self._client.close()

    def send(self, request: CompletionRequest) -> CompletionResponse:
        try:
            resp = self._client.post("/v1/chat/completions", content=request.to_bytes())
        except httpx.TimeoutException as exc:
            raise TransientBackendError(f"timeout: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransientBackendError(f"transport error: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return parse_completion(resp.json())
        except ValueError as exc:
            raise InvalidResponse(f"response is not JSON: {exc}") from exc


def parse_completion(payload: Mapping) -> CompletionResponse:
    """Read content and usage out of a chat-completions response body."""
    try:
        choice = payload["choices"][0]
        content = choice["message"]["content"]
        usage = payload.get("usage") or {}
        prompt = int(usage.get("prompt_tokens", 0))
        completion = int(usage.get("completion_tokens", 0))
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise InvalidResponse(f"malformed completion payload: {exc}") from exc
    truncated = choice.get("finish_reason") == "length"
    if content is None:
        content = ""
    if not isinstance(content, str):
        raise InvalidResponse("message content is not text")
    if not content and not truncated:
        raise InvalidResponse("empty content without truncation")
    try:
        usage_obj = Usage(prompt, completion)
    except ValueError as exc:
        raise InvalidResponse(str(exc)) from exc
    return CompletionResponse(content, usage_obj, truncated)


@dataclass
class Endpoint:
    """Where requests go: backend, model id, retry policy, usage ledger."""

    backend: Backend
    model: str = DEFAULT_MODEL
    ledger: TokenLedger = field(default_factory=TokenLedger)
    max_attempts: int = 3
    backoff: float = 1.0
    sleep: Callable[[float], None] = time.sleep


def complete(endpoint: Endpoint, request: CompletionRequest) -> CompletionResponse:
    """Send ``request`` with bounded exponential-backoff retries and log usage.

    Only :class:`TransientBackendError` is retried.
    """
    if not request.messages:
        raise ValueError("request has no messages")
    for attempt in range(endpoint.max_attempts):
        try:
            response = endpoint.backend.send(request)
            break
        except TransientBackendError as exc:
            if attempt + 1 >= endpoint.max_attempts:
                raise BackendUnavailable(f"gave up after {endpoint.max_attempts} attempts: {exc}") from exc
            delay = endpoint.backoff * 2**attempt
            log.warning("transient backend failure (%s); retrying in %.1fs", exc, delay)
            endpoint.sleep(delay)
    if response.truncated:
        log.warning("completion truncated at max_tokens=%d", request.decoding.max_tokens)
    tag = request.tag
    if tag is not None:
        endpoint.ledger.append(UsageRecord(
            run_id=tag.run_id, round=tag.round, role=tag.role.value, query_id=tag.query_id,
            prompt_tokens=response.usage.prompt_tokens,
            completion_tokens=response.usage.completion_tokens, dataset=tag.dataset,
        ))
    return response


def make_request(endpoint: Endpoint, prompt_text: str, decoding: DecodingConfig, tag: RequestTag) -> CompletionRequest:
    return CompletionRequest(endpoint.model, (Message("user", prompt_text),), decoding, tag)
