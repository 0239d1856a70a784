"""Provider-agnostic chat-completion client.

Three interchangeable backends: LiveClient speaks the de-facto chat-completions
HTTP wire format, ReplayClient serves recorded fixtures with digest matching,
and RecordClient wraps a live-like client and captures a fixture. Every request
always carries the full conversation history.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol

import requests

from .errors import (
    CompletionTimeout,
    FixtureMiss,
    RateLimited,
    TransportFailure,
)

log = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")


@dataclass
class ChatMessage:
    role: str
    content: str

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> ChatMessage:
        return cls(role=d["role"], content=d["content"])


@dataclass
class Conversation:
    """An ordered transcript. The first message must be the system preamble."""

    messages: list[ChatMessage] = field(default_factory=list)

    def append(self, role: str, content: str) -> None:
        self.messages.append(ChatMessage(role, content))

    def validate(self) -> None:
        if self.messages and self.messages[0].role != "system":
            raise ValueError("conversation must start with a system message")
        for i, m in enumerate(self.messages):
            if m.role not in ROLES:
                raise ValueError(f"message {i} has unknown role {m.role!r}")
            if m.role in ("user", "assistant") and not m.content:
                raise ValueError(f"message {i} ({m.role}) has empty content")

    def copy(self) -> Conversation:
        return Conversation([ChatMessage(m.role, m.content) for m in self.messages])

    def to_list(self) -> list[dict[str, str]]:
        return [m.to_dict() for m in self.messages]

    @classmethod
    def from_list(cls, items: list[dict[str, str]]) -> Conversation:
        return cls([ChatMessage.from_dict(m) for m in items])


@dataclass
class CompletionParams:
    model: str = "gpt-4o"
    temperature: float = 0.2
    max_tokens: int = 2048
    timeout_seconds: int = 120

    def __post_init__(self) -> None:
        if not 0 <= self.temperature <= 2:
            raise ValueError("temperature must be in [0, 2]")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.timeout_seconds <= 0:
            raise ValueError("timeout_seconds must be positive")


DEFAULT_PARAMS = CompletionParams()


def digest(conv: Conversation) -> str:
    """Stable content digest over (role, content) pairs, whitespace-independent.

    The digest hashes our own compact serialization, so how a fixture or
    transcript file happened to be formatted can never change it.
    """
    payload = json.dumps(
        [[m.role, m.content] for m in conv.messages],
        separators=(",", ":"),
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class FixtureEntry:
    match_digest: str
    response: str


@dataclass
class Fixture:
    """Recorded exchanges, consumed strictly in order during replay."""

    entries: list[FixtureEntry] = field(default_factory=list)

    @classmethod
    def load(cls, path: str | Path) -> Fixture:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls([FixtureEntry(e["matchDigest"], e["response"]) for e in raw])

    def save(self, path: str | Path) -> None:
        raw = [{"matchDigest": e.match_digest, "response": e.response} for e in self.entries]
        Path(path).write_text(
            json.dumps(raw, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )


class ChatClient(Protocol):
    def complete(self, conv: Conversation, params: CompletionParams = DEFAULT_PARAMS) -> ChatMessage:
        ...


class LiveClient:
    """HTTP backend for any server speaking the /v1/chat/completions format."""

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self._api_key = api_key
        self._session = session or requests.Session()
        self._sleep = sleep

    def complete(self, conv: Conversation, params: CompletionParams = DEFAULT_PARAMS) -> ChatMessage:
        conv.validate()
        body = {
            "model": params.model,
            "messages": conv.to_list(),
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        url = f"{self.base_url}/v1/chat/completions"

        attempts = 3
        for attempt in range(1, attempts + 1):
            try:
                resp = self._session.post(
                    url, json=body, headers=headers, timeout=params.timeout_seconds
                )
            except requests.Timeout as exc:
                raise CompletionTimeout(str(exc)) from exc
            except requests.RequestException as exc:
                raise TransportFailure(str(exc)) from exc
            if resp.status_code == 429:
                if attempt == attempts:
                    raise RateLimited(f"rate limited after {attempts} attempts")
                backoff = 2 ** (attempt - 1)
                log.warning("rate limited, retrying in %ss (attempt %d)", backoff, attempt)
                self._sleep(backoff)
                continue
            if resp.status_code != 200:
                raise TransportFailure(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as exc:
                raise TransportFailure(f"malformed completion response: {exc}") from exc
            return ChatMessage("assistant", content)
        raise RateLimited(f"rate limited after {attempts} attempts")  # pragma: no cover


class ReplayClient:
    """Serves fixture entries in order; any digest mismatch fails loudly."""

    def __init__(self, fixture: Fixture):
        self._fixture = fixture
        self._cursor = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> ReplayClient:
        return cls(Fixture.load(path))

    @property
    def remaining(self) -> int:
        with self._lock:
            return len(self._fixture.entries) - self._cursor

    def complete(self, conv: Conversation, params: CompletionParams = DEFAULT_PARAMS) -> ChatMessage:
        conv.validate()
        got = digest(conv)
        with self._lock:
            if self._cursor >= len(self._fixture.entries):
                raise FixtureMiss(None, got)
            entry = self._fixture.entries[self._cursor]
            if entry.match_digest != got:
                raise FixtureMiss(entry.match_digest, got)
            self._cursor += 1
        return ChatMessage("assistant", entry.response)


class RecordClient:
    """Delegates to a live-like client and appends each exchange to a fixture."""

    def __init__(self, inner: ChatClient, fixture: Fixture | None = None):
        self.inner = inner
        self.fixture = fixture if fixture is not None else Fixture()
        self._lock = threading.Lock()

    def complete(self, conv: Conversation, params: CompletionParams = DEFAULT_PARAMS) -> ChatMessage:
        match = digest(conv)
        reply = self.inner.complete(conv, params)
        with self._lock:
            self.fixture.entries.append(FixtureEntry(match, reply.content))
        return reply

    def save(self, path: str | Path) -> None:
        self.fixture.save(path)


class ScriptedClient:
    """Returns canned responses in order; stands in for a live endpoint in
    tests and when regenerating bundled fixtures."""

    def __init__(self, responses: list[str]):
        self._responses = list(responses)
        self._cursor = 0
        self._lock = threading.Lock()
        self.calls: list[Conversation] = []

    def complete(self, conv: Conversation, params: CompletionParams = DEFAULT_PARAMS) -> ChatMessage:
        conv.validate()
        with self._lock:
            if self._cursor >= len(self._responses):
                raise TransportFailure(
                    f"scripted client exhausted after {len(self._responses)} responses"
                )
            self.calls.append(conv.copy())
            response = self._responses[self._cursor]
            self._cursor += 1
        return ChatMessage("assistant", response)


class CountingClient:
    """Wraps any client and counts completions; used for call-count audits."""

    def __init__(self, inner: ChatClient):
        self.inner = inner
        self.count = 0
        self._lock = threading.Lock()

    def complete(self, conv: Conversation, params: CompletionParams = DEFAULT_PARAMS) -> ChatMessage:
        reply = self.inner.complete(conv, params)
        with self._lock:
            self.count += 1
        return reply


def build_client(kind: str, **kwargs: Any) -> ChatClient:
    """Construct a backend by config name: live, replay, or record."""
    if kind == "live":
        return LiveClient(base_url=kwargs["base_url"], api_key=kwargs.get("api_key"))
    if kind == "replay":
        return ReplayClient.from_file(kwargs["fixture_path"])
    if kind == "record":
        inner = kwargs.get("inner") or LiveClient(
            base_url=kwargs["base_url"], api_key=kwargs.get("api_key")
        )
        return RecordClient(inner)
    raise ValueError(f"unknown backend kind {kind!r}")
