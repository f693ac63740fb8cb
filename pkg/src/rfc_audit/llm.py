"""Chat-completion client with live, record, replay, and scripted-mock backends.

Every shipped code path pins temperature to 0.0 (greedy decoding); the knob is
deliberately absent from configuration. Credentials come only from an
environment variable and are never written to cassettes: a cassette stores the
canonical request payload, which carries no auth material.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .errors import (
    CassetteExhaustedError,
    ConfigError,
    ReplayMismatchError,
    TransportError,
)
from .util import atomic_write_text, canonical_json, estimate_tokens, sha256_text

CASSETTE_VERSION = 1
FIXED_TEMPERATURE = 0.0


@dataclass(frozen=True)
class Message:
    role: str  # "user" | "assistant"
    content: str


@dataclass(frozen=True)
class ChatRequest:
    model_tag: str
    system: str
    messages: tuple[Message, ...]
    tools: tuple[str, ...] = ()
    max_output_tokens: int = 4096

    # pinned; no shipped code path passes anything else
    temperature: float = FIXED_TEMPERATURE

    def payload(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "system": self.system,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "tools": list(self.tools),
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
        }

    @property
    def request_hash(self) -> str:
        return sha256_text(canonical_json(self.payload()))

    @property
    def prompt_chars(self) -> int:
        return len(self.system) + sum(len(m.content) for m in self.messages)


def request(model_tag: str, system: str, user: str, tools: Sequence[str] = (),
            max_output_tokens: int = 4096) -> ChatRequest:
    """Single-turn request helper; the agent rebuilds full context every call."""
    return ChatRequest(
        model_tag=model_tag,
        system=system,
        messages=(Message("user", user),),
        tools=tuple(tools),
        max_output_tokens=max_output_tokens,
    )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    input_tokens: int
    output_tokens: int
    wall_time: float
    model_tag: str


@dataclass(frozen=True)
class Rates:
    input_per_mtok: float = 3.0
    output_per_mtok: float = 15.0


@dataclass(frozen=True)
class UsageStats:
    input_tokens: int = 0
    output_tokens: int = 0
    call_count: int = 0
    wall_time: float = 0.0
    cost: float = 0.0

    def as_dict(self) -> dict:
        return {
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "call_count": self.call_count,
            "wall_time": round(self.wall_time, 6),
            "cost": round(self.cost, 6),
        }


def cost_of(input_tokens: int, output_tokens: int, rates: Rates) -> float:
    return (
        input_tokens / 1_000_000 * rates.input_per_mtok
        + output_tokens / 1_000_000 * rates.output_per_mtok
    )


class Ledger:
    """Per-call usage records; internally synchronized for concurrent callers."""

    def __init__(self):
        self._lock = threading.Lock()
        self._calls: list[dict] = []

    def add(self, request_hash: str, response: ChatResponse) -> None:
        with self._lock:
            self._calls.append(
                {
                    "request_hash": request_hash,
                    "input_tokens": response.input_tokens,
                    "output_tokens": response.output_tokens,
                    "wall_time": response.wall_time,
                }
            )

    def __len__(self) -> int:
        with self._lock:
            return len(self._calls)

    def calls(self) -> list[dict]:
        with self._lock:
            return list(self._calls)

    def totals(self, rates: Rates, since: int = 0) -> UsageStats:
        with self._lock:
            calls = self._calls[since:]
        tin = sum(c["input_tokens"] for c in calls)
        tout = sum(c["output_tokens"] for c in calls)
        return UsageStats(
            input_tokens=tin,
            output_tokens=tout,
            call_count=len(calls),
            wall_time=sum(c["wall_time"] for c in calls),
            cost=cost_of(tin, tout, rates),
        )


def meter(ledger: Ledger, rates: Rates, since: int = 0) -> UsageStats:
    """Aggregate the per-call ledger into totals; cost = tokens x configured rates."""
    return ledger.totals(rates, since)


# --- cassette ---------------------------------------------------------------


@dataclass
class Cassette:
    version: int = CASSETTE_VERSION
    records: list[dict] = field(default_factory=list)

    def append(self, req: ChatRequest, resp: ChatResponse) -> None:
        self.records.append(
            {
                "request_hash": req.request_hash,
                "request": req.payload(),
                "response": {"text": resp.text, "model_tag": resp.model_tag},
                "usage": {
                    "input_tokens": resp.input_tokens,
                    "output_tokens": resp.output_tokens,
                    "wall_time": resp.wall_time,
                },
            }
        )

    def save(self, path: str | Path) -> None:
        atomic_write_text(
            Path(path),
            json.dumps(
                {"version": self.version, "records": self.records},
                indent=2,
                ensure_ascii=False,
            )
            + "\n",
        )

    @classmethod
    def load(cls, path: str | Path) -> "Cassette":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ConfigError(f"corrupt cassette file {path}: {exc}") from exc
        if not isinstance(data, dict) or data.get("version") != CASSETTE_VERSION:
            raise ConfigError(
                f"cassette {path} has version {data.get('version')}, "
                f"expected {CASSETTE_VERSION}"
            )
        return cls(version=data["version"], records=data["records"])


# --- backends ---------------------------------------------------------------


class LiveBackend:
    """OpenAI-style chat completions over HTTP with exponential-backoff retries."""

    def __init__(
        self,
        api_base: str,
        api_key_env: str = "RFC_AUDIT_API_KEY",
        max_retries: int = 3,
        timeout: float = 120.0,
    ):
        self.api_base = api_base.rstrip("/")
        self.api_key_env = api_key_env
        self.max_retries = max_retries
        self.timeout = timeout

    def send(self, req: ChatRequest) -> ChatResponse:
        import requests

        key = os.environ.get(self.api_key_env)
        if not key:
            raise TransportError(f"no API key in ${self.api_key_env}")
        body = {
            "model": req.model_tag,
            "messages": [{"role": "system", "content": req.system}]
            + [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        delay = 1.0
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            started = time.monotonic()
            try:
                resp = requests.post(
                    f"{self.api_base}/chat/completions",
                    json=body,
                    headers={"Authorization": f"Bearer {key}"},
                    timeout=self.timeout,
                )
                if resp.status_code in (408, 429) or resp.status_code >= 500:
                    raise TransportError(f"transient HTTP {resp.status_code}")
                resp.raise_for_status()
                data = resp.json()
                usage = data.get("usage", {})
                return ChatResponse(
                    text=data["choices"][0]["message"]["content"],
                    input_tokens=int(usage.get("prompt_tokens", 0)),
                    output_tokens=int(usage.get("completion_tokens", 0)),
                    wall_time=time.monotonic() - started,
                    model_tag=data.get("model", req.model_tag),
                )
            except Exception as exc:  # noqa: BLE001 - retried, then re-raised typed
                last_exc = exc
                if attempt < self.max_retries:
                    time.sleep(delay)
                    delay *= 2
        raise TransportError(f"exhausted {self.max_retries} retries: {last_exc}")


class MockBackend:
    """Scripted responder: a callable keyed on the request, or a canned sequence."""

    def __init__(self, script: Callable[[ChatRequest], str] | Sequence[str]):
        if callable(script):
            self._fn = script
            self._queue = None
        else:
            self._fn = None
            self._queue = list(script)
        self._lock = threading.Lock()

    def send(self, req: ChatRequest) -> ChatResponse:
        if self._fn is not None:
            text = self._fn(req)
        else:
            with self._lock:
                if not self._queue:
                    raise CassetteExhaustedError("mock script ran out of responses")
                text = self._queue.pop(0)
        return ChatResponse(
            text=text,
            input_tokens=estimate_tokens(req.system) + sum(
                estimate_tokens(m.content) for m in req.messages
            ),
            output_tokens=estimate_tokens(text),
            wall_time=0.0,
            model_tag=req.model_tag,
        )


class ReplayBackend:
    """Strict in-order replay; a hash mismatch is a determinism error, not a miss.

    Calls are serialized on a lock to preserve cassette order, so replay runs
    are effectively sequential.
    """

    def __init__(self, cassette: Cassette):
        self.cassette = cassette
        self._pos = 0
        self._lock = threading.Lock()

    def send(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            if self._pos >= len(self.cassette.records):
                raise CassetteExhaustedError(
                    f"cassette exhausted after {self._pos} records"
                )
            record = self.cassette.records[self._pos]
            want = record["request_hash"]
            got = req.request_hash
            if want != got:
                raise ReplayMismatchError(want, got, self._pos)
            self._pos += 1
        usage = record["usage"]
        return ChatResponse(
            text=record["response"]["text"],
            input_tokens=usage["input_tokens"],
            output_tokens=usage["output_tokens"],
            wall_time=usage["wall_time"],
            model_tag=record["response"]["model_tag"],
        )


class RecordBackend:
    """Pass-through that appends every exchange to a cassette file."""

    def __init__(self, inner, cassette_path: str | Path):
        self.inner = inner
        self.cassette_path = Path(cassette_path)
        self.cassette = Cassette()
        self._lock = threading.Lock()

    def send(self, req: ChatRequest) -> ChatResponse:
        resp = self.inner.send(req)
        with self._lock:
            self.cassette.append(req, resp)
            self.cassette.save(self.cassette_path)
        return resp


class LlmClient:
    """Uniform completion interface over one backend, with a shared usage ledger."""

    def __init__(self, backend, rates: Rates | None = None):
        self.backend = backend
        self.rates = rates or Rates()
        self.ledger = Ledger()

    @property
    def serial_only(self) -> bool:
        """Replay (and record-of-replay) must run one call at a time."""
        inner = getattr(self.backend, "inner", None)
        return isinstance(self.backend, ReplayBackend) or isinstance(inner, ReplayBackend)

    def complete(self, req: ChatRequest) -> ChatResponse:
        resp = self.backend.send(req)
        self.ledger.add(req.request_hash, resp)
        return resp

    def usage(self, since: int = 0) -> UsageStats:
        return meter(self.ledger, self.rates, since)

    def mark(self) -> int:
        return len(self.ledger)
