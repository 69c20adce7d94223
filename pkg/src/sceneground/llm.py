"""Chat-model backends: a deterministic scripted client for tests and a
provider-agnostic HTTP client for chat-completions endpoints."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Protocol, Sequence

import requests

from .errors import LlmTransportError, ScriptExhaustedError

if TYPE_CHECKING:
    from .engine import ChatTurn

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.completion_tokens


class LlmClient(Protocol):
    """Minimal chat interface the engine drives."""

    model_name: str

    def complete(self, turns: Sequence["ChatTurn"]) -> tuple[str, TokenUsage]:
        """Return the next assistant message and its token usage."""
        ...


class ScriptedClient:
    """Replays a fixed list of assistant responses, in order.

    Deterministic by construction: the incoming turns are ignored except for
    the usage estimate, so identical scripts always yield identical runs.
    """

    def __init__(self, responses: Sequence[str], model_name: str = "scripted"):
        self.model_name = model_name
        self._responses = list(responses)
        self._cursor = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedClient":
        """Load a script fixture: a JSON list of assistant responses."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, list) or not all(isinstance(r, str) for r in data):
            raise ValueError(f"{path}: script fixture must be a JSON list of strings")
        return cls(data, model_name=f"scripted:{Path(path).name}")

    @property
    def calls(self) -> int:
        return self._cursor

    @property
    def remaining(self) -> int:
        return len(self._responses) - self._cursor

    def complete(self, turns: Sequence["ChatTurn"]) -> tuple[str, TokenUsage]:
        with self._lock:
            if self._cursor >= len(self._responses):
                raise ScriptExhaustedError(
                    f"scripted backend exhausted after {self._cursor} responses"
                )
            response = self._responses[self._cursor]
            self._cursor += 1
        usage = TokenUsage(
            prompt_tokens=sum(len(t.content.split()) for t in turns),
            completion_tokens=len(response.split()),
        )
        return response, usage


class RateLimiter:
    """Spaces out calls to at most `requests_per_minute`, across threads."""

    def __init__(self, requests_per_minute: float):
        if requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be positive")
        self._interval = 60.0 / requests_per_minute
        self._lock = threading.Lock()
        self._next_slot = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            wait = self._next_slot - now
            self._next_slot = max(now, self._next_slot) + self._interval
        if wait > 0:
            time.sleep(wait)


class HttpChatClient:
    """Client for OpenAI-style chat-completions HTTP endpoints.

    The endpoint and model are configuration; the API key comes from an
    environment variable and is never stored in config files.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key_env: str = "OPENAI_API_KEY",
        temperature: float = 0.0,
        timeout: float = 120.0,
        max_attempts: int = 3,
        rate_limiter: RateLimiter | None = None,
        session: requests.Session | None = None,
    ):
        self.model_name = model
        self._url = base_url.rstrip("/") + "/chat/completions"
        self._api_key_env = api_key_env
        self._temperature = temperature
        self._timeout = timeout
        self._max_attempts = max_attempts
        self._rate_limiter = rate_limiter
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self._api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    @staticmethod
    def to_messages(turns: Sequence["ChatTurn"]) -> list[dict[str, str]]:
        """Map internal turns onto the wire roles. Execution-result turns ride
        as user messages because tool roles are not portable across providers."""
        messages = []
        for turn in turns:
            if turn.role == "tool":
                messages.append(
                    {"role": "user", "content": "Code execution result:\n" + turn.content}
                )
            else:
                messages.append({"role": turn.role, "content": turn.content})
        return messages

    def complete(self, turns: Sequence["ChatTurn"]) -> tuple[str, TokenUsage]:
        payload = {
            "model": self.model_name,
            "messages": self.to_messages(turns),
            "temperature": self._temperature,
        }
        last_error: Exception | None = None
        for attempt in range(self._max_attempts):
            if self._rate_limiter is not None:
                self._rate_limiter.acquire()
            try:
                response = self._session.post(
                    self._url, json=payload, headers=self._headers(), timeout=self._timeout
                )
                if response.status_code == 429 or response.status_code >= 500:
                    raise LlmTransportError(
                        f"HTTP {response.status_code}: {response.text[:200]}"
                    )
                response.raise_for_status()
                body = response.json()
                text = body["choices"][0]["message"]["content"] or ""
                usage = body.get("usage", {})
                return text, TokenUsage(
                    prompt_tokens=int(usage.get("prompt_tokens", 0)),
                    completion_tokens=int(usage.get("completion_tokens", 0)),
                )
            except (requests.RequestException, LlmTransportError, KeyError, ValueError) as exc:
                last_error = exc
                backoff = 2.0**attempt
                logger.warning(
                    "chat completion attempt %d/%d failed (%s); retrying in %.1fs",
                    attempt + 1,
                    self._max_attempts,
                    exc,
                    backoff,
                )
                if attempt + 1 < self._max_attempts:
                    time.sleep(backoff)
        raise LlmTransportError(f"chat completion failed after {self._max_attempts} attempts: {last_error}")
