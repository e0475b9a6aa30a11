"""Provider-agnostic chat-completion client with record/replay transport.

Every generation, verification, scoring, and judging call in the toolkit
goes through ``complete``/``complete_json``. The transport decides whether
a request hits the network (live), hits it and archives the exchange
(record), or is served purely from a cassette file (replay, zero I/O).
Cassettes are JSON-lines of ``{hash, tag, request, response}`` keyed by a
hash over messages, temperature, max_tokens, and tag.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import requests

ENV_ENDPOINT = "QDA_LLM_ENDPOINT"
ENV_MODEL = "QDA_LLM_MODEL"
ENV_KEY = "QDA_LLM_KEY"

DEFAULT_MAX_TOKENS = 1024
GENERATION_TEMPERATURE = 0.7
INFERENCE_TEMPERATURE = 0.1
RECHECK_TEMPERATURE = 1.0


class TransportError(RuntimeError):
    def __init__(self, message: str, tag: str) -> None:
        super().__init__(f"[{tag}] {message}")
        self.tag = tag


class CassetteMiss(KeyError):
    def __init__(self, tag: str, request_hash: str) -> None:
        super().__init__(f"[{tag}] no cassette entry for request {request_hash}")
        self.tag = tag
        self.request_hash = request_hash


class FormatError(ValueError):
    def __init__(self, message: str, raw: str) -> None:
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion request; ``tag`` names the pipeline step."""

    messages: tuple[tuple[str, str], ...]
    temperature: float = GENERATION_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    tag: str = "untagged"

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(tuple(m) for m in self.messages))
        if not self.messages:
            raise ValueError("a request needs at least one message")
        for role, _ in self.messages:
            if role not in ("system", "user", "assistant"):
                raise ValueError(f"unknown message role {role!r}")
        if not (math.isfinite(self.temperature) and self.temperature >= 0):
            raise ValueError("temperature must be finite and >= 0")

    def with_followup(self, role: str, text: str) -> "ChatRequest":
        return ChatRequest(
            self.messages + ((role, text),),
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            tag=self.tag,
        )


@dataclass(frozen=True)
class Transport:
    mode: str  # live | record | replay
    cassette_path: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.mode not in ("live", "record", "replay"):
            raise ValueError(f"unknown transport mode {self.mode!r}")
        if self.mode in ("record", "replay") and self.cassette_path is None:
            raise ValueError(f"{self.mode} transport needs a cassette_path")
        if self.cassette_path is not None:
            object.__setattr__(self, "cassette_path", Path(self.cassette_path))


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 0.5


def request_hash(req: ChatRequest) -> str:
    payload = json.dumps(
        {
            "messages": [list(m) for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
            "tag": req.tag,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


_write_lock = threading.Lock()
_cassette_cache: dict[tuple[str, int], dict[str, str]] = {}


def _load_cassette(path: Path) -> dict[str, str]:
    resolved = str(Path(path).resolve())
    try:
        stamp = os.stat(resolved).st_mtime_ns
    except FileNotFoundError:
        return {}
    key = (resolved, stamp)
    cached = _cassette_cache.get(key)
    if cached is not None:
        return cached
    entries: dict[str, str] = {}
    with open(resolved, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            entries[obj["hash"]] = obj["response"]
    _cassette_cache.clear()
    _cassette_cache[key] = entries
    return entries


def _append_cassette(path: Path, req: ChatRequest, digest: str, response: str) -> None:
    record = {
        "hash": digest,
        "tag": req.tag,
        "request": {
            "messages": [list(m) for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        },
        "response": response,
    }
    with _write_lock:
        existing = _load_cassette(path)
        if existing.get(digest) == response:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")


def _post_chat(payload: dict, endpoint: str, key: str, timeout: float = 60.0) -> str:
    """Single HTTP round trip; module-level so tests can stub it."""
    headers = {"Content-Type": "application/json"}
    if key:
        headers["Authorization"] = f"Bearer {key}"
    response = requests.post(endpoint, json=payload, headers=headers, timeout=timeout)
    response.raise_for_status()
    body = response.json()
    return body["choices"][0]["message"]["content"]


def _live_call(req: ChatRequest, retry: RetryPolicy) -> str:
    endpoint = os.environ.get(ENV_ENDPOINT, "")
    model = os.environ.get(ENV_MODEL, "")
    key = os.environ.get(ENV_KEY, "")
    if not endpoint:
        raise TransportError(f"{ENV_ENDPOINT} is not set", req.tag)
    payload = {
        "model": model,
        "messages": [{"role": r, "content": t} for r, t in req.messages],
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
    }
    last_error: Optional[Exception] = None
    for attempt in range(retry.max_attempts):
        try:
            return _post_chat(payload, endpoint, key)
        except (requests.RequestException, KeyError, ValueError) as exc:
            last_error = exc
            if attempt + 1 < retry.max_attempts:
                time.sleep(retry.base_delay * (2**attempt))
    raise TransportError(f"gave up after {retry.max_attempts} attempts: {last_error}", req.tag)


def complete(
    req: ChatRequest, transport: Transport, retry: RetryPolicy = RetryPolicy()
) -> str:
    """Return model text for a request under the given transport."""
    digest = request_hash(req)
    if transport.mode == "replay":
        entries = _load_cassette(transport.cassette_path)
        if digest not in entries:
            raise CassetteMiss(req.tag, digest)
        return entries[digest]
    text = _live_call(req, retry)
    if transport.mode == "record":
        _append_cassette(transport.cassette_path, req, digest, text)
    return text


_FORMAT_REMINDER = (
    "Reply with a single JSON object only, no prose, containing the fields: {fields}."
)


def complete_json(
    req: ChatRequest,
    transport: Transport,
    required_fields: list[str],
    retry: RetryPolicy = RetryPolicy(),
) -> dict[str, Any]:
    """Complete and parse the first JSON object out of the response.

    When the response has no JSON object or misses a required field, one
    re-prompt with a format reminder is attempted before FormatError.
    """
    text = complete(req, transport, retry)
    obj = _extract_json_object(text)
    if obj is not None and all(f in obj for f in required_fields):
        return obj
    reminder = _FORMAT_REMINDER.format(fields=", ".join(required_fields))
    retry_req = req.with_followup("user", reminder)
    text2 = complete(retry_req, transport, retry)
    obj = _extract_json_object(text2)
    if obj is not None and all(f in obj for f in required_fields):
        return obj
    raise FormatError(
        f"[{req.tag}] no JSON object with fields {required_fields} after retry",
        raw=text2,
    )


def _extract_json_object(text: str) -> Optional[dict]:
    """Find and parse the first balanced JSON object in free-form text."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[start : i + 1]
                    try:
                        obj = json.loads(candidate)
                    except json.JSONDecodeError:
                        break
                    if isinstance(obj, dict):
                        return obj
                    break
        start = text.find("{", start + 1)
    return None


_INT_RE = re.compile(r"-?\d+")


def extract_int(text: str) -> Optional[int]:
    """First integer in a free-form reply, e.g. '7/10' gives 7."""
    match = _INT_RE.search(text)
    return int(match.group()) if match else None
