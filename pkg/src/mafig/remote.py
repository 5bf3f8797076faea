"""Shared client for remote text-generation services.

One request per complete() call, no retries (retry policy belongs to the
decision stage). The native wire format is a JSON POST of {model, prompt,
temperature, top_p, max_tokens} answered by {text}; adapters map popular
chat-completion response shapes onto it. Credentials come from the
environment and never reach logs or output files.
"""

from __future__ import annotations

import json
import logging
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field

from .errors import RemoteError, RemoteMalformedResponse, RemoteStatusError, RemoteTimeout

log = logging.getLogger(__name__)

ENDPOINT_VAR = "MAFIG_REMOTE_ENDPOINT"
KEY_VAR = "MAFIG_REMOTE_KEY"

DEFAULT_TEMPERATURE = 0.9
DEFAULT_TOP_P = 0.95
DEFAULT_MAX_TOKENS = 2560
DEFAULT_TIMEOUT_S = 60.0


@dataclass
class ClientConfig:
    endpoint: str = ""
    credential: str = ""
    model: str = "local"
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    max_tokens: int = DEFAULT_MAX_TOKENS
    timeout_s: float = DEFAULT_TIMEOUT_S
    max_in_flight: int = 4
    last_latency_s: float = field(default=0.0, repr=False)

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise RemoteError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise RemoteError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise RemoteError("max_tokens must be >= 1")

    @classmethod
    def from_env(cls, **overrides) -> "ClientConfig":
        return cls(
            endpoint=os.environ.get(ENDPOINT_VAR, ""),
            credential=os.environ.get(KEY_VAR, ""),
            **overrides,
        )


def extract_text(body: dict) -> str:
    """Map the native shape and common chat-completion shapes to text."""
    if isinstance(body.get("text"), str):
        return body["text"]
    choices = body.get("choices")
    if isinstance(choices, list) and choices:
        first = choices[0]
        if isinstance(first, dict):
            if isinstance(first.get("text"), str):
                return first["text"]
            message = first.get("message")
            if isinstance(message, dict) and isinstance(message.get("content"), str):
                return message["content"]
    raise RemoteMalformedResponse("response carries no text field")


def complete(prompt: str, cfg: ClientConfig, transport=None) -> str:
    """Send one generation request and return the produced text.

    transport is injectable for tests: a callable(payload, cfg) -> dict.
    """
    if not cfg.endpoint and transport is None:
        raise RemoteError(f"no endpoint configured; set {ENDPOINT_VAR}")
    payload = {
        "model": cfg.model,
        "prompt": prompt,
        "temperature": cfg.temperature,
        "top_p": cfg.top_p,
        "max_tokens": cfg.max_tokens,
    }
    started = time.perf_counter()
    if transport is not None:
        body = transport(payload, cfg)
    else:
        body = _http_post(payload, cfg)
    cfg.last_latency_s = time.perf_counter() - started
    text = extract_text(body)
    log.debug("remote completion ok: model=%s endpoint=%s latency=%.3fs", cfg.model, cfg.endpoint, cfg.last_latency_s)
    return text


def _http_post(payload: dict, cfg: ClientConfig) -> dict:
    data = json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(
        cfg.endpoint,
        data=data,
        headers={
            "Content-Type": "application/json",
            **({"Authorization": f"Bearer {cfg.credential}"} if cfg.credential else {}),
        },
        method="POST",
    )
    try:
        with urllib.request.urlopen(request, timeout=cfg.timeout_s) as response:
            raw = response.read()
    except urllib.error.HTTPError as exc:
        raise RemoteStatusError(exc.code, exc.read().decode("utf-8", "replace")[:500]) from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, TimeoutError) or "timed out" in str(exc.reason):
            raise RemoteTimeout(f"request timed out after {cfg.timeout_s}s") from exc
        raise RemoteError(f"request failed: {exc.reason}") from exc
    except TimeoutError as exc:
        raise RemoteTimeout(f"request timed out after {cfg.timeout_s}s") from exc
    try:
        body = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RemoteMalformedResponse("response body is not JSON") from exc
    if not isinstance(body, dict):
        raise RemoteMalformedResponse("response body is not a JSON object")
    return body
