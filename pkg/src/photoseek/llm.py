"""Minimal chat-completions client with retry and backoff.

The wire format is the common one: POST {base_url}/chat/completions with a
JSON body {"model", "messages", "temperature"} and the completion read from
choices[0].message.content. Decoding is always greedy (temperature 0) so a
given prompt maps to a stable completion on well-behaved endpoints.

Transport, sleeping, and jitter are injectable, which keeps retry behavior
testable without wall-clock delays or a live service.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass
from typing import Callable

from .errors import LlmTransportError

_RETRYABLE_STATUS = {429}


@dataclass
class LlmEndpointConfig:
    base_url: str
    model: str
    api_key: str | None = None
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0


def _default_post(url: str, payload: dict, headers: dict, timeout: float):
    """POST JSON and return (status_code, parsed_body_or_None)."""
    import requests

    response = requests.post(url, json=payload, headers=headers, timeout=timeout)
    try:
        body = response.json()
    except ValueError:
        body = None
    return response.status_code, body


class LlmClient:
    def __init__(
        self,
        config: LlmEndpointConfig,
        post_fn: Callable | None = None,
        sleep_fn: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.config = config
        self.post_fn = post_fn or _default_post
        self.sleep_fn = sleep_fn
        self.rng = rng or random.Random()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        return headers

    def complete(self, prompt: str) -> str:
        """Run one greedy completion, retrying transient failures.

        Retries cover network errors, 5xx, 429, and malformed response
        envelopes, with exponential backoff (base doubling per attempt plus
        uniform jitter). Other 4xx statuses fail immediately since they will
        not heal on retry. Raises LlmTransportError once retries run out.
        """
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        import requests

        last_error = "no attempt made"
        attempts = self.config.max_retries + 1
        for attempt in range(attempts):
            if attempt > 0:
                delay = self.config.backoff_base * (2 ** (attempt - 1))
                delay += self.rng.uniform(0, self.config.backoff_base / 2)
                self.sleep_fn(delay)
            try:
                status, body = self.post_fn(url, payload, self._headers(), self.config.timeout)
            except requests.RequestException as exc:
                last_error = f"request failed: {exc}"
                continue
            if status in _RETRYABLE_STATUS or status >= 500:
                last_error = f"HTTP {status}"
                continue
            if status != 200:
                raise LlmTransportError(f"chat endpoint returned HTTP {status}")
            try:
                content = body["choices"][0]["message"]["content"]
            except (TypeError, KeyError, IndexError):
                last_error = "response missing choices[0].message.content"
                continue
            if not isinstance(content, str):
                last_error = "completion content is not a string"
                continue
            return content
        raise LlmTransportError(
            f"chat endpoint failed after {attempts} attempts: {last_error}"
        )
