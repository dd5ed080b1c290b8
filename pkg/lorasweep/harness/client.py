"""
Chat-completions client for served merges.

Requests go to ``{base_url}{path}`` with an OpenAI-style body. Connection
errors, timeouts, 429 and 5xx responses are retried with exponential
backoff; any other error status fails at once.
"""

import json
import logging
import time
from dataclasses import dataclass
from typing import Any, Optional

import httpx
from tenacity import (
    RetryError,
    Retrying,
    before_sleep_log,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

from ..security.exceptions import EndpointError
from ..utils.config import EndpointSettings

logger = logging.getLogger(__name__)

TRANSIENT_STATUS = frozenset({429, 500, 502, 503, 504})


class TransientEndpointError(Exception):
    """Failure worth retrying."""


@dataclass(frozen=True)
class Completion:
    text: str
    model: str
    latency_ms: float
    attempts: int


class EndpointClient:
    """Synchronous client, safe to share between worker threads."""

    def __init__(
        self,
        settings: EndpointSettings,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.settings = settings
        self.logger = settings.logger or logger
        self.base_url = settings.resolved_base_url()
        headers = {"Content-Type": "application/json"}
        token = settings.api_key()
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(
            base_url=self.base_url,
            headers=headers,
            timeout=settings.timeout,
            transport=transport,
        )

    @property
    def url(self) -> str:
        return self.base_url + self.settings.path

    def __enter__(self) -> "EndpointClient":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def close(self) -> None:
        self._client.close()

    def complete(self, prompt: str, alpha: float) -> Completion:
        """Send one user message and return the assistant text.

        Raises:
            EndpointError: permanent failure or retries exhausted.
        """
        model = self.settings.model_for(alpha)
        body = {
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.settings.temperature,
            "max_tokens": self.settings.max_tokens,
        }
        retrying = Retrying(
            stop=stop_after_attempt(self.settings.max_retries + 1),
            wait=wait_exponential(
                multiplier=self.settings.backoff_initial,
                max=self.settings.backoff_max,
            ),
            retry=retry_if_exception_type(TransientEndpointError),
            before_sleep=before_sleep_log(self.logger, logging.WARNING),
        )
        start = time.perf_counter()
        try:
            payload = retrying(self._post, body)
        except RetryError as e:
            cause = e.last_attempt.exception()
            raise EndpointError(
                f"{self.url} failed after {self.settings.max_retries + 1} "
                f"attempts: {cause}"
            ) from cause
        latency = (time.perf_counter() - start) * 1000.0
        attempts = retrying.statistics.get("attempt_number", 1)
        return Completion(
            text=_message_text(payload, self.url),
            model=model,
            latency_ms=latency,
            attempts=attempts,
        )

    def _post(self, body: dict[str, Any]) -> dict[str, Any]:
        self.logger.debug(
            "POST %s request: %s", self.url, json.dumps(body, ensure_ascii=False)
        )
        try:
            response = self._client.post(self.settings.path, json=body)
        except httpx.TransportError as e:
            raise TransientEndpointError(f"{type(e).__name__}: {e}") from e

        self.logger.debug(
            "POST %s response %d: %s", self.url, response.status_code, response.text
        )
        if response.status_code in TRANSIENT_STATUS:
            raise TransientEndpointError(f"HTTP {response.status_code}")
        if response.is_error:
            raise EndpointError(
                f"{self.url} returned HTTP {response.status_code}: "
                f"{response.text[:200]}"
            )
        try:
            payload = response.json()
        except ValueError as e:
            raise EndpointError(f"{self.url} returned invalid JSON: {e}") from e
        if not isinstance(payload, dict):
            raise EndpointError(f"{self.url} returned a non-object JSON body")
        return payload


def _message_text(payload: dict[str, Any], url: str) -> str:
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        try:
            content = payload["choices"][0]["text"]
        except (KeyError, IndexError, TypeError):
            raise EndpointError(
                f"{url} response has no choices[0].message.content"
            ) from None
    return "" if content is None else str(content)
