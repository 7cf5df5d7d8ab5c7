"""HTTP client for the inference wire contract.

All three operations POST JSON and read JSON back. Transport failures and
5xx responses are retried with exponential backoff; 4xx and malformed
bodies are contract violations and fail immediately.
"""

from __future__ import annotations

import threading
import time
from typing import Any

import requests

from ..errors import BackendUnavailableError, ConfigError, ProtocolError
from .types import (
    AnswerRequest,
    AnswerResponse,
    BackendConfig,
    DimGuard,
    EmbedRequest,
    EmbedResponse,
    ExplainRequest,
    ExplainResponse,
    validate_vectors,
)

EXPLAIN_PATH = "/v1/explain"
ANSWER_PATH = "/v1/answer"
EMBED_PATH = "/v1/embed"


def probe(base_url: str, timeout: float = 5.0) -> bool:
    """True when the host answers HTTP at all, regardless of status code."""
    try:
        requests.get(base_url, timeout=timeout)
    except requests.RequestException:
        return False
    return True


class HttpBackend:
    """Wire-contract client bound to one base URL.

    Thread-safe; a semaphore caps concurrent in-flight requests. Latency is
    the wall clock of the successful attempt only, so retries do not inflate
    timing statistics.
    """

    def __init__(
        self,
        config: BackendConfig,
        session: requests.Session | None = None,
        backoff_base: float = 0.25,
    ) -> None:
        self.config = config
        self._session = session or requests.Session()
        self._backoff_base = backoff_base
        self._gate = threading.Semaphore(config.max_inflight)
        self._dims = DimGuard()

    def _post(self, path: str, payload: dict[str, Any]) -> tuple[dict[str, Any], float]:
        url = self.config.base_url.rstrip("/") + path
        attempts = self.config.retries + 1
        last_failure = "no attempts made"
        for attempt in range(attempts):
            if attempt > 0:
                time.sleep(self._backoff_base * 2 ** (attempt - 1))
            started = time.perf_counter()
            try:
                with self._gate:
                    resp = self._session.post(url, json=payload, timeout=self.config.timeout)
            except requests.RequestException as exc:
                last_failure = f"transport error: {exc}"
                continue
            latency = time.perf_counter() - started
            if resp.status_code == 200:
                try:
                    body = resp.json()
                except ValueError as exc:
                    raise ProtocolError(f"{path}: response body is not JSON: {exc}") from exc
                if not isinstance(body, dict):
                    raise ProtocolError(f"{path}: response body is not a JSON object")
                return body, latency
            if resp.status_code >= 500:
                last_failure = f"server error {resp.status_code}"
                continue
            # 4xx: the server understood us and said no; retrying cannot help
            raise ProtocolError(f"{path}: status {resp.status_code}: {_error_text(resp)}")
        raise BackendUnavailableError(f"{url} unreachable after {attempts} attempts ({last_failure})")

    def explain(self, req: ExplainRequest) -> ExplainResponse:
        body, latency = self._post(EXPLAIN_PATH, req.to_wire())
        explanation = body.get("explanation")
        if not isinstance(explanation, str) or not explanation.strip():
            raise ProtocolError(f"{EXPLAIN_PATH}: missing or empty 'explanation' field")
        return ExplainResponse(explanation=explanation, latency_seconds=latency)

    def answer(self, req: AnswerRequest) -> AnswerResponse:
        body, latency = self._post(ANSWER_PATH, req.to_wire())
        answer = body.get("answer")
        if not isinstance(answer, str):
            raise ProtocolError(f"{ANSWER_PATH}: missing 'answer' field")
        return AnswerResponse(answer=answer, latency_seconds=latency)

    def embed(self, req: EmbedRequest) -> EmbedResponse:
        unknown = [e for e in req.embedder_ids if e not in self.config.embedder_ids]
        if unknown:
            raise ConfigError(f"unknown embedder ids: {unknown}")
        body, latency = self._post(EMBED_PATH, req.to_wire())
        vectors = validate_vectors(req, body.get("vectors"))
        for eid, vec in vectors.items():
            self._dims.check(eid, len(vec))
        return EmbedResponse(vectors=vectors, latency_seconds=latency)


def _error_text(resp: requests.Response) -> str:
    try:
        body = resp.json()
        if isinstance(body, dict) and isinstance(body.get("error"), str):
            return body["error"]
    except ValueError:
        pass
    return resp.text[:200]
