"""Deterministic in-process backends for offline runs and tests.

Every mock is a pure function of its request (plus construction-time
settings): identical requests always produce identical responses,
including the injected latency values, so whole runs replay byte-exact.
"""

from __future__ import annotations

import base64
import hashlib
import threading
from typing import Any

import numpy as np

from ..errors import ConfigError
from ..geometry import partition
from ..imaging import decode_image
from ..synthetic import DECOY_RGB, EVIDENCE_RGB, PlantedManifest
from .types import (
    AnswerRequest,
    AnswerResponse,
    Backend,
    EmbedRequest,
    EmbedResponse,
    ExplainRequest,
    ExplainResponse,
)

MOCK_DIMS = {"blip": 24, "clip": 32, "align": 40}

# fraction of a crop that must match a marker color for the embedding mocks
# to treat the crop as that marker
MARKER_DETECT_FRACTION = 0.3
# fraction of the planted cell that must still show evidence pixels for the
# answering mock to read the answer off the masked image
ANSWER_VISIBLE_FRACTION = 0.25

EXPLANATION_TRIGGER = "evidence marker"


def _digest(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
        h.update(b"\x1f")
    return h.digest()


def _mock_latency(kind: str, payload: bytes) -> float:
    d = _digest(kind.encode(), payload)
    return 0.01 + (int.from_bytes(d[:4], "big") % 491) / 10000.0


def _hash_vector(seed: bytes, dim: int) -> list[float]:
    values: list[float] = []
    counter = 0
    while len(values) < dim:
        block = _digest(seed, counter.to_bytes(4, "big"))
        for i in range(0, len(block) - 3, 4):
            word = int.from_bytes(block[i : i + 4], "big")
            values.append(word / 2147483647.5 - 1.0)
            if len(values) == dim:
                break
        counter += 1
    return values


def _axis_unit(dim: int, axis: int, sign: float = 1.0) -> tuple[float, ...]:
    v = [0.0] * dim
    v[axis] = sign
    return tuple(v)


def _marker_fraction(arr: np.ndarray, rgb: tuple[int, int, int]) -> float:
    if arr.size == 0:
        return 0.0
    return float((arr == np.array(rgb, dtype=np.uint8)).all(axis=2).mean())


def _check_embedders(ids: tuple[str, ...], dims: dict[str, int]) -> None:
    unknown = [e for e in ids if e not in dims]
    if unknown:
        raise ConfigError(f"unknown embedder ids: {unknown}")


class FixtureBackend:
    """Hash-seeded stand-in with optional canned explanations and answers.

    Text outputs come from lookup tables keyed by question when provided,
    otherwise from the question's digest. Embeddings are digest-seeded
    vectors, stable per (embedder, payload).
    """

    def __init__(
        self,
        seed: int = 0,
        explanations: dict[str, str] | None = None,
        answers: dict[str, str] | None = None,
        dims: dict[str, int] | None = None,
    ) -> None:
        self._seed = seed.to_bytes(8, "big", signed=True)
        self._explanations = dict(explanations or {})
        self._answers = dict(answers or {})
        self._dims = dict(dims or MOCK_DIMS)

    def explain(self, req: ExplainRequest) -> ExplainResponse:
        canned = self._explanations.get(req.question)
        if canned is None:
            d = _digest(self._seed, b"explain", req.question.encode())
            canned = f"Look near row {d[0] % 5 + 1}, column {d[1] % 7 + 1} for the printed value."
        return ExplainResponse(
            explanation=canned,
            latency_seconds=_mock_latency("explain", req.question.encode()),
        )

    def answer(self, req: AnswerRequest) -> AnswerResponse:
        canned = self._answers.get(req.question)
        if canned is None:
            d = _digest(self._seed, b"answer", req.question.encode())
            canned = f"value-{int.from_bytes(d[:2], 'big') % 10000:04d}"
        return AnswerResponse(
            answer=canned,
            latency_seconds=_mock_latency("answer", req.image_b64.encode()),
        )

    def embed(self, req: EmbedRequest) -> EmbedResponse:
        _check_embedders(req.embedder_ids, self._dims)
        payload = (req.text if req.modality == "text" else req.image_b64) or ""
        payload_bytes = payload.encode()
        vectors = {}
        for eid in req.embedder_ids:
            seed = _digest(self._seed, eid.encode(), req.modality.encode(), payload_bytes)
            vectors[eid] = tuple(_hash_vector(seed, self._dims[eid]))
        return EmbedResponse(
            vectors=vectors,
            latency_seconds=_mock_latency("embed", payload_bytes),
        )


class PlantedBackend:
    """Mock whose behavior is grounded in a planted-evidence corpus.

    Text embeddings of an explanation that names the evidence marker align
    with image embeddings of the marker's cell, so fusion should select the
    planted cell. The answering side reads the masked image only: it
    returns the reference answer iff the planted cell's evidence pixels
    survived masking. With adversarial=True the image embeddings invert
    (planted cell repels the explanation, decoy attracts it), which must
    drive answers to the sentinel and quality to zero if, and only if,
    answers really come from the masked image.
    """

    SENTINEL = "unknown"

    def __init__(
        self,
        manifest: PlantedManifest,
        adversarial: bool = False,
        dims: dict[str, int] | None = None,
    ) -> None:
        self._grid = manifest.grid
        self._by_question = manifest.by_question()
        self._adversarial = adversarial
        self._dims = dict(dims or MOCK_DIMS)

    def _record(self, question: str):
        rec = self._by_question.get(question)
        if rec is None:
            raise ConfigError(f"planted corpus has no record for question {question!r}")
        return rec

    def explain(self, req: ExplainRequest) -> ExplainResponse:
        rec = self._record(req.question)
        row, col = divmod(rec.planted_cell, self._grid.cols)
        text = (
            f"The {EXPLANATION_TRIGGER} sits at row {row + 1}, column {col + 1}. "
            "Everything needed appears inside that highlighted zone."
        )
        return ExplainResponse(
            explanation=text,
            latency_seconds=_mock_latency("explain", req.question.encode()),
        )

    def answer(self, req: AnswerRequest) -> AnswerResponse:
        rec = self._record(req.question)
        img = decode_image(base64.b64decode(req.image_b64))
        rect = partition(img.width, img.height, self._grid)[rec.planted_cell]
        region = img.to_array()[rect.top : rect.bottom, rect.left : rect.right]
        visible = _marker_fraction(region, EVIDENCE_RGB)
        text = rec.answer if visible >= ANSWER_VISIBLE_FRACTION else self.SENTINEL
        return AnswerResponse(
            answer=text,
            latency_seconds=_mock_latency("answer", req.image_b64.encode()),
        )

    def embed(self, req: EmbedRequest) -> EmbedResponse:
        _check_embedders(req.embedder_ids, self._dims)
        if req.modality == "text":
            vectors = {
                eid: self._embed_text(req.text or "", self._dims[eid])
                for eid in req.embedder_ids
            }
            latency_payload = (req.text or "").encode()
        else:
            arr = decode_image(base64.b64decode(req.image_b64 or "")).to_array()
            vectors = {
                eid: self._embed_image(arr, req.image_b64 or "", eid, self._dims[eid])
                for eid in req.embedder_ids
            }
            latency_payload = (req.image_b64 or "").encode()
        return EmbedResponse(
            vectors=vectors,
            latency_seconds=_mock_latency("embed", latency_payload),
        )

    def _embed_text(self, text: str, dim: int) -> tuple[float, ...]:
        if EXPLANATION_TRIGGER in text:
            return _axis_unit(dim, 0)
        seed = _digest(b"planted-text", text.encode())
        values = _hash_vector(seed, dim)
        values[0] = 0.0
        if not any(values):
            values[1] = 1.0
        return tuple(values)

    def _embed_image(
        self, arr: np.ndarray, payload: str, embedder_id: str, dim: int
    ) -> tuple[float, ...]:
        ev = _marker_fraction(arr, EVIDENCE_RGB)
        dc = _marker_fraction(arr, DECOY_RGB)
        if ev >= MARKER_DETECT_FRACTION:
            return _axis_unit(dim, 0, -1.0 if self._adversarial else 1.0)
        if dc >= MARKER_DETECT_FRACTION:
            return _axis_unit(dim, 0) if self._adversarial else _axis_unit(dim, 1)
        seed = _digest(b"planted-image", embedder_id.encode(), payload.encode())
        values = _hash_vector(seed, dim)
        values[0] = 0.0
        if not any(values):
            values[1] = 1.0
        return tuple(values)


class RecordingBackend:
    """Wrapper that logs every outgoing wire payload, then delegates."""

    def __init__(self, inner: Backend) -> None:
        self.inner = inner
        self.calls: list[tuple[str, dict[str, Any]]] = []
        self._lock = threading.Lock()

    def _log(self, kind: str, wire: dict[str, Any]) -> None:
        with self._lock:
            self.calls.append((kind, wire))

    def explain(self, req: ExplainRequest) -> ExplainResponse:
        self._log("explain", req.to_wire())
        return self.inner.explain(req)

    def answer(self, req: AnswerRequest) -> AnswerResponse:
        self._log("answer", req.to_wire())
        return self.inner.answer(req)

    def embed(self, req: EmbedRequest) -> EmbedResponse:
        self._log("embed", req.to_wire())
        return self.inner.embed(req)

    def calls_of(self, kind: str) -> list[dict[str, Any]]:
        with self._lock:
            return [wire for k, wire in self.calls if k == kind]
