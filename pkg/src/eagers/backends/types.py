"""Request/response types for the inference boundary.

Wire field names here are normative: any server implementing the contract
must accept exactly these JSON shapes. AnswerRequest deliberately has no
field for an explanation, so the answering model can never see one.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Any, Protocol, runtime_checkable

from ..errors import ConfigError, ProtocolError

DEFAULT_EMBEDDER_IDS = ("blip", "clip", "align")
DEFAULT_MODEL_ID = "qwen2.5-vl-3b"


@dataclass(frozen=True, slots=True)
class BackendConfig:
    """Connection and ensemble settings for one inference backend."""

    base_url: str
    timeout: float = 60.0
    retries: int = 2
    embedder_ids: tuple[str, ...] = DEFAULT_EMBEDDER_IDS
    model_id: str = DEFAULT_MODEL_ID
    max_inflight: int = 4

    def __post_init__(self) -> None:
        if not self.embedder_ids:
            raise ConfigError("backend needs at least one embedder id")
        if len(set(self.embedder_ids)) != len(self.embedder_ids):
            raise ConfigError(f"duplicate embedder ids: {list(self.embedder_ids)}")
        if self.retries < 0:
            raise ConfigError(f"retries must be non-negative, got {self.retries}")
        if self.timeout <= 0:
            raise ConfigError(f"timeout must be positive, got {self.timeout}")
        if self.max_inflight < 1:
            raise ConfigError(f"max_inflight must be positive, got {self.max_inflight}")


@dataclass(frozen=True, slots=True)
class ExplainRequest:
    image_b64: str
    question: str
    prompt_id: str
    model_id: str

    def __post_init__(self) -> None:
        if not self.image_b64:
            raise ConfigError("explain request needs image data")
        if not self.question.strip():
            raise ConfigError("explain request needs a non-empty question")

    def to_wire(self) -> dict[str, Any]:
        return {
            "image_b64": self.image_b64,
            "question": self.question,
            "prompt_id": self.prompt_id,
            "model_id": self.model_id,
        }


@dataclass(frozen=True, slots=True)
class ExplainResponse:
    explanation: str
    latency_seconds: float


@dataclass(frozen=True, slots=True)
class AnswerRequest:
    """Query over a masked image. There is no explanation field on purpose."""

    image_b64: str
    question: str
    prompt_id: str
    model_id: str

    def __post_init__(self) -> None:
        if not self.image_b64:
            raise ConfigError("answer request needs image data")
        if not self.question.strip():
            raise ConfigError("answer request needs a non-empty question")

    def to_wire(self) -> dict[str, Any]:
        return {
            "image_b64": self.image_b64,
            "question": self.question,
            "prompt_id": self.prompt_id,
            "model_id": self.model_id,
        }


@dataclass(frozen=True, slots=True)
class AnswerResponse:
    answer: str
    latency_seconds: float


@dataclass(frozen=True, slots=True)
class EmbedRequest:
    """Embed one text or one image with the named embedders.

    Exactly one payload field matching the modality must be set.
    """

    modality: str
    embedder_ids: tuple[str, ...]
    text: str | None = None
    image_b64: str | None = None

    def __post_init__(self) -> None:
        if self.modality not in ("text", "image"):
            raise ConfigError(f"modality must be 'text' or 'image', got {self.modality!r}")
        if not self.embedder_ids:
            raise ConfigError("embed request needs at least one embedder id")
        if self.modality == "text":
            if self.text is None or self.image_b64 is not None:
                raise ConfigError("text modality requires text and forbids image_b64")
            if not self.text:
                raise ConfigError("embed request text is empty")
        else:
            if self.image_b64 is None or self.text is not None:
                raise ConfigError("image modality requires image_b64 and forbids text")
            if not self.image_b64:
                raise ConfigError("embed request image is empty")

    def to_wire(self) -> dict[str, Any]:
        wire: dict[str, Any] = {
            "modality": self.modality,
            "embedder_ids": list(self.embedder_ids),
        }
        if self.modality == "text":
            wire["text"] = self.text
        else:
            wire["image_b64"] = self.image_b64
        return wire


@dataclass(frozen=True, slots=True)
class EmbedResponse:
    vectors: dict[str, tuple[float, ...]]
    latency_seconds: float


@runtime_checkable
class Backend(Protocol):
    """Anything that can serve the three inference operations."""

    def explain(self, req: ExplainRequest) -> ExplainResponse: ...

    def answer(self, req: AnswerRequest) -> AnswerResponse: ...

    def embed(self, req: EmbedRequest) -> EmbedResponse: ...


@dataclass
class DimGuard:
    """Tracks per-embedder vector dimensions across a run.

    The first observation pins each embedder's dim; any later drift means
    the server changed behavior mid-run and the run cannot be trusted.
    """

    _dims: dict[str, int] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def check(self, embedder_id: str, dim: int) -> None:
        with self._lock:
            seen = self._dims.setdefault(embedder_id, dim)
        if seen != dim:
            raise ProtocolError(
                f"embedder {embedder_id!r} changed dim within a run: {seen} -> {dim}"
            )


def validate_vectors(req: EmbedRequest, vectors: Any) -> dict[str, tuple[float, ...]]:
    """Check an embed payload against the request and coerce to tuples."""
    if not isinstance(vectors, dict):
        raise ProtocolError(f"embed response vectors must be an object, got {type(vectors)}")
    expected = set(req.embedder_ids)
    got = set(vectors.keys())
    if got != expected:
        raise ProtocolError(f"embed response keys {sorted(got)} != requested {sorted(expected)}")
    out: dict[str, tuple[float, ...]] = {}
    for eid in req.embedder_ids:
        values = vectors[eid]
        if not isinstance(values, (list, tuple)) or not values:
            raise ProtocolError(f"embedder {eid!r} returned an empty or non-array vector")
        coerced = []
        for v in values:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ProtocolError(f"embedder {eid!r} returned a non-numeric component {v!r}")
            coerced.append(float(v))
        out[eid] = tuple(coerced)
    return out
