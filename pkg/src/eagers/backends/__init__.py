"""Inference backends: the HTTP wire client and deterministic mocks."""

from .types import (
    AnswerRequest,
    AnswerResponse,
    Backend,
    BackendConfig,
    EmbedRequest,
    EmbedResponse,
    ExplainRequest,
    ExplainResponse,
)

__all__ = [
    "AnswerRequest",
    "AnswerResponse",
    "Backend",
    "BackendConfig",
    "EmbedRequest",
    "EmbedResponse",
    "ExplainRequest",
    "ExplainResponse",
]
