"""The normative JSON wire contract for inference servers.

Any server speaking this contract can sit behind the pipeline. Schemas are
shipped as JSON files so non-Python implementations can validate against
the identical documents.
"""

from __future__ import annotations

import json
from importlib import resources

from ..errors import ConfigError

CONTRACT_VERSION = "1.0.0"

SCHEMA_NAMES = (
    "explain_request",
    "explain_response",
    "answer_request",
    "answer_response",
    "embed_request",
    "embed_response",
    "error_response",
)

ENDPOINTS = {
    "/v1/explain": ("explain_request", "explain_response"),
    "/v1/answer": ("answer_request", "answer_response"),
    "/v1/embed": ("embed_request", "embed_response"),
}


def load_schema(name: str) -> dict:
    if name not in SCHEMA_NAMES:
        raise ConfigError(f"unknown schema {name!r}; known: {list(SCHEMA_NAMES)}")
    ref = resources.files("eagers.contract") / "schemas" / f"{name}.schema.json"
    return json.loads(ref.read_text(encoding="utf-8"))
