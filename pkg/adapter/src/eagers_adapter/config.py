"""Server configuration and the checkpoint defaults it advertises."""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping


class AdapterConfigError(ValueError):
    """Raised when a server configuration cannot be served."""


ENGINE_DETERMINISTIC = "deterministic"
ENGINE_TRANSFORMERS = "transformers"
KNOWN_ENGINES = (ENGINE_DETERMINISTIC, ENGINE_TRANSFORMERS)

# The wire protocol names abstract encoder families; these are the concrete
# checkpoints this reference server loads for them. No canonical checkpoint
# set exists for the family names, so absolute scores depend on this choice.
DEFAULT_CHAT_MODEL_ID = "qwen2.5-vl-3b"
DEFAULT_CHAT_CHECKPOINT = "Qwen/Qwen2.5-VL-3B-Instruct"
DEFAULT_EMBEDDER_CHECKPOINTS: Mapping[str, str] = MappingProxyType(
    {
        "blip": "Salesforce/blip-itm-base-coco",
        "clip": "openai/clip-vit-base-patch32",
        "align": "kakaobrain/align-base",
    }
)

# vector widths served by the deterministic stand-in engine
DEFAULT_EMBEDDER_DIMS: Mapping[str, int] = MappingProxyType(
    {"blip": 256, "clip": 512, "align": 640}
)


@dataclass(frozen=True, slots=True)
class AdapterConfig:
    """Everything needed to bring the server up.

    `embedder_checkpoints` names the encoder loaded for each advertised
    embedder id; `embedder_dims` gives the stand-in engine's vector width
    for the same ids. The two key sets must agree, because the ids the
    server advertises are exactly the ids it can actually serve.
    """

    host: str = "127.0.0.1"
    port: int = 8700
    engine: str = ENGINE_DETERMINISTIC
    chat_model_id: str = DEFAULT_CHAT_MODEL_ID
    chat_checkpoint: str = DEFAULT_CHAT_CHECKPOINT
    embedder_checkpoints: Mapping[str, str] = field(
        default_factory=lambda: dict(DEFAULT_EMBEDDER_CHECKPOINTS)
    )
    embedder_dims: Mapping[str, int] = field(
        default_factory=lambda: dict(DEFAULT_EMBEDDER_DIMS)
    )
    device: str = "cpu"
    max_side: int = 1536
    max_new_tokens: int = 128

    def __post_init__(self) -> None:
        if self.engine not in KNOWN_ENGINES:
            raise AdapterConfigError(
                f"unknown engine {self.engine!r}; known: {list(KNOWN_ENGINES)}"
            )
        if not (0 <= self.port <= 65535):
            raise AdapterConfigError(f"port {self.port} out of range")
        if not self.chat_model_id:
            raise AdapterConfigError("chat_model_id must be non-empty")
        if not self.embedder_checkpoints:
            raise AdapterConfigError("at least one embedder must be configured")
        if set(self.embedder_checkpoints) != set(self.embedder_dims):
            raise AdapterConfigError(
                "embedder_checkpoints and embedder_dims name different ids: "
                f"{sorted(self.embedder_checkpoints)} vs {sorted(self.embedder_dims)}"
            )
        for name, dim in self.embedder_dims.items():
            if dim < 1:
                raise AdapterConfigError(f"embedder {name!r} dim must be >= 1, got {dim}")
        if self.max_side < 1:
            raise AdapterConfigError(f"max_side must be >= 1, got {self.max_side}")
        if self.max_new_tokens < 1:
            raise AdapterConfigError(
                f"max_new_tokens must be >= 1, got {self.max_new_tokens}"
            )

    @property
    def embedder_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.embedder_checkpoints))
