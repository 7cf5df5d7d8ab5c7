"""Inference engines behind the HTTP surface.

Two implementations of the same small interface: a deterministic stand-in
that needs no model weights (hash-derived text and vectors, fixed dims) and
a transformers-backed engine that loads the configured checkpoints. The
stand-in exists so the wire contract, request validation, and determinism
guarantees can be exercised on any machine; the transformers engine is the
path to full-scale runs on real hardware.
"""

from __future__ import annotations

import hashlib
from typing import Iterable, Protocol

from PIL import Image

from .config import AdapterConfig, AdapterConfigError


class Engine(Protocol):
    """What the request handlers need from a model backend."""

    @property
    def embedder_ids(self) -> tuple[str, ...]: ...

    def explain(self, image: Image.Image, prompt: str) -> str: ...

    def answer(self, image: Image.Image, prompt: str) -> str: ...

    def embed_text(self, text: str, embedder_ids: Iterable[str]) -> dict[str, list[float]]: ...

    def embed_image(self, image: Image.Image, embedder_ids: Iterable[str]) -> dict[str, list[float]]: ...


def _digest(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
        h.update(b"\x1f")
    return h.digest()


def _image_bytes(image: Image.Image) -> bytes:
    return f"{image.mode}:{image.width}x{image.height}:".encode() + image.tobytes()


class DeterministicEngine:
    """Stand-in engine: output is a pure function of the request.

    Vectors are derived from a hash chain over (embedder id, payload), so
    identical requests always produce identical responses and every
    embedder keeps its configured width for the server's lifetime.
    """

    def __init__(self, cfg: AdapterConfig) -> None:
        self.dims = dict(cfg.embedder_dims)

    @property
    def embedder_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.dims))

    def explain(self, image: Image.Image, prompt: str) -> str:
        tag = _digest(b"explain", prompt.encode(), _image_bytes(image)).hex()[:12]
        return (
            "Stand-in spatial description (no model loaded): the relevant "
            f"content occupies a compact area of the page. trace={tag}"
        )

    def answer(self, image: Image.Image, prompt: str) -> str:
        tag = _digest(b"answer", prompt.encode(), _image_bytes(image)).hex()[:8]
        return f"stub-{tag}"

    def _vector(self, embedder_id: str, payload: bytes) -> list[float]:
        dim = self.dims[embedder_id]
        seed = _digest(embedder_id.encode(), payload)
        values: list[float] = []
        block = seed
        while len(values) < dim:
            block = hashlib.sha256(block).digest()
            for i in range(0, len(block) - 1, 2):
                raw = int.from_bytes(block[i : i + 2], "big")
                values.append(raw / 32767.5 - 1.0)
                if len(values) == dim:
                    break
        return values

    def embed_text(self, text: str, embedder_ids: Iterable[str]) -> dict[str, list[float]]:
        payload = _digest(b"text", text.encode())
        return {e: self._vector(e, payload) for e in embedder_ids}

    def embed_image(self, image: Image.Image, embedder_ids: Iterable[str]) -> dict[str, list[float]]:
        payload = _digest(b"image", _image_bytes(image))
        return {e: self._vector(e, payload) for e in embedder_ids}


class TransformersEngine:
    """Checkpoint-backed engine with deterministic (greedy) generation.

    Loads one image-text chat model and one encoder per advertised
    embedder id. Encoders are used through their projection heads into the
    shared text/image space; cosine comparison downstream is scale
    invariant, so no normalization is applied here.
    """

    def __init__(self, cfg: AdapterConfig) -> None:
        try:
            import torch
            from transformers import AutoModel, AutoModelForImageTextToText, AutoProcessor
        except ImportError as exc:
            raise AdapterConfigError(
                "the transformers engine requires the [models] extra"
            ) from exc
        self._torch = torch
        self.device = cfg.device
        self.max_new_tokens = cfg.max_new_tokens
        self.chat_processor = AutoProcessor.from_pretrained(cfg.chat_checkpoint)
        self.chat_model = (
            AutoModelForImageTextToText.from_pretrained(cfg.chat_checkpoint)
            .to(cfg.device)
            .eval()
        )
        self.encoders = {}
        for name in sorted(cfg.embedder_checkpoints):
            checkpoint = cfg.embedder_checkpoints[name]
            processor = AutoProcessor.from_pretrained(checkpoint)
            model = AutoModel.from_pretrained(checkpoint).to(cfg.device).eval()
            self.encoders[name] = (processor, model)

    @property
    def embedder_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.encoders))

    def _generate(self, image: Image.Image, prompt: str) -> str:
        messages = [
            {
                "role": "user",
                "content": [{"type": "image"}, {"type": "text", "text": prompt}],
            }
        ]
        chat_text = self.chat_processor.apply_chat_template(
            messages, add_generation_prompt=True, tokenize=False
        )
        inputs = self.chat_processor(
            text=[chat_text], images=[image], return_tensors="pt"
        ).to(self.device)
        with self._torch.no_grad():
            generated = self.chat_model.generate(
                **inputs, do_sample=False, max_new_tokens=self.max_new_tokens
            )
        new_tokens = generated[:, inputs["input_ids"].shape[1] :]
        return self.chat_processor.batch_decode(new_tokens, skip_special_tokens=True)[0].strip()

    def explain(self, image: Image.Image, prompt: str) -> str:
        return self._generate(image, prompt)

    def answer(self, image: Image.Image, prompt: str) -> str:
        return self._generate(image, prompt)

    def _text_features(self, name: str, text: str) -> list[float]:
        processor, model = self.encoders[name]
        with self._torch.no_grad():
            if hasattr(model, "get_text_features"):
                inputs = processor(
                    text=[text], return_tensors="pt", padding=True, truncation=True
                ).to(self.device)
                features = model.get_text_features(**inputs)
            elif hasattr(model, "text_encoder") and hasattr(model, "text_proj"):
                # retrieval-style encoders project the [CLS] state
                tokens = processor(
                    text=[text], return_tensors="pt", padding=True, truncation=True
                ).to(self.device)
                hidden = model.text_encoder(
                    input_ids=tokens["input_ids"],
                    attention_mask=tokens.get("attention_mask"),
                ).last_hidden_state
                features = model.text_proj(hidden[:, 0, :])
            else:
                raise AdapterConfigError(f"encoder {name!r} has no text feature head")
        return [float(v) for v in features[0].tolist()]

    def _image_features(self, name: str, image: Image.Image) -> list[float]:
        processor, model = self.encoders[name]
        with self._torch.no_grad():
            if hasattr(model, "get_image_features"):
                inputs = processor(images=[image], return_tensors="pt").to(self.device)
                features = model.get_image_features(**inputs)
            elif hasattr(model, "vision_model") and hasattr(model, "vision_proj"):
                inputs = processor(images=[image], return_tensors="pt").to(self.device)
                hidden = model.vision_model(pixel_values=inputs["pixel_values"]).last_hidden_state
                features = model.vision_proj(hidden[:, 0, :])
            else:
                raise AdapterConfigError(f"encoder {name!r} has no image feature head")
        return [float(v) for v in features[0].tolist()]

    def embed_text(self, text: str, embedder_ids: Iterable[str]) -> dict[str, list[float]]:
        return {e: self._text_features(e, text) for e in embedder_ids}

    def embed_image(self, image: Image.Image, embedder_ids: Iterable[str]) -> dict[str, list[float]]:
        return {e: self._image_features(e, image) for e in embedder_ids}
