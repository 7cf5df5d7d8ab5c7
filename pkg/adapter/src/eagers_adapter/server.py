"""HTTP surface: three POST JSON endpoints in front of an engine.

Request bodies are validated to exactly the published wire shapes before
any inference happens; syntactically valid requests that name unknown ids
(embedder, prompt, model) are rejected with 400 as well. Engine access is
serialized by a lock, so one process maps to one model instance and
concurrent clients queue instead of overlapping on it.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import io
import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from PIL import Image

from eagers.prompts import KNOWN_PROMPT_IDS, render_prompt

from . import CONTRACT_VERSION, __version__
from .config import (
    DEFAULT_EMBEDDER_DIMS,
    ENGINE_DETERMINISTIC,
    ENGINE_TRANSFORMERS,
    AdapterConfig,
    AdapterConfigError,
    KNOWN_ENGINES,
)
from .engines import DeterministicEngine, Engine, TransformersEngine

MAX_BODY_BYTES = 64 * 1024 * 1024


class BadRequest(ValueError):
    """Client-side fault; becomes a 400 with {"error": ...}."""


QUERY_FIELDS = ("image_b64", "question", "prompt_id", "model_id")


def validate_query_body(body: object) -> dict:
    """Shape check for the explain/answer endpoints."""
    if not isinstance(body, dict):
        raise BadRequest("request body must be a JSON object")
    extra = set(body) - set(QUERY_FIELDS)
    if extra:
        raise BadRequest(f"unexpected fields: {sorted(extra)}")
    for name in QUERY_FIELDS:
        value = body.get(name)
        if not isinstance(value, str) or not value:
            raise BadRequest(f"field {name!r} must be a non-empty string")
    return body


def validate_embed_body(body: object) -> dict:
    """Shape check for the embed endpoint: exactly one payload, matching modality."""
    if not isinstance(body, dict):
        raise BadRequest("request body must be a JSON object")
    allowed = {"modality", "text", "image_b64", "embedder_ids"}
    extra = set(body) - allowed
    if extra:
        raise BadRequest(f"unexpected fields: {sorted(extra)}")
    modality = body.get("modality")
    if modality not in ("text", "image"):
        raise BadRequest("modality must be 'text' or 'image'")
    ids = body.get("embedder_ids")
    if not isinstance(ids, list) or not ids:
        raise BadRequest("embedder_ids must be a non-empty array")
    if not all(isinstance(e, str) and e for e in ids):
        raise BadRequest("embedder_ids must contain non-empty strings")
    if len(set(ids)) != len(ids):
        raise BadRequest("embedder_ids must be unique")
    for name in ("text", "image_b64"):
        if name in body and (not isinstance(body[name], str) or not body[name]):
            raise BadRequest(f"field {name!r} must be a non-empty string")
    payload_field = "text" if modality == "text" else "image_b64"
    other_field = "image_b64" if modality == "text" else "text"
    if payload_field not in body:
        raise BadRequest(f"modality {modality!r} requires field {payload_field!r}")
    if other_field in body:
        raise BadRequest(f"modality {modality!r} forbids field {other_field!r}")
    return body


def decode_image(image_b64: str, max_side: int) -> Image.Image:
    """Base64 to RGB image, downscaled if the client sent an oversized one."""
    try:
        raw = base64.b64decode(image_b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise BadRequest(f"image_b64 is not valid base64: {exc}") from exc
    try:
        image = Image.open(io.BytesIO(raw))
        image.load()
    except Exception as exc:
        raise BadRequest(f"image_b64 does not decode to an image: {exc}") from exc
    image = image.convert("RGB")
    return fit_within(image, max_side)


def fit_within(image: Image.Image, max_side: int) -> Image.Image:
    """Cap the longest side at max_side; never upscale."""
    longest = max(image.width, image.height)
    if longest <= max_side:
        return image
    scale = max_side / longest
    width = max(1, int(image.width * scale + 0.5))
    height = max(1, int(image.height * scale + 0.5))
    return image.resize((width, height), Image.Resampling.BILINEAR)


class _Handler(BaseHTTPRequestHandler):
    # bound by build_server
    adapter_cfg: AdapterConfig
    adapter_engine: Engine
    engine_lock: threading.Lock
    pinned_dims: dict[str, int]

    server_version = f"eagers-adapter/{__version__}"

    def log_message(self, format: str, *args) -> None:  # noqa: A002
        pass

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:
        self._send(405, {"error": "only POST is supported"})

    def do_POST(self) -> None:
        routes = {
            "/v1/explain": self._handle_explain,
            "/v1/answer": self._handle_answer,
            "/v1/embed": self._handle_embed,
        }
        handler = routes.get(self.path)
        if handler is None:
            self._send(404, {"error": f"unknown endpoint {self.path}"})
            return
        try:
            body = self._read_body()
            handler(body)
        except BadRequest as exc:
            self._send(400, {"error": str(exc)})
        except Exception as exc:
            self._send(500, {"error": f"inference failure: {exc}"})

    def _read_body(self) -> object:
        length = int(self.headers.get("Content-Length") or 0)
        if length <= 0:
            raise BadRequest("request body is required")
        if length > MAX_BODY_BYTES:
            raise BadRequest(f"request body exceeds {MAX_BODY_BYTES} bytes")
        raw = self.rfile.read(length)
        try:
            return json.loads(raw)
        except ValueError as exc:
            raise BadRequest(f"request body is not valid JSON: {exc}") from exc

    def _resolve_query(self, body: object) -> tuple[Image.Image, str]:
        data = validate_query_body(body)
        if data["model_id"] != self.adapter_cfg.chat_model_id:
            raise BadRequest(
                f"unknown model_id {data['model_id']!r}; "
                f"this server loads {self.adapter_cfg.chat_model_id!r}"
            )
        if data["prompt_id"] not in KNOWN_PROMPT_IDS:
            raise BadRequest(
                f"unknown prompt_id {data['prompt_id']!r}; known: {list(KNOWN_PROMPT_IDS)}"
            )
        prompt = render_prompt(data["prompt_id"], data["question"])
        image = decode_image(data["image_b64"], self.adapter_cfg.max_side)
        return image, prompt

    def _handle_explain(self, body: object) -> None:
        image, prompt = self._resolve_query(body)
        with self.engine_lock:
            text = self.adapter_engine.explain(image, prompt)
        if not isinstance(text, str) or not text:
            raise RuntimeError("model produced an empty explanation")
        self._send(200, {"explanation": text})

    def _handle_answer(self, body: object) -> None:
        image, prompt = self._resolve_query(body)
        with self.engine_lock:
            text = self.adapter_engine.answer(image, prompt)
        if not isinstance(text, str):
            raise RuntimeError("model produced a non-string answer")
        self._send(200, {"answer": text})

    def _handle_embed(self, body: object) -> None:
        data = validate_embed_body(body)
        ids = data["embedder_ids"]
        known = set(self.adapter_engine.embedder_ids)
        unknown = [e for e in ids if e not in known]
        if unknown:
            raise BadRequest(f"unknown embedder ids {unknown}; loaded: {sorted(known)}")
        with self.engine_lock:
            if data["modality"] == "text":
                vectors = self.adapter_engine.embed_text(data["text"], ids)
            else:
                image = decode_image(data["image_b64"], self.adapter_cfg.max_side)
                vectors = self.adapter_engine.embed_image(image, ids)
            self._check_dims(vectors)
        self._send(200, {"vectors": vectors})

    def _check_dims(self, vectors: dict[str, list[float]]) -> None:
        # dim stability per embedder for the server's lifetime
        for name, vec in vectors.items():
            seen = self.pinned_dims.setdefault(name, len(vec))
            if seen != len(vec):
                raise RuntimeError(
                    f"embedder {name!r} changed dim from {seen} to {len(vec)}"
                )


def make_engine(cfg: AdapterConfig) -> Engine:
    if cfg.engine == ENGINE_DETERMINISTIC:
        return DeterministicEngine(cfg)
    if cfg.engine == ENGINE_TRANSFORMERS:
        return TransformersEngine(cfg)
    raise AdapterConfigError(f"unknown engine {cfg.engine!r}")


def build_server(cfg: AdapterConfig, engine: Engine | None = None) -> ThreadingHTTPServer:
    """Bind the server; pass port 0 to let the OS pick one."""
    bound_engine = engine if engine is not None else make_engine(cfg)
    advertised = set(cfg.embedder_ids)
    loaded = set(bound_engine.embedder_ids)
    if advertised != loaded:
        raise AdapterConfigError(
            f"advertised embedders {sorted(advertised)} do not match loaded {sorted(loaded)}"
        )

    class Handler(_Handler):
        adapter_cfg = cfg
        adapter_engine = bound_engine
        engine_lock = threading.Lock()
        pinned_dims: dict[str, int] = {}

    return ThreadingHTTPServer((cfg.host, cfg.port), Handler)


def _parse_pairs(pairs: list[str], flag: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep or not name or not value:
            raise AdapterConfigError(f"{flag} expects NAME=VALUE, got {pair!r}")
        out[name] = value
    return out


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eagers-adapter",
        description="Serve explain/answer/embed endpoints for evaluation runs.",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8700)
    parser.add_argument("--engine", choices=list(KNOWN_ENGINES), default=ENGINE_DETERMINISTIC)
    parser.add_argument("--device", default="cpu", help="torch device for the transformers engine")
    parser.add_argument("--max-side", type=int, default=1536)
    parser.add_argument("--max-new-tokens", type=int, default=128)
    parser.add_argument("--chat-model-id", default=None, help="model_id accepted on the wire")
    parser.add_argument("--chat-checkpoint", default=None)
    parser.add_argument(
        "--embedder",
        action="append",
        default=[],
        metavar="NAME=CHECKPOINT",
        help="replace the default embedder set (repeatable)",
    )
    parser.add_argument(
        "--dim",
        action="append",
        default=[],
        metavar="NAME=N",
        help="stand-in vector width per embedder (repeatable)",
    )
    return parser


def config_from_args(args: argparse.Namespace) -> AdapterConfig:
    kwargs: dict = {
        "host": args.host,
        "port": args.port,
        "engine": args.engine,
        "device": args.device,
        "max_side": args.max_side,
        "max_new_tokens": args.max_new_tokens,
    }
    if args.chat_model_id:
        kwargs["chat_model_id"] = args.chat_model_id
    if args.chat_checkpoint:
        kwargs["chat_checkpoint"] = args.chat_checkpoint
    if args.embedder:
        checkpoints = _parse_pairs(args.embedder, "--embedder")
        kwargs["embedder_checkpoints"] = checkpoints
        kwargs["embedder_dims"] = {
            name: DEFAULT_EMBEDDER_DIMS.get(name, 256) for name in checkpoints
        }
    if args.dim:
        dims = {}
        for name, value in _parse_pairs(args.dim, "--dim").items():
            try:
                dims[name] = int(value)
            except ValueError as exc:
                raise AdapterConfigError(f"--dim {name}={value!r} is not an integer") from exc
        base = kwargs.get("embedder_dims", dict(DEFAULT_EMBEDDER_DIMS))
        base.update(dims)
        kwargs["embedder_dims"] = base
    return AdapterConfig(**kwargs)


def main(argv: list[str] | None = None) -> int:
    args = build_arg_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        server = build_server(cfg)
    except AdapterConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    host, port = server.server_address[:2]
    print(
        f"serving contract {CONTRACT_VERSION} on http://{host}:{port} "
        f"(engine={cfg.engine}, embedders={', '.join(cfg.embedder_ids)})"
    )
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
