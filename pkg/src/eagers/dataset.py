"""Dataset ingestion and on-disk run persistence.

Split files follow the DocVQA layout: a top-level "data" array whose rows
carry "questionId", "question", "image", "answers". Records that fail
validation or point at missing images are skipped and reported; duplicate
question ids abort the load.

Run artifacts live under <out>/runs/<config_hash>/<question_id>/, one JSON
file per stage. Embedding vectors live in a shared content-addressed cache
keyed by image digest, resize target, grid, and embedder, so different
margin settings (which only change masking) reuse the same vectors.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from PIL import Image, UnidentifiedImageError

from .errors import DatasetFormatError, EmptyDatasetError
from .geometry import GridSpec

log = logging.getLogger(__name__)

_SAFE_CHARS = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._-")


@dataclass(frozen=True, slots=True)
class QARecord:
    """One validated question with its resolved image path."""

    question_id: str
    question: str
    image: str
    answers: tuple[str, ...]
    image_file: Path


@dataclass(frozen=True, slots=True)
class SkippedRecord:
    question_id: str
    reason: str


@dataclass(frozen=True, slots=True)
class DatasetLoad:
    records: tuple[QARecord, ...]
    skipped: tuple[SkippedRecord, ...]


def _row_error(row: Any) -> str | None:
    if not isinstance(row, dict):
        return "row is not an object"
    if not isinstance(row.get("question"), str) or not row["question"].strip():
        return "missing or empty 'question'"
    if not isinstance(row.get("image"), str) or not row["image"]:
        return "missing or empty 'image'"
    answers = row.get("answers")
    if not isinstance(answers, list) or not answers:
        return "missing or empty 'answers'"
    if not all(isinstance(a, str) for a in answers):
        return "'answers' must be strings"
    return None


def _decodes(path: Path) -> bool:
    try:
        with Image.open(path) as img:
            img.verify()
    except (OSError, UnidentifiedImageError, ValueError):
        return False
    return True


def load_dataset(root: str | Path, split_file: str | Path) -> DatasetLoad:
    """Parse and validate a split file, resolving images against root."""
    root = Path(root)
    split_file = Path(split_file)
    try:
        raw = json.loads(split_file.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DatasetFormatError(f"cannot read split file {split_file}: {exc}") from exc
    except ValueError as exc:
        raise DatasetFormatError(f"split file {split_file} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("data"), list):
        raise DatasetFormatError(f"split file {split_file} lacks a top-level 'data' array")

    records: list[QARecord] = []
    skipped: list[SkippedRecord] = []
    seen: set[str] = set()
    for i, row in enumerate(raw["data"]):
        qid_raw = row.get("questionId") if isinstance(row, dict) else None
        if qid_raw is None or isinstance(qid_raw, (dict, list, bool)):
            skipped.append(SkippedRecord(question_id=f"<row {i}>", reason="missing 'questionId'"))
            continue
        qid = str(qid_raw)
        if qid in seen:
            raise DatasetFormatError(f"duplicate questionId {qid!r} in {split_file}")
        seen.add(qid)
        problem = _row_error(row)
        if problem:
            skipped.append(SkippedRecord(question_id=qid, reason=problem))
            continue
        image_file = root / row["image"]
        if not image_file.is_file():
            skipped.append(SkippedRecord(question_id=qid, reason=f"image file missing: {row['image']}"))
            continue
        if not _decodes(image_file):
            skipped.append(SkippedRecord(question_id=qid, reason=f"image failed to decode: {row['image']}"))
            continue
        records.append(
            QARecord(
                question_id=qid,
                question=row["question"],
                image=row["image"],
                answers=tuple(row["answers"]),
                image_file=image_file,
            )
        )
    if not records:
        raise EmptyDatasetError(f"no usable records in {split_file} ({len(skipped)} skipped)")
    for s in skipped:
        log.warning("skipping %s: %s", s.question_id, s.reason)
    return DatasetLoad(records=tuple(records), skipped=tuple(skipped))


def safe_dirname(name: str) -> str:
    """Filesystem-safe directory name; unsafe names get a digest suffix."""
    cleaned = "".join(c if c in _SAFE_CHARS else "_" for c in name)
    if cleaned == name and cleaned not in ("", ".", ".."):
        return cleaned
    tag = hashlib.sha256(name.encode()).hexdigest()[:8]
    return f"{cleaned or 'q'}_{tag}"


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _read_json(path: Path) -> dict[str, Any] | None:
    # corruption is treated as a cache miss, never as a failure
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        return None
    except (OSError, ValueError) as exc:
        log.warning("discarding corrupt cache entry %s: %s", path, exc)
        return None
    if not isinstance(data, dict):
        log.warning("discarding corrupt cache entry %s: not an object", path)
        return None
    return data


class RunStore:
    """Filesystem layout for one evaluation run plus the shared caches."""

    def __init__(self, out_dir: str | Path, config_hash: str) -> None:
        self.out_dir = Path(out_dir)
        self.config_hash = config_hash
        self.run_dir = self.out_dir / "runs" / config_hash
        self.shared_dir = self.out_dir / "shared" / "emb"

    def question_dir(self, question_id: str) -> Path:
        return self.run_dir / safe_dirname(question_id)

    def write_stage(self, question_id: str, stage: str, payload: dict[str, Any]) -> None:
        path = self.question_dir(question_id) / f"{stage}.json"
        _write_atomic(path, json.dumps(payload, sort_keys=True).encode("utf-8"))

    def read_stage(self, question_id: str, stage: str) -> dict[str, Any] | None:
        return _read_json(self.question_dir(question_id) / f"{stage}.json")

    def write_masked_png(self, question_id: str, png: bytes) -> Path:
        path = self.question_dir(question_id) / "masked.png"
        _write_atomic(path, png)
        return path

    def _cell_path(
        self, image_digest: str, max_side: int, grid: GridSpec, embedder_id: str, cell: int
    ) -> Path:
        return (
            self.shared_dir
            / "cells"
            / image_digest
            / f"s{max_side}"
            / f"{grid.cols}x{grid.rows}"
            / safe_dirname(embedder_id)
            / f"cell_{cell:04d}.json"
        )

    def get_cell_embedding(
        self, image_digest: str, max_side: int, grid: GridSpec, embedder_id: str, cell: int
    ) -> dict[str, Any] | None:
        return _read_json(self._cell_path(image_digest, max_side, grid, embedder_id, cell))

    def put_cell_embedding(
        self,
        image_digest: str,
        max_side: int,
        grid: GridSpec,
        embedder_id: str,
        cell: int,
        payload: dict[str, Any],
    ) -> None:
        path = self._cell_path(image_digest, max_side, grid, embedder_id, cell)
        _write_atomic(path, json.dumps(payload, sort_keys=True).encode("utf-8"))

    def _text_path(self, digest: str, embedder_id: str) -> Path:
        return self.shared_dir / "text" / digest / f"{safe_dirname(embedder_id)}.json"

    def get_text_embedding(self, digest: str, embedder_id: str) -> dict[str, Any] | None:
        return _read_json(self._text_path(digest, embedder_id))

    def put_text_embedding(self, digest: str, embedder_id: str, payload: dict[str, Any]) -> None:
        _write_atomic(
            self._text_path(digest, embedder_id),
            json.dumps(payload, sort_keys=True).encode("utf-8"),
        )

    def write_manifest(self, payload: dict[str, Any]) -> None:
        _write_atomic(
            self.run_dir / "manifest.json",
            json.dumps(payload, indent=2, sort_keys=True).encode("utf-8"),
        )

    def read_manifest(self) -> dict[str, Any] | None:
        return _read_json(self.run_dir / "manifest.json")

    def write_report(self, payload: dict[str, Any]) -> None:
        _write_atomic(
            self.run_dir / "report.json",
            json.dumps(payload, indent=2, sort_keys=True).encode("utf-8"),
        )

    def read_report(self) -> dict[str, Any] | None:
        return _read_json(self.run_dir / "report.json")

    def write_skips(self, skipped: tuple[SkippedRecord, ...]) -> None:
        lines = "".join(
            json.dumps({"question_id": s.question_id, "reason": s.reason}, sort_keys=True) + "\n"
            for s in skipped
        )
        _write_atomic(self.run_dir / "skips.jsonl", lines.encode("utf-8"))
