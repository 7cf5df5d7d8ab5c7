"""Per-question orchestration and split-level evaluation runs.

Stage order within a question is fixed: resize, explain, partition, embed
(explanation once per embedder, then every cell crop per embedder), score,
fuse, mask, answer, judge. Every intermediate is persisted so a re-run
with the same config replays from disk without touching the backend.

The answer stage is handed only the masked image and the question; the
request type has no field that could carry the explanation.

Timing accounting: a question's total is the sum of backend-reported call
latencies (cache hits contribute the latency stored with the vector).
Local compute is not counted, which keeps reports reproducible.
"""

from __future__ import annotations

import base64
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any

from .backends.types import (
    AnswerRequest,
    Backend,
    EmbedRequest,
    ExplainRequest,
)
from .dataset import QARecord, RunStore, file_digest, text_digest
from .errors import ConfigError, EmptyRunError
from .geometry import GridSpec, cell_from_linear, partition, visible_region
from .imaging import apply_mask, crop, load_image, resize_longest_side, to_png_bytes
from .metrics import (
    AnswerJudgment,
    aggregate,
    judge,
)
from .prompts import ANSWER_PROMPT_ID, EXPLAIN_PROMPT_ID
from .ranking import SelectionResult, fuse_majority, score_cells

MODE_EAGERS = "eagers"
MODE_BASELINE = "baseline"

STAGE_RESIZE = "resize"
STAGE_EXPLAIN = "explanation"
STAGE_EMBED = "embeddings"
STAGE_SELECT = "selection"
STAGE_MASK = "mask"
STAGE_ANSWER = "answer"
STAGE_JUDGE = "judge"


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    """Everything that determines a run's results.

    concurrency is excluded from the config hash: it changes scheduling,
    never outputs.
    """

    grid: GridSpec
    margin_fraction: float = 0.0
    max_side: int = 1536
    anls_threshold: float = 0.5
    embedder_ids: tuple[str, ...] = ("blip", "clip", "align")
    model_id: str = "qwen2.5-vl-3b"
    explain_prompt_id: str = EXPLAIN_PROMPT_ID
    answer_prompt_id: str = ANSWER_PROMPT_ID
    mode: str = MODE_EAGERS
    concurrency: int = 4

    def __post_init__(self) -> None:
        if not 0 <= self.margin_fraction <= 1:
            raise ConfigError(f"margin_fraction must be in [0, 1], got {self.margin_fraction}")
        if self.max_side < 1:
            raise ConfigError(f"max_side must be positive, got {self.max_side}")
        if not 0 <= self.anls_threshold <= 1:
            raise ConfigError(f"anls_threshold must be in [0, 1], got {self.anls_threshold}")
        if not self.embedder_ids:
            raise ConfigError("at least one embedder id is required")
        if len(set(self.embedder_ids)) != len(self.embedder_ids):
            raise ConfigError(f"duplicate embedder ids: {list(self.embedder_ids)}")
        if self.mode not in (MODE_EAGERS, MODE_BASELINE):
            raise ConfigError(f"mode must be '{MODE_EAGERS}' or '{MODE_BASELINE}', got {self.mode!r}")
        if self.concurrency < 1:
            raise ConfigError(f"concurrency must be positive, got {self.concurrency}")
        for name in (self.model_id, self.explain_prompt_id, self.answer_prompt_id):
            if not name:
                raise ConfigError("model_id and prompt ids must be non-empty")


def canonical_config(cfg: PipelineConfig) -> dict[str, Any]:
    """Hash-relevant config fields in a stable shape."""
    return {
        "mode": cfg.mode,
        "grid": {"rows": cfg.grid.rows, "cols": cfg.grid.cols},
        "margin_fraction": cfg.margin_fraction,
        "max_side": cfg.max_side,
        "anls_threshold": cfg.anls_threshold,
        "embedder_ids": list(cfg.embedder_ids),
        "model_id": cfg.model_id,
        "explain_prompt_id": cfg.explain_prompt_id,
        "answer_prompt_id": cfg.answer_prompt_id,
    }


def config_hash(cfg: PipelineConfig) -> str:
    blob = json.dumps(canonical_config(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True, slots=True)
class QuestionOutcome:
    """Everything a run learned about one question."""

    question_id: str
    image: str | None
    failed: bool
    failed_stage: str | None
    error: str | None
    explanation: str | None
    selection: dict[str, Any] | None
    answer: str | None
    judgment: AnswerJudgment | None
    stage_seconds: dict[str, float]
    total_seconds: float

    def to_payload(self) -> dict[str, Any]:
        return {
            "question_id": self.question_id,
            "image": self.image,
            "failed": self.failed,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "explanation": self.explanation,
            "selection": self.selection,
            "answer": self.answer,
            "judgment": None
            if self.judgment is None
            else {
                "em": self.judgment.em,
                "anls_score": self.judgment.anls_score,
                "best_reference": self.judgment.best_reference,
            },
            "stage_seconds": self.stage_seconds,
            "total_seconds": self.total_seconds,
        }

    @classmethod
    def from_payload(cls, payload: dict[str, Any]) -> "QuestionOutcome":
        j = payload.get("judgment")
        return cls(
            question_id=payload["question_id"],
            image=payload.get("image"),
            failed=payload["failed"],
            failed_stage=payload.get("failed_stage"),
            error=payload.get("error"),
            explanation=payload.get("explanation"),
            selection=payload.get("selection"),
            answer=payload.get("answer"),
            judgment=None
            if j is None
            else AnswerJudgment(
                em=j["em"], anls_score=j["anls_score"], best_reference=j["best_reference"]
            ),
            stage_seconds=dict(payload["stage_seconds"]),
            total_seconds=payload["total_seconds"],
        )


def selection_payload(result: SelectionResult, grid: GridSpec) -> dict[str, Any]:
    return {
        "selected": [c.linear(grid) for c in result.selected],
        "votes": list(result.votes),
        "mean_scores": list(result.mean_scores),
    }


def _b64_png(img) -> str:
    return base64.b64encode(to_png_bytes(img)).decode("ascii")


def _judgment_for_aggregate(outcome: QuestionOutcome) -> AnswerJudgment:
    # failed questions count as wrong, not as excluded
    if outcome.judgment is not None:
        return outcome.judgment
    return AnswerJudgment(em=0, anls_score=0.0, best_reference=-1)


class _QuestionRun:
    """Mutable state while one question moves through the stages."""

    def __init__(
        self, record: QARecord, cfg: PipelineConfig, backend: Backend, store: RunStore
    ) -> None:
        self.record = record
        self.cfg = cfg
        self.backend = backend
        self.store = store
        self.stage_seconds: dict[str, float] = {}
        self.current_stage = STAGE_RESIZE

    def _explain(self, image_b64: str) -> str:
        stored = self.store.read_stage(self.record.question_id, STAGE_EXPLAIN)
        if stored is not None and isinstance(stored.get("explanation"), str):
            self.stage_seconds[STAGE_EXPLAIN] = float(stored.get("latency_seconds", 0.0))
            return stored["explanation"]
        resp = self.backend.explain(
            ExplainRequest(
                image_b64=image_b64,
                question=self.record.question,
                prompt_id=self.cfg.explain_prompt_id,
                model_id=self.cfg.model_id,
            )
        )
        self.store.write_stage(
            self.record.question_id,
            STAGE_EXPLAIN,
            {
                "explanation": resp.explanation,
                "latency_seconds": resp.latency_seconds,
                "prompt_id": self.cfg.explain_prompt_id,
            },
        )
        self.stage_seconds[STAGE_EXPLAIN] = resp.latency_seconds
        return resp.explanation

    def _embed_text(self, explanation: str) -> tuple[dict[str, tuple[float, ...]], float]:
        digest = text_digest(explanation)
        vectors: dict[str, tuple[float, ...]] = {}
        seconds = 0.0
        for eid in self.cfg.embedder_ids:
            cached = self.store.get_text_embedding(digest, eid)
            if cached is not None and isinstance(cached.get("values"), list):
                vectors[eid] = tuple(float(v) for v in cached["values"])
                seconds += float(cached.get("latency_seconds", 0.0))
                continue
            resp = self.backend.embed(
                EmbedRequest(modality="text", embedder_ids=(eid,), text=explanation)
            )
            vec = resp.vectors[eid]
            self.store.put_text_embedding(
                digest, eid, {"values": list(vec), "latency_seconds": resp.latency_seconds}
            )
            vectors[eid] = vec
            seconds += resp.latency_seconds
        return vectors, seconds

    def _embed_cells(
        self, image, cells, image_digest: str
    ) -> tuple[dict[str, list[tuple[float, ...]]], float]:
        vectors: dict[str, list[tuple[float, ...]]] = {eid: [] for eid in self.cfg.embedder_ids}
        seconds = 0.0
        crops_b64: list[str | None] = [None] * len(cells)
        for eid in self.cfg.embedder_ids:
            for i, rect in enumerate(cells):
                cached = self.store.get_cell_embedding(
                    image_digest, self.cfg.max_side, self.cfg.grid, eid, i
                )
                if cached is not None and isinstance(cached.get("values"), list):
                    vectors[eid].append(tuple(float(v) for v in cached["values"]))
                    seconds += float(cached.get("latency_seconds", 0.0))
                    continue
                if crops_b64[i] is None:
                    crops_b64[i] = _b64_png(crop(image, rect))
                resp = self.backend.embed(
                    EmbedRequest(modality="image", embedder_ids=(eid,), image_b64=crops_b64[i])
                )
                vec = resp.vectors[eid]
                self.store.put_cell_embedding(
                    image_digest,
                    self.cfg.max_side,
                    self.cfg.grid,
                    eid,
                    i,
                    {"values": list(vec), "latency_seconds": resp.latency_seconds},
                )
                vectors[eid].append(vec)
                seconds += resp.latency_seconds
        return vectors, seconds

    def _answer(self, image_b64: str) -> str:
        resp = self.backend.answer(
            AnswerRequest(
                image_b64=image_b64,
                question=self.record.question,
                prompt_id=self.cfg.answer_prompt_id,
                model_id=self.cfg.model_id,
            )
        )
        self.store.write_stage(
            self.record.question_id,
            STAGE_ANSWER,
            {"answer": resp.answer, "latency_seconds": resp.latency_seconds},
        )
        self.stage_seconds[STAGE_ANSWER] = resp.latency_seconds
        return resp.answer

    def execute(self, save_masked: bool) -> QuestionOutcome:
        record = self.record
        cfg = self.cfg

        self.current_stage = STAGE_RESIZE
        image = resize_longest_side(load_image(record.image_file), cfg.max_side)

        explanation: str | None = None
        selection: dict[str, Any] | None = None
        if cfg.mode == MODE_EAGERS:
            source_b64 = _b64_png(image)
            self.current_stage = STAGE_EXPLAIN
            explanation = self._explain(source_b64)

            self.current_stage = STAGE_EMBED
            cells = partition(image.width, image.height, cfg.grid)
            image_digest = file_digest(record.image_file)
            text_vecs, text_seconds = self._embed_text(explanation)
            cell_vecs, cell_seconds = self._embed_cells(image, cells, image_digest)
            self.stage_seconds[STAGE_EMBED] = text_seconds + cell_seconds
            self.store.write_stage(
                record.question_id,
                STAGE_EMBED,
                {
                    "image_digest": image_digest,
                    "cells": len(cells),
                    "dims": {eid: len(text_vecs[eid]) for eid in cfg.embedder_ids},
                    "latency_seconds": self.stage_seconds[STAGE_EMBED],
                },
            )

            self.current_stage = STAGE_SELECT
            sim = score_cells(text_vecs, cell_vecs)
            result = fuse_majority(sim, cfg.grid)
            selection = selection_payload(result, cfg.grid)
            self.store.write_stage(
                record.question_id,
                STAGE_SELECT,
                {
                    "grid": {"rows": cfg.grid.rows, "cols": cfg.grid.cols},
                    "margin_fraction": cfg.margin_fraction,
                    **selection,
                },
            )

            self.current_stage = STAGE_MASK
            visible = visible_region(
                set(result.selected), cfg.grid, cfg.margin_fraction, image.width, image.height
            )
            masked = apply_mask(image, visible)
            if save_masked:
                self.store.write_masked_png(record.question_id, to_png_bytes(masked))
            self.current_stage = STAGE_ANSWER
            answer_text = self._answer(_b64_png(masked))
        else:
            self.current_stage = STAGE_ANSWER
            answer_text = self._answer(_b64_png(image))

        self.current_stage = STAGE_JUDGE
        judgment = judge(answer_text, list(record.answers), cfg.anls_threshold)
        total = sum(self.stage_seconds.values())
        return QuestionOutcome(
            question_id=record.question_id,
            image=record.image,
            failed=False,
            failed_stage=None,
            error=None,
            explanation=explanation,
            selection=selection,
            answer=answer_text,
            judgment=judgment,
            stage_seconds=dict(self.stage_seconds),
            total_seconds=total,
        )


def run_question(
    record: QARecord,
    cfg: PipelineConfig,
    backend: Backend,
    store: RunStore,
    save_masked: bool = False,
) -> QuestionOutcome:
    """Run one question end to end, reusing any persisted intermediates.

    A completed outcome on disk short-circuits the whole question. Stage
    failures produce a failed outcome instead of raising; the caller keeps
    going with the next question.
    """
    stored = store.read_stage(record.question_id, "outcome")
    if stored is not None and not stored.get("failed", True):
        try:
            return QuestionOutcome.from_payload(stored)
        except (KeyError, TypeError, ValueError):
            pass  # corrupt outcome: fall through and recompute

    run = _QuestionRun(record, cfg, backend, store)
    try:
        outcome = run.execute(save_masked)
    except Exception as exc:  # noqa: BLE001 - one bad question must not sink the run
        outcome = QuestionOutcome(
            question_id=record.question_id,
            image=record.image,
            failed=True,
            failed_stage=run.current_stage,
            error=f"{type(exc).__name__}: {exc}",
            explanation=None,
            selection=None,
            answer=None,
            judgment=None,
            stage_seconds=dict(run.stage_seconds),
            total_seconds=sum(run.stage_seconds.values()),
        )
    store.write_stage(record.question_id, "outcome", outcome.to_payload())
    return outcome


def run_split(
    records: list[QARecord],
    cfg: PipelineConfig,
    backend: Backend,
    store: RunStore,
    dataset_digest: str = "",
    skipped_count: int = 0,
    save_masked: bool = False,
) -> dict[str, Any]:
    """Evaluate every record, write report.json, and return the report.

    Questions run on a bounded worker pool; results keep input order. The
    report contains no timestamps or absolute paths, so identical runs
    produce identical bytes.
    """
    if not records:
        raise EmptyRunError("no records to evaluate")

    def one(record: QARecord) -> QuestionOutcome:
        return run_question(record, cfg, backend, store, save_masked=save_masked)

    if cfg.concurrency == 1 or len(records) == 1:
        outcomes = [one(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=cfg.concurrency) as pool:
            outcomes = list(pool.map(one, records))

    judgments = [_judgment_for_aggregate(o) for o in outcomes]
    timings = [o.total_seconds for o in outcomes]
    summary = aggregate(judgments, timings)

    report = {
        "config": canonical_config(cfg),
        "config_hash": config_hash(cfg),
        "dataset_digest": dataset_digest,
        "counts": {
            "questions": len(outcomes),
            "failed": sum(1 for o in outcomes if o.failed),
            "skipped": skipped_count,
        },
        "metrics": {
            "em_percent": summary.em_percent,
            "anls_percent": summary.anls_percent,
            "timing": {
                "mean_seconds": summary.timing.mean_seconds,
                "cv_percent": summary.timing.cv_percent,
                "n": summary.timing.n,
                "cv_defined": summary.timing.cv_defined,
            },
        },
        "questions": [
            {
                "question_id": o.question_id,
                "answer": o.answer,
                "em": _judgment_for_aggregate(o).em,
                "anls": _judgment_for_aggregate(o).anls_score,
                "failed": o.failed,
                "failed_stage": o.failed_stage,
                "total_seconds": o.total_seconds,
            }
            for o in outcomes
        ],
        "skips_file": "skips.jsonl" if skipped_count else None,
    }
    store.write_report(report)
    return report


def baseline_config(cfg: PipelineConfig) -> PipelineConfig:
    return replace(cfg, mode=MODE_BASELINE)


def outcome_cells(outcome: QuestionOutcome, grid: GridSpec):
    """CellIndex list for a stored selection, for inspection tools."""
    if outcome.selection is None:
        return []
    return [cell_from_linear(i, grid) for i in outcome.selection["selected"]]
