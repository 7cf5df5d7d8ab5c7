"""Operator entry point: run evaluations, render reports, inspect questions.

Exit codes are part of the interface:
  0  success (including runs with per-question failures)
  2  bad configuration or dataset
  3  backend unreachable in non-mock mode
  4  unknown question id (inspect)
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Any

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .backends.http import HttpBackend, probe
from .backends.mocks import FixtureBackend, PlantedBackend
from .backends.types import Backend, BackendConfig
from .dataset import RunStore, file_digest, load_dataset, safe_dirname
from .errors import EagersError
from .geometry import GridSpec, visible_region
from .imaging import apply_mask, load_image, resize_longest_side, to_png_bytes
from .pipeline import (
    MODE_BASELINE,
    MODE_EAGERS,
    PipelineConfig,
    QuestionOutcome,
    config_hash,
    run_split,
)
from .synthetic import PLANTED_FILENAME, load_planted_manifest

PRESET_NAMES = ("eagers_25_0", "eagers_50_0", "eagers_25_15", "eagers_50_15", "baseline")
BASE_URL_ENV = "EAGERS_BASE_URL"

EXIT_OK = 0
EXIT_BAD_CONFIG = 2
EXIT_BACKEND_UNREACHABLE = 3
EXIT_UNKNOWN_QUESTION = 4


class CliError(Exception):
    def __init__(self, message: str, code: int) -> None:
        super().__init__(message)
        self.code = code


def _load_config_file(name_or_path: str) -> dict[str, Any]:
    """Resolve a preset name or a TOML path to a raw config dict."""
    stem = name_or_path.removesuffix(".toml")
    if stem in PRESET_NAMES:
        ref = resources.files("eagers") / "configs" / f"{stem}.toml"
        return tomllib.loads(ref.read_text(encoding="utf-8"))
    path = Path(name_or_path)
    if not path.is_file():
        raise CliError(
            f"config {name_or_path!r} is neither a preset {list(PRESET_NAMES)} nor a file",
            EXIT_BAD_CONFIG,
        )
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"config {path} is not valid TOML: {exc}", EXIT_BAD_CONFIG) from exc


def _build_pipeline_config(raw: dict[str, Any], args: argparse.Namespace) -> PipelineConfig:
    grid_raw = raw.get("grid", {})
    try:
        cfg = PipelineConfig(
            grid=GridSpec(rows=int(grid_raw.get("rows", 5)), cols=int(grid_raw.get("cols", 5))),
            margin_fraction=float(raw.get("margin_fraction", 0.0)),
            max_side=int(args.max_side if args.max_side is not None else raw.get("max_side", 1536)),
            anls_threshold=float(raw.get("anls_threshold", 0.5)),
            embedder_ids=tuple(raw.get("embedder_ids", ["blip", "clip", "align"])),
            model_id=str(raw.get("model_id", "qwen2.5-vl-3b")),
            explain_prompt_id=str(raw.get("explain_prompt_id", "explain_v1")),
            answer_prompt_id=str(raw.get("answer_prompt_id", "answer_v1")),
            mode=str(args.mode if args.mode is not None else raw.get("mode", MODE_EAGERS)),
            concurrency=int(
                args.concurrency if args.concurrency is not None else raw.get("concurrency", 4)
            ),
        )
    except (EagersError, TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}", EXIT_BAD_CONFIG) from exc
    return cfg


def _make_backend(args: argparse.Namespace, cfg: PipelineConfig, split_file: Path) -> Backend:
    if args.mock == "fixture":
        return FixtureBackend()
    if args.mock == "planted":
        manifest_path = split_file.parent / PLANTED_FILENAME
        if not manifest_path.is_file():
            raise CliError(
                f"planted mock needs {PLANTED_FILENAME} beside the split file "
                f"(looked at {manifest_path})",
                EXIT_BAD_CONFIG,
            )
        try:
            return PlantedBackend(load_planted_manifest(manifest_path))
        except EagersError as exc:
            raise CliError(str(exc), EXIT_BAD_CONFIG) from exc
    base_url = args.base_url or os.environ.get(BASE_URL_ENV)
    if not base_url:
        raise CliError(
            f"no backend: pass --base-url, set {BASE_URL_ENV}, or choose --mock planted|fixture",
            EXIT_BAD_CONFIG,
        )
    if not probe(base_url):
        raise CliError(f"backend at {base_url} is unreachable", EXIT_BACKEND_UNREACHABLE)
    return HttpBackend(
        BackendConfig(
            base_url=base_url,
            embedder_ids=cfg.embedder_ids,
            model_id=cfg.model_id,
            max_inflight=cfg.concurrency,
        )
    )


def cmd_run(args: argparse.Namespace) -> int:
    raw = _load_config_file(args.config)
    cfg = _build_pipeline_config(raw, args)

    dataset_root = Path(args.dataset_root)
    split_file = Path(args.split_file) if args.split_file else dataset_root / "split.json"
    try:
        load = load_dataset(dataset_root, split_file)
    except EagersError as exc:
        raise CliError(f"dataset error: {exc}", EXIT_BAD_CONFIG) from exc

    backend = _make_backend(args, cfg, split_file)
    run_hash = config_hash(cfg)
    store = RunStore(args.out, run_hash)
    store.write_manifest(
        {
            "config": json.loads(json.dumps(cfg_echo(cfg))),
            "config_hash": run_hash,
            "dataset_digest": file_digest(split_file),
            "dataset_root": str(dataset_root.resolve()),
            "split_file": str(split_file.resolve()),
            "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "tool_version": __version__,
        }
    )
    if load.skipped:
        store.write_skips(load.skipped)

    report = run_split(
        list(load.records),
        cfg,
        backend,
        store,
        dataset_digest=file_digest(split_file),
        skipped_count=len(load.skipped),
        save_masked=args.save_masked,
    )
    print(f"run directory: {store.run_dir}")
    print(_format_table([_report_row(report)]))
    failed = report["counts"]["failed"]
    if failed:
        print(f"note: {failed} question(s) failed; see per-question outcome files")
    return EXIT_OK


def cfg_echo(cfg: PipelineConfig) -> dict[str, Any]:
    from .pipeline import canonical_config

    echo = canonical_config(cfg)
    echo["concurrency"] = cfg.concurrency
    return echo


def _report_row(report: dict[str, Any]) -> dict[str, Any]:
    config = report["config"]
    is_baseline = config["mode"] == MODE_BASELINE
    model = config["model_id"] if is_baseline else f"{config['model_id']}:masked"
    return {
        "model": model,
        "cols": "*" if is_baseline else config["grid"]["cols"],
        "rows": "*" if is_baseline else config["grid"]["rows"],
        "margin": "*" if is_baseline else config["margin_fraction"],
        "em_percent": report["metrics"]["em_percent"],
        "anls_percent": report["metrics"]["anls_percent"],
        "avg_time_seconds": report["metrics"]["timing"]["mean_seconds"],
        "cv_percent": report["metrics"]["timing"]["cv_percent"],
        "incomplete": False,
    }


def _format_table(rows: list[dict[str, Any]]) -> str:
    headers = ["Model", "Cols", "Rows", "Margin", "EM", "ANLS", "AvgTime", "CV"]
    body = []
    for r in rows:
        if r.get("incomplete"):
            body.append([r["model"], "-", "-", "-", "-", "-", "-", "incomplete"])
            continue
        body.append(
            [
                str(r["model"]),
                str(r["cols"]),
                str(r["rows"]),
                str(r["margin"]),
                f"{r['em_percent']:.2f}",
                f"{r['anls_percent']:.2f}",
                f"{r['avg_time_seconds']:.2f}",
                f"{r['cv_percent']:.2f}",
            ]
        )
    widths = [max(len(h), *(len(row[i]) for row in body)) if body else len(h) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    for row in body:
        lines.append("  ".join(row[i].ljust(widths[i]) for i in range(len(headers))))
    return "\n".join(lines)


def cmd_report(args: argparse.Namespace) -> int:
    rows = []
    for d in args.run_dirs:
        run_dir = Path(d)
        if not run_dir.is_dir():
            raise CliError(f"run directory {run_dir} does not exist", EXIT_BAD_CONFIG)
        report_path = run_dir / "report.json"
        try:
            report = json.loads(report_path.read_text(encoding="utf-8"))
            rows.append(_report_row(report))
        except (OSError, ValueError, KeyError):
            rows.append({"model": str(run_dir), "incomplete": True})
    complete = [r for r in rows if not r["incomplete"]]
    incomplete = [r for r in rows if r["incomplete"]]
    complete.sort(key=lambda r: -r["anls_percent"])
    ordered = complete + incomplete
    if args.json:
        print(json.dumps(ordered, indent=2, sort_keys=True))
    else:
        print(_format_table(ordered))
    return EXIT_OK


def _rebuild_masked(run_dir: Path, outcome: QuestionOutcome) -> Path | None:
    """Recreate masked.png from stored selection plus the run manifest."""
    manifest_path = run_dir / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, ValueError):
        return None
    if outcome.selection is None or outcome.image is None:
        return None
    config = manifest.get("config", {})
    image_file = Path(manifest.get("dataset_root", "")) / outcome.image
    if not image_file.is_file():
        return None
    grid = GridSpec(rows=config["grid"]["rows"], cols=config["grid"]["cols"])
    image = resize_longest_side(load_image(image_file), config["max_side"])
    from .geometry import cell_from_linear

    selected = {cell_from_linear(i, grid) for i in outcome.selection["selected"]}
    visible = visible_region(
        selected, grid, config["margin_fraction"], image.width, image.height
    )
    masked = apply_mask(image, visible)
    out_path = run_dir / safe_dirname(outcome.question_id) / "masked.png"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(to_png_bytes(masked))
    return out_path


def cmd_inspect(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    qdir = run_dir / safe_dirname(args.question_id)
    outcome_path = qdir / "outcome.json"
    if not outcome_path.is_file():
        raise CliError(f"question {args.question_id!r} not found in {run_dir}", EXIT_UNKNOWN_QUESTION)
    try:
        outcome = QuestionOutcome.from_payload(
            json.loads(outcome_path.read_text(encoding="utf-8"))
        )
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CliError(
            f"outcome for {args.question_id!r} is unreadable: {exc}", EXIT_UNKNOWN_QUESTION
        ) from exc

    print(f"question_id: {outcome.question_id}")
    if outcome.failed:
        print(f"status: FAILED at stage {outcome.failed_stage}")
        print(f"error: {outcome.error}")
    else:
        print("status: completed")
    if outcome.explanation is not None:
        print(f"explanation: {outcome.explanation}")
    if outcome.selection is not None:
        print(f"selected cells (linear): {outcome.selection['selected']}")
        print(f"votes: {outcome.selection['votes']}")
        print(f"mean scores: {[round(s, 4) for s in outcome.selection['mean_scores']]}")
    if outcome.answer is not None:
        print(f"answer: {outcome.answer}")
    if outcome.judgment is not None:
        print(
            f"judgment: em={outcome.judgment.em} anls={outcome.judgment.anls_score:.4f} "
            f"best_reference={outcome.judgment.best_reference}"
        )
    print(f"stage seconds: {outcome.stage_seconds}")
    print(f"total seconds: {outcome.total_seconds:.4f}")

    masked_path = qdir / "masked.png"
    if not masked_path.is_file() and outcome.selection is not None:
        rebuilt = _rebuild_masked(run_dir, outcome)
        if rebuilt is not None:
            masked_path = rebuilt
    if masked_path.is_file():
        print(f"masked image: {masked_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eagers",
        description=(
            "Document VQA with explanation-guided grid masking: generate a spatial "
            "explanation, select evidence cells by embedding-ensemble vote, mask the "
            "rest, and re-query on the masked page."
        ),
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate a split and write a run directory")
    run.add_argument("--config", default="eagers_25_0", help="preset name or TOML path")
    run.add_argument("--dataset-root", default=".", help="directory image paths resolve against")
    run.add_argument("--split-file", default=None, help="split JSON (default: <root>/split.json)")
    run.add_argument("--mode", choices=[MODE_EAGERS, MODE_BASELINE], default=None)
    run.add_argument("--mock", choices=["planted", "fixture"], default=None)
    run.add_argument("--out", default="out", help="output directory for runs and caches")
    run.add_argument("--max-side", type=int, default=None, help="resize target for the longest side")
    run.add_argument("--base-url", default=None, help=f"backend URL (or ${BASE_URL_ENV})")
    run.add_argument("--concurrency", type=int, default=None)
    run.add_argument("--save-masked", action="store_true", help="write masked.png per question")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="tabulate one or more completed runs")
    rep.add_argument("run_dirs", nargs="+", help="run directories (out/runs/<hash>)")
    rep.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    rep.set_defaults(func=cmd_report)

    ins = sub.add_parser("inspect", help="dump one question's stage trace")
    ins.add_argument("run_dir", help="run directory (out/runs/<hash>)")
    ins.add_argument("question_id")
    ins.set_defaults(func=cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except EagersError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
