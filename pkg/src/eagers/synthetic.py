"""Planted-evidence synthetic corpus for offline end-to-end testing.

Each generated page is white with one evidence marker (solid red block) in
a known grid cell and one decoy marker (solid blue block) in another. The
matching planted manifest tells mock backends where the evidence lives and
what the reference answer is, so a full run can be verified without any
model. Marker blocks are inset within their cell, covering well over the
detection threshold used by the mocks.
"""

from __future__ import annotations

import argparse
import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetFormatError
from .geometry import GridSpec, partition
from .imaging import ImageBuffer, save_png

EVIDENCE_RGB = (255, 0, 0)
DECOY_RGB = (0, 0, 255)
MARKER_INSET_FRACTION = 0.2

SPLIT_FILENAME = "split.json"
PLANTED_FILENAME = "planted.json"
IMAGES_DIRNAME = "images"


@dataclass(frozen=True, slots=True)
class PlantedRecord:
    """Ground truth for one synthetic question."""

    question_id: str
    question: str
    answer: str
    planted_cell: int
    decoy_cell: int


@dataclass(frozen=True, slots=True)
class PlantedManifest:
    grid: GridSpec
    records: tuple[PlantedRecord, ...]

    def by_question(self) -> dict[str, PlantedRecord]:
        return {r.question: r for r in self.records}


def _inset(rect_left: int, rect_top: int, rect_right: int, rect_bottom: int) -> tuple[int, int, int, int]:
    w = rect_right - rect_left
    h = rect_bottom - rect_top
    dx = max(1, int(w * MARKER_INSET_FRACTION))
    dy = max(1, int(h * MARKER_INSET_FRACTION))
    return rect_left + dx, rect_top + dy, rect_right - dx, rect_bottom - dy


def _draw_block(arr: np.ndarray, box: tuple[int, int, int, int], rgb: tuple[int, int, int]) -> None:
    l, t, r, b = box
    arr[t:b, l:r] = rgb


def generate_corpus(
    root: str | Path,
    count: int,
    grid: GridSpec,
    image_size: tuple[int, int] = (500, 400),
    seed: int = 7,
) -> PlantedManifest:
    """Write images, a split file, and a planted manifest under root."""
    if count < 1:
        raise DatasetFormatError(f"corpus needs at least one question, got {count}")
    if grid.cell_count < 2:
        raise DatasetFormatError("corpus grid needs at least two cells for a decoy")
    root = Path(root)
    images_dir = root / IMAGES_DIRNAME
    images_dir.mkdir(parents=True, exist_ok=True)
    width, height = image_size
    cells = partition(width, height, grid)
    rng = random.Random(seed)

    records: list[PlantedRecord] = []
    split_rows: list[dict] = []
    deck: list[int] = []
    for i in range(count):
        qid = f"q{i:04d}"
        question = f"What value does record {i:04d} hold?"
        answer = f"{rng.randrange(10000):04d}"
        if not deck:
            # deal evidence cells from a shuffled deck so small corpora
            # cover distinct cells instead of clustering by chance
            deck = list(range(grid.cell_count))
            rng.shuffle(deck)
        planted = deck.pop()
        decoy = rng.randrange(grid.cell_count - 1)
        if decoy >= planted:
            decoy += 1

        arr = np.full((height, width, 3), 255, dtype=np.uint8)
        pr = cells[planted]
        _draw_block(arr, _inset(pr.left, pr.top, pr.right, pr.bottom), EVIDENCE_RGB)
        dr = cells[decoy]
        _draw_block(arr, _inset(dr.left, dr.top, dr.right, dr.bottom), DECOY_RGB)
        # a couple of gray smudges so page digests differ even when markers
        # land in the same cells
        for _ in range(3):
            sx = rng.randrange(width - 8)
            sy = rng.randrange(height - 8)
            shade = rng.randrange(180, 230)
            patch = arr[sy : sy + 8, sx : sx + 8]
            patch[(patch == 255).all(axis=2)] = (shade, shade, shade)

        image_rel = f"{IMAGES_DIRNAME}/{qid}.png"
        save_png(ImageBuffer.from_array(arr), root / image_rel)
        split_rows.append(
            {"questionId": qid, "question": question, "image": image_rel, "answers": [answer]}
        )
        records.append(
            PlantedRecord(
                question_id=qid,
                question=question,
                answer=answer,
                planted_cell=planted,
                decoy_cell=decoy,
            )
        )

    (root / SPLIT_FILENAME).write_text(
        json.dumps({"data": split_rows}, indent=2, sort_keys=True), encoding="utf-8"
    )
    manifest = PlantedManifest(grid=grid, records=tuple(records))
    (root / PLANTED_FILENAME).write_text(
        json.dumps(
            {
                "version": 1,
                "grid": {"rows": grid.rows, "cols": grid.cols},
                "records": [
                    {
                        "question_id": r.question_id,
                        "question": r.question,
                        "answer": r.answer,
                        "planted_cell": r.planted_cell,
                        "decoy_cell": r.decoy_cell,
                    }
                    for r in records
                ],
            },
            indent=2,
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    return manifest


def load_planted_manifest(path: str | Path) -> PlantedManifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DatasetFormatError(f"cannot read planted manifest {path}: {exc}") from exc
    try:
        grid = GridSpec(rows=int(raw["grid"]["rows"]), cols=int(raw["grid"]["cols"]))
        records = tuple(
            PlantedRecord(
                question_id=str(r["question_id"]),
                question=str(r["question"]),
                answer=str(r["answer"]),
                planted_cell=int(r["planted_cell"]),
                decoy_cell=int(r["decoy_cell"]),
            )
            for r in raw["records"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"planted manifest {path} is malformed: {exc}") from exc
    return PlantedManifest(grid=grid, records=records)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m eagers.synthetic",
        description="Generate a planted-evidence synthetic corpus.",
    )
    parser.add_argument("--out", required=True, help="corpus root directory")
    parser.add_argument("--count", type=int, default=25)
    parser.add_argument("--rows", type=int, default=5)
    parser.add_argument("--cols", type=int, default=5)
    parser.add_argument("--width", type=int, default=500)
    parser.add_argument("--height", type=int, default=400)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)
    generate_corpus(
        args.out,
        count=args.count,
        grid=GridSpec(rows=args.rows, cols=args.cols),
        image_size=(args.width, args.height),
        seed=args.seed,
    )
    print(f"wrote {args.count} questions under {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
