"""Cosine scoring of sub-regions against an explanation, and majority fusion.

Each embedder ranks all grid cells by cosine similarity to the explanation.
A cell earns one vote per embedder whose top-k contains it; the final
selection orders cells by votes, then mean cosine, then linear index.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from .errors import (
    DegenerateVectorError,
    IncompleteEmbeddingError,
    InvalidGeometryError,
    ShapeMismatchError,
)
from .geometry import CellIndex, GridSpec, cell_from_linear, selection_count

EmbeddingVector = Sequence[float]


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity, clamped to [-1, 1] against float rounding."""
    if len(a) != len(b):
        raise ShapeMismatchError(f"vector dims differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise ShapeMismatchError("vectors must have at least one component")
    dot = 0.0
    norm_a = 0.0
    norm_b = 0.0
    for x, y in zip(a, b):
        dot += x * y
        norm_a += x * x
        norm_b += y * y
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegenerateVectorError("cosine undefined for zero-norm vector")
    value = dot / math.sqrt(norm_a * norm_b)
    return max(-1.0, min(1.0, value))


@dataclass(frozen=True, slots=True)
class SimilarityMatrix:
    """Per-embedder cosine scores for every grid cell.

    scores[e][c] is embedder embedder_ids[e]'s similarity between the
    explanation and cell c (linear index).
    """

    embedder_ids: tuple[str, ...]
    scores: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        if len(self.embedder_ids) < 1:
            raise InvalidGeometryError("similarity matrix needs at least one embedder")
        if len(self.scores) != len(self.embedder_ids):
            raise InvalidGeometryError(
                f"{len(self.scores)} score rows for {len(self.embedder_ids)} embedders"
            )
        width = len(self.scores[0])
        if width < 1:
            raise InvalidGeometryError("similarity matrix needs at least one cell")
        for row in self.scores:
            if len(row) != width:
                raise InvalidGeometryError("similarity matrix rows have uneven lengths")
            for v in row:
                if not math.isfinite(v):
                    raise InvalidGeometryError(f"non-finite similarity score {v!r}")

    @property
    def cell_count(self) -> int:
        return len(self.scores[0])


def score_cells(
    explanation_embs: Mapping[str, EmbeddingVector],
    cell_embs: Mapping[str, Sequence[EmbeddingVector]],
) -> SimilarityMatrix:
    """Build the E x cells cosine matrix from per-embedder vectors.

    Every embedder must supply one explanation vector and the same number of
    cell vectors as every other embedder.
    """
    ids = tuple(explanation_embs.keys())
    if not ids:
        raise IncompleteEmbeddingError("no explanation embeddings provided")
    missing = [e for e in ids if e not in cell_embs]
    if missing:
        raise IncompleteEmbeddingError(f"embedders missing cell vectors: {missing}")
    counts = {e: len(cell_embs[e]) for e in ids}
    distinct = set(counts.values())
    if len(distinct) != 1:
        raise IncompleteEmbeddingError(f"embedders disagree on cell count: {counts}")
    if distinct == {0}:
        raise IncompleteEmbeddingError("embedders provided zero cell vectors")
    rows = []
    for e in ids:
        exp = explanation_embs[e]
        rows.append(tuple(cosine(exp, cell) for cell in cell_embs[e]))
    return SimilarityMatrix(embedder_ids=ids, scores=tuple(rows))


@dataclass(frozen=True, slots=True)
class SelectionResult:
    """Outcome of majority fusion over a similarity matrix."""

    selected: tuple[CellIndex, ...]
    votes: tuple[int, ...]
    mean_scores: tuple[float, ...]


def fuse_majority(sim: SimilarityMatrix, grid: GridSpec) -> SelectionResult:
    """Select k = ceil(30% of cells) cells by top-k membership voting.

    Each embedder's k highest-cosine cells (score ties broken toward the
    lower linear index) receive one vote each. Cells are then ordered by
    votes desc, mean cosine desc, linear index asc, and the first k form
    the selection.
    """
    cells = sim.cell_count
    if cells != grid.cell_count:
        raise InvalidGeometryError(
            f"matrix covers {cells} cells but grid has {grid.cell_count}"
        )
    k = selection_count(grid)
    n_emb = len(sim.embedder_ids)

    votes = [0] * cells
    for row in sim.scores:
        # sort on (-score, index): within an embedder, equal scores rank the
        # lower linear index first
        order = sorted(range(cells), key=lambda c: (-row[c], c))
        for c in order[:k]:
            votes[c] += 1

    means = [sum(row[c] for row in sim.scores) / n_emb for c in range(cells)]
    order = sorted(range(cells), key=lambda c: (-votes[c], -means[c], c))
    selected = tuple(cell_from_linear(c, grid) for c in order[:k])
    return SelectionResult(
        selected=selected,
        votes=tuple(votes),
        mean_scores=tuple(means),
    )
