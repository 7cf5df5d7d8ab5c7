import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eagers.errors import (
    DegenerateVectorError,
    IncompleteEmbeddingError,
    InvalidGeometryError,
    ShapeMismatchError,
)
from eagers.geometry import CellIndex, GridSpec, selection_count
from eagers.ranking import SimilarityMatrix, cosine, fuse_majority, score_cells


def reference_fuse(scores, k):
    """Independent brute-force fusion: returns selected linear indices."""
    cells = len(scores[0])
    votes = [0] * cells
    for row in scores:
        ranked = sorted(range(cells), key=lambda c: (-row[c], c))
        for c in ranked[:k]:
            votes[c] += 1
    means = [sum(row[c] for row in scores) / len(scores) for c in range(cells)]
    ordered = sorted(range(cells), key=lambda c: (-votes[c], -means[c], c))
    return ordered[:k], votes, means


def test_cosine_examples():
    assert cosine((1, 2, 3), (1, 2, 3)) == 1.0
    assert cosine((1, 0), (0, 1)) == 0.0
    assert abs(cosine((1, 1), (1, 0)) - 1 / math.sqrt(2)) < 1e-6


def test_cosine_errors():
    with pytest.raises(ShapeMismatchError):
        cosine((1, 2), (1, 2, 3))
    with pytest.raises(ShapeMismatchError):
        cosine((), ())
    with pytest.raises(DegenerateVectorError):
        cosine((0, 0), (1, 2))


def test_cosine_clamped_to_unit_interval():
    r = random.Random(5)
    for _ in range(200):
        dim = r.randrange(1, 6)
        a = [r.uniform(-10, 10) for _ in range(dim)]
        b = [r.uniform(-10, 10) for _ in range(dim)]
        if not any(a) or not any(b):
            continue
        assert -1.0 <= cosine(a, b) <= 1.0


def test_score_cells_identical_vectors_give_ones():
    v = (0.3, -0.2, 0.9)
    sim = score_cells({"e": v}, {"e": [v, v, v]})
    assert sim.scores == ((1.0, 1.0, 1.0),)
    assert sim.embedder_ids == ("e",)


def test_score_cells_constructed_matrix():
    explanation = {"a": (1.0, 0.0), "b": (0.0, 1.0)}
    cells = {"a": [(1.0, 0.0), (0.0, 1.0)], "b": [(1.0, 0.0), (0.0, 1.0)]}
    sim = score_cells(explanation, cells)
    assert sim.scores == ((1.0, 0.0), (0.0, 1.0))


def test_score_cells_matches_naive_oracle():
    r = random.Random(9)
    explanation = {}
    cells = {}
    for e in ("x", "y", "z"):
        dim = r.randrange(2, 8)
        explanation[e] = tuple(r.uniform(-1, 1) for _ in range(dim))
        cells[e] = [tuple(r.uniform(-1, 1) for _ in range(dim)) for _ in range(6)]
    sim = score_cells(explanation, cells)
    for i, e in enumerate(("x", "y", "z")):
        for c in range(6):
            a, b = explanation[e], cells[e][c]
            dot = sum(p * q for p, q in zip(a, b))
            na = math.sqrt(sum(p * p for p in a))
            nb = math.sqrt(sum(q * q for q in b))
            assert abs(sim.scores[i][c] - dot / (na * nb)) < 1e-9


def test_score_cells_incomplete_inputs():
    with pytest.raises(IncompleteEmbeddingError):
        score_cells({}, {})
    with pytest.raises(IncompleteEmbeddingError):
        score_cells({"a": (1.0,)}, {})
    with pytest.raises(IncompleteEmbeddingError):
        score_cells(
            {"a": (1.0,), "b": (1.0,)},
            {"a": [(1.0,), (1.0,)], "b": [(1.0,)]},
        )


def test_similarity_matrix_validation():
    with pytest.raises(InvalidGeometryError):
        SimilarityMatrix(embedder_ids=(), scores=())
    with pytest.raises(InvalidGeometryError):
        SimilarityMatrix(embedder_ids=("a",), scores=((0.1, 0.2), (0.3, 0.4)))
    with pytest.raises(InvalidGeometryError):
        SimilarityMatrix(embedder_ids=("a",), scores=((float("nan"), 0.0),))
    with pytest.raises(InvalidGeometryError):
        SimilarityMatrix(embedder_ids=("a", "b"), scores=((0.1, 0.2), (0.3,)))


def test_fuse_majority_worked_example():
    # three voters over four cells, two winners; means break the three-way tie
    sim = SimilarityMatrix(
        embedder_ids=("e1", "e2", "e3"),
        scores=(
            (0.9, 0.8, 0.1, 0.2),
            (0.9, 0.1, 0.8, 0.2),
            (0.1, 0.9, 0.8, 0.2),
        ),
    )
    grid = GridSpec(rows=1, cols=4)
    assert selection_count(grid) == 2
    result = fuse_majority(sim, grid)
    assert result.votes == (2, 2, 2, 0)
    assert result.mean_scores[0] == pytest.approx(0.6333, abs=1e-4)
    assert result.mean_scores[1] == pytest.approx(0.6, abs=1e-9)
    assert result.mean_scores[2] == pytest.approx(0.5667, abs=1e-4)
    assert [c.linear(grid) for c in result.selected] == [0, 1]


def test_fuse_majority_unanimous():
    sim = SimilarityMatrix(
        embedder_ids=("a", "b", "c"),
        scores=tuple(((0.9, 0.8, 0.1, 0.0),) * 3),
    )
    grid = GridSpec(rows=2, cols=2)
    result = fuse_majority(sim, grid)
    assert result.votes == (3, 3, 0, 0)
    assert {c.linear(grid) for c in result.selected} == {0, 1}


def test_fuse_majority_single_embedder_is_plain_ranking():
    sim = SimilarityMatrix(embedder_ids=("solo",), scores=((0.1, 0.9, 0.5, 0.7),))
    grid = GridSpec(rows=1, cols=4)
    result = fuse_majority(sim, grid)
    assert [c.linear(grid) for c in result.selected] == [1, 3]


def test_fuse_majority_within_embedder_ties_prefer_lower_index():
    sim = SimilarityMatrix(embedder_ids=("a",), scores=((0.5, 0.5, 0.5, 0.5),))
    grid = GridSpec(rows=1, cols=4)
    result = fuse_majority(sim, grid)
    assert [c.linear(grid) for c in result.selected] == [0, 1]


def test_fuse_majority_grid_mismatch():
    sim = SimilarityMatrix(embedder_ids=("a",), scores=((0.5, 0.5),))
    with pytest.raises(InvalidGeometryError):
        fuse_majority(sim, GridSpec(rows=2, cols=2))


score_rows = st.lists(
    st.floats(min_value=-1, max_value=1, allow_nan=False, width=32),
    min_size=6,
    max_size=6,
)


@given(rows=st.lists(score_rows, min_size=1, max_size=3))
@settings(max_examples=100)
def test_fuse_majority_matches_reference(rows):
    scores = tuple(tuple(r) for r in rows)
    sim = SimilarityMatrix(embedder_ids=tuple(f"e{i}" for i in range(len(rows))), scores=scores)
    grid = GridSpec(rows=2, cols=3)
    result = fuse_majority(sim, grid)
    want, votes, means = reference_fuse(scores, selection_count(grid))
    assert [c.linear(grid) for c in result.selected] == want
    assert list(result.votes) == votes
    assert list(result.mean_scores) == means


@given(rows=st.lists(score_rows, min_size=1, max_size=3))
@settings(max_examples=60)
def test_fuse_majority_selection_size_and_uniqueness(rows):
    sim = SimilarityMatrix(
        embedder_ids=tuple(f"e{i}" for i in range(len(rows))),
        scores=tuple(tuple(r) for r in rows),
    )
    grid = GridSpec(rows=2, cols=3)
    result = fuse_majority(sim, grid)
    assert len(result.selected) == selection_count(grid)
    assert len(set(result.selected)) == len(result.selected)


def test_fuse_majority_scale_invariance():
    # cosine ignores positive scaling of one embedder's vectors, so fusion
    # over rescaled embeddings cannot change
    r = random.Random(31)
    grid = GridSpec(rows=2, cols=3)
    for _ in range(20):
        explanation = {}
        cells = {}
        for e in ("a", "b", "c"):
            dim = 5
            explanation[e] = tuple(r.uniform(0.1, 1) for _ in range(dim))
            cells[e] = [tuple(r.uniform(0.1, 1) for _ in range(dim)) for _ in range(6)]
        base = fuse_majority(score_cells(explanation, cells), grid)
        scaled_cells = dict(cells)
        scaled_cells["b"] = [tuple(7.5 * v for v in vec) for vec in cells["b"]]
        scaled = fuse_majority(score_cells(explanation, scaled_cells), grid)
        assert scaled.selected == base.selected
        assert scaled.votes == base.votes


def test_fuse_majority_permutation_equivariance():
    r = random.Random(13)
    grid = GridSpec(rows=1, cols=6)
    scores = tuple(tuple(r.uniform(-1, 1) for _ in range(6)) for _ in range(3))
    perm = list(range(6))
    r.shuffle(perm)
    permuted = tuple(tuple(row[perm[c]] for c in range(6)) for row in scores)
    ids = ("a", "b", "c")
    base = fuse_majority(SimilarityMatrix(embedder_ids=ids, scores=scores), grid)
    moved = fuse_majority(SimilarityMatrix(embedder_ids=ids, scores=permuted), grid)
    base_set = {c.linear(grid) for c in base.selected}
    moved_set = {perm[c.linear(grid)] for c in moved.selected}
    assert moved_set == base_set


def test_fuse_majority_deterministic():
    sim = SimilarityMatrix(
        embedder_ids=("a", "b"),
        scores=((0.5, 0.4, 0.3, 0.2, 0.1, 0.0), (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)),
    )
    grid = GridSpec(rows=2, cols=3)
    first = fuse_majority(sim, grid)
    for _ in range(5):
        assert fuse_majority(sim, grid) == first
