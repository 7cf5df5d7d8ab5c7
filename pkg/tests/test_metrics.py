import random
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eagers.errors import EmptyRunError, InvalidReferenceError
from eagers.metrics import (
    AnswerJudgment,
    aggregate,
    anls_single,
    exact_match,
    judge,
    levenshtein,
    normalize_answer,
    normalized_similarity,
    timing_stats,
)


def dp_levenshtein(a: str, b: str) -> int:
    """Full-matrix textbook distance, kept separate from the library."""
    m, n = len(a), len(b)
    d = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        d[i][0] = i
    for j in range(n + 1):
        d[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost)
    return d[m][n]


def test_normalize_answer():
    assert normalize_answer("  Foo   BAR ") == "foo bar"
    assert normalize_answer("\tA\nB\n") == "a b"
    assert normalize_answer("") == ""


def test_levenshtein_examples():
    assert levenshtein("", "abc") == 3
    assert levenshtein("kitten", "kitten") == 0
    assert levenshtein("building", "buildings") == 1
    assert levenshtein("kitten", "sitting") == 3


def test_levenshtein_matches_dp_oracle():
    r = random.Random(42)
    alphabet = "abcde "
    for _ in range(300):
        a = "".join(r.choice(alphabet) for _ in range(r.randrange(0, 12)))
        b = "".join(r.choice(alphabet) for _ in range(r.randrange(0, 12)))
        assert levenshtein(a, b) == dp_levenshtein(a, b)


short_strings = st.text(alphabet="abcXYZ 09", max_size=12)


@given(a=short_strings, b=short_strings, c=short_strings)
@settings(max_examples=100)
def test_levenshtein_is_a_metric(a, b, c):
    assert levenshtein(a, b) == levenshtein(b, a)
    assert (levenshtein(a, b) == 0) == (a == b)
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


def test_normalized_similarity_examples():
    assert normalized_similarity("Answer", "answer") == 1.0
    assert normalized_similarity("abc", "xyz") == 0.0
    assert normalized_similarity("building", "buildings") == pytest.approx(8 / 9)
    assert normalized_similarity("", "") == 1.0
    assert normalized_similarity("", "x") == 0.0


@given(a=short_strings, b=short_strings)
@settings(max_examples=100)
def test_normalized_similarity_bounds(a, b):
    s = normalized_similarity(a, b)
    assert 0.0 <= s <= 1.0
    assert (s == 1.0) == (normalize_answer(a) == normalize_answer(b))


def test_anls_examples():
    assert anls_single("tower", ["Tower"]) == 1.0
    assert anls_single("abcde", ["vwxyz"], 0.5) == 0.0
    assert anls_single("buildings", ["building", "tower"], 0.5) == pytest.approx(8 / 9)


def test_anls_threshold_jump():
    # similarity 0.6 passes a 0.6 threshold and fails anything above it
    pred, ref = "abcde", "abcxy"
    assert normalized_similarity(pred, ref) == pytest.approx(0.6)
    assert anls_single(pred, [ref], threshold=0.6) == pytest.approx(0.6)
    assert anls_single(pred, [ref], threshold=0.601) == 0.0


def test_anls_validation():
    with pytest.raises(InvalidReferenceError):
        anls_single("x", [])
    with pytest.raises(InvalidReferenceError):
        anls_single("x", ["y"], threshold=1.5)


def test_exact_match_examples():
    assert exact_match(" Yes ", ["yes"]) == 1
    assert exact_match("12", ["12.0"]) == 0
    assert exact_match("mr. smith", ["Mr.  Smith"]) == 1
    assert exact_match("Yes", ["yes"], normalize=False) == 0
    assert exact_match("yes", ["yes"], normalize=False) == 1
    with pytest.raises(InvalidReferenceError):
        exact_match("x", [])


@given(p=short_strings, refs=st.lists(short_strings, min_size=1, max_size=3))
@settings(max_examples=100)
def test_em_implies_full_anls(p, refs):
    if exact_match(p, refs) == 1:
        assert anls_single(p, refs, 0.5) == 1.0
        assert anls_single(p, refs, 1.0) == 1.0


def test_judge_fields():
    j = judge("buildings", ["tower", "building"])
    assert j.em == 0
    assert j.anls_score == pytest.approx(8 / 9)
    assert j.best_reference == 1
    perfect = judge("Paris", ["paris"])
    assert perfect.em == 1 and perfect.anls_score == 1.0


def test_timing_stats_examples():
    flat = timing_stats([2.0, 2.0, 2.0])
    assert flat.mean_seconds == 2.0 and flat.cv_percent == 0.0 and flat.cv_defined

    t = timing_stats([10.0, 20.0, 30.0])
    assert t.mean_seconds == pytest.approx(20.0)
    assert t.cv_percent == pytest.approx(40.82, abs=0.01)
    assert t.n == 3

    zero = timing_stats([0.0, 0.0])
    assert zero.cv_percent == 0.0 and not zero.cv_defined


def test_timing_stats_uses_population_std():
    data = [1.0, 5.0, 9.0, 2.0]
    t = timing_stats(data)
    want = 100.0 * statistics.pstdev(data) / statistics.fmean(data)
    assert t.cv_percent == pytest.approx(want)


def test_timing_stats_validation():
    with pytest.raises(EmptyRunError):
        timing_stats([])
    with pytest.raises(EmptyRunError):
        timing_stats([1.0, -0.5])


def test_aggregate_perfect_and_singleton():
    perfect = [AnswerJudgment(em=1, anls_score=1.0, best_reference=0)] * 4
    result = aggregate(perfect, [1.0, 2.0, 3.0, 4.0])
    assert result.em_percent == 100.0
    assert result.anls_percent == 100.0

    single = aggregate([AnswerJudgment(em=0, anls_score=0.75, best_reference=0)], [3.0])
    assert single.em_percent == 0.0
    assert single.anls_percent == 75.0
    assert single.timing.mean_seconds == 3.0
    assert single.timing.cv_percent == 0.0


def test_aggregate_mixed():
    judgments = [
        AnswerJudgment(em=1, anls_score=1.0, best_reference=0),
        AnswerJudgment(em=1, anls_score=1.0, best_reference=0),
        AnswerJudgment(em=1, anls_score=1.0, best_reference=0),
        AnswerJudgment(em=0, anls_score=0.0, best_reference=0),
    ]
    result = aggregate(judgments, [1.0] * 4)
    assert result.em_percent == 75.0
    assert result.anls_percent == 75.0


def test_aggregate_validation():
    with pytest.raises(EmptyRunError):
        aggregate([], [])
    with pytest.raises(EmptyRunError):
        aggregate([AnswerJudgment(em=1, anls_score=1.0, best_reference=0)], [1.0, 2.0])
