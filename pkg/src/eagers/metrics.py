"""Answer-quality metrics (EM, normalized Levenshtein, ANLS) and run timing.

All string comparisons share one normalization: lowercase, strip, and
collapse internal whitespace runs to single spaces.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass

from .errors import EmptyRunError, InvalidReferenceError

DEFAULT_ANLS_THRESHOLD = 0.5


def normalize_answer(s: str) -> str:
    return " ".join(s.lower().split())


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over Unicode scalar values, two-row DP."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        curr = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            curr[j] = min(prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + cost)
        prev = curr
    return prev[-1]


def normalized_similarity(a: str, b: str) -> float:
    """1 minus normalized edit distance between the normalized strings.

    Both-empty compares as 1.0; one-empty as 0.0.
    """
    na = normalize_answer(a)
    nb = normalize_answer(b)
    longest = max(len(na), len(nb))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(na, nb) / longest


def anls_single(
    prediction: str,
    references: list[str],
    threshold: float = DEFAULT_ANLS_THRESHOLD,
) -> float:
    """Best normalized similarity against any reference, zeroed below threshold."""
    if not references:
        raise InvalidReferenceError("reference list is empty")
    if not 0 <= threshold <= 1:
        raise InvalidReferenceError(f"threshold must be in [0, 1], got {threshold}")
    best = max(normalized_similarity(prediction, r) for r in references)
    return best if best >= threshold else 0.0


def exact_match(prediction: str, references: list[str], normalize: bool = True) -> int:
    """1 iff the prediction equals any reference; normalized by default."""
    if not references:
        raise InvalidReferenceError("reference list is empty")
    if normalize:
        p = normalize_answer(prediction)
        return 1 if any(p == normalize_answer(r) for r in references) else 0
    return 1 if any(prediction == r for r in references) else 0


@dataclass(frozen=True, slots=True)
class AnswerJudgment:
    """One prediction scored against its reference answers."""

    em: int
    anls_score: float
    best_reference: int


def judge(
    prediction: str,
    references: list[str],
    threshold: float = DEFAULT_ANLS_THRESHOLD,
) -> AnswerJudgment:
    if not references:
        raise InvalidReferenceError("reference list is empty")
    similarities = [normalized_similarity(prediction, r) for r in references]
    best_idx = max(range(len(references)), key=lambda i: similarities[i])
    best = similarities[best_idx]
    anls = best if best >= threshold else 0.0
    return AnswerJudgment(
        em=exact_match(prediction, references),
        anls_score=anls,
        best_reference=best_idx,
    )


@dataclass(frozen=True, slots=True)
class TimingStats:
    """Mean and coefficient of variation over per-question run times.

    cv_percent is 100 * population_std / mean; when the mean is zero the
    ratio is undefined and reported as 0.0 with cv_defined False.
    """

    mean_seconds: float
    cv_percent: float
    n: int
    cv_defined: bool


def timing_stats(timings: list[float]) -> TimingStats:
    if not timings:
        raise EmptyRunError("no timings to aggregate")
    if any(t < 0 for t in timings):
        raise EmptyRunError("timings must be non-negative")
    mean = statistics.fmean(timings)
    if mean == 0:
        return TimingStats(mean_seconds=0.0, cv_percent=0.0, n=len(timings), cv_defined=False)
    cv = 100.0 * statistics.pstdev(timings) / mean
    return TimingStats(mean_seconds=mean, cv_percent=cv, n=len(timings), cv_defined=True)


@dataclass(frozen=True, slots=True)
class AggregateResult:
    """Run-level quality and timing summary."""

    em_percent: float
    anls_percent: float
    timing: TimingStats


def aggregate(judgments: list[AnswerJudgment], timings: list[float]) -> AggregateResult:
    if not judgments:
        raise EmptyRunError("no judgments to aggregate")
    if len(judgments) != len(timings):
        raise EmptyRunError(
            f"judgment/timing count mismatch: {len(judgments)} vs {len(timings)}"
        )
    em = 100.0 * sum(j.em for j in judgments) / len(judgments)
    anls = 100.0 * sum(j.anls_score for j in judgments) / len(judgments)
    return AggregateResult(em_percent=em, anls_percent=anls, timing=timing_stats(timings))
