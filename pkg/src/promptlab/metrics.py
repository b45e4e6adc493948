"""Evaluation metrics and significance testing.

Pure functions over plain sequences; every ranking-sensitive computation
defines its tie behaviour explicitly so results never depend on input
order or sort stability.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Collection, Hashable, Iterable, Sequence

from .core import ScoreVector, SplitMix64, derive_streams, LabelSpace


def _check_paired(a: Sequence, b: Sequence) -> None:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if not a:
        raise ValueError("empty input")


def accuracy(golds: Sequence[str], preds: Sequence[str]) -> float:
    _check_paired(golds, preds)
    return sum(g == p for g, p in zip(golds, preds)) / len(golds)


@dataclass(frozen=True)
class PRF1:
    precision: float
    recall: float
    f1: float


def _prf1(tp: int, fp: int, fn: int) -> PRF1:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF1(precision=precision, recall=recall, f1=f1)


def prf1_from_predictions(golds: Sequence[bool], preds: Sequence[bool]) -> PRF1:
    """Precision/recall/F1 of the positive class; 0/0 counts as 0.0."""
    _check_paired(golds, preds)
    tp = sum(g and p for g, p in zip(golds, preds))
    fp = sum((not g) and p for g, p in zip(golds, preds))
    fn = sum(g and (not p) for g, p in zip(golds, preds))
    return _prf1(tp, fp, fn)


def prf1_binary(
    scores: Sequence[float], golds: Sequence[bool], threshold: float
) -> PRF1:
    """Threshold scores into predictions (score >= threshold) and report P/R/F1."""
    _check_paired(scores, golds)
    return prf1_from_predictions(golds, [s >= threshold for s in scores])


@dataclass(frozen=True)
class MulticlassReport:
    accuracy: float
    macro_f1: float
    per_label: tuple[tuple[str, PRF1], ...]
    confusion: tuple[tuple[int, ...], ...]


def multiclass_report(
    preds: Sequence[str], golds: Sequence[str], space: LabelSpace
) -> MulticlassReport:
    """Accuracy, per-label P/R/F1, macro-F1, and a confusion matrix.

    Macro-F1 averages over every label in the space; a label absent from
    both golds and predictions contributes 0.0 rather than being skipped.
    Confusion rows are indexed by gold label, columns by predicted label,
    both in label-space order.
    """
    _check_paired(preds, golds)
    for value in list(golds) + list(preds):
        if value not in space:
            raise ValueError(f"label {value!r} not in label space")
    per_label = []
    for label in space.ids:
        tp = sum(g == label and p == label for g, p in zip(golds, preds))
        fp = sum(g != label and p == label for g, p in zip(golds, preds))
        fn = sum(g == label and p != label for g, p in zip(golds, preds))
        per_label.append((label, _prf1(tp, fp, fn)))
    macro = sum(r.f1 for _, r in per_label) / len(per_label)
    confusion = tuple(
        tuple(
            sum(g == gold and p == pred for g, p in zip(golds, preds))
            for pred in space.ids
        )
        for gold in space.ids
    )
    return MulticlassReport(
        accuracy=accuracy(golds, preds),
        macro_f1=macro,
        per_label=tuple(per_label),
        confusion=confusion,
    )


def aupr(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Area under the precision-recall curve (average precision).

    Tied scores form one atomic block evaluated at the block's end, so the
    value is independent of input order.
    """
    _check_paired(scores, labels)
    total_pos = sum(labels)
    if total_pos == 0:
        raise ValueError("AUPR is undefined with no positives")
    by_score: dict[float, list[int]] = {}
    for score, label in zip(scores, labels):
        counts = by_score.setdefault(float(score), [0, 0])
        counts[0] += 1
        counts[1] += int(label)
    seen = 0
    seen_pos = 0
    area = 0.0
    for score in sorted(by_score, reverse=True):
        n, pos = by_score[score]
        seen += n
        seen_pos += pos
        area += pos * (seen_pos / seen)
    return area / total_pos


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    _check_paired(x, y)
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    if vx == 0.0 or vy == 0.0:
        raise ValueError("correlation is undefined for a constant sequence")
    return cov / math.sqrt(vx * vy)


def _average_ranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2 + 1  # average of the 1-based positions i..j
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation: Pearson over average (fractional) ranks."""
    return pearson(_average_ranks(x), _average_ranks(y))


def entropy_base2(probs: Sequence[float]) -> float:
    """Shannon entropy in bits of a probability distribution.

    Requires non-negative entries summing to 1 within 1e-9; a zero
    probability contributes zero.
    """
    if not probs:
        raise ValueError("empty distribution")
    for p in probs:
        if p < 0:
            raise ValueError(f"negative probability {p}")
    total_mass = sum(probs)
    if abs(total_mass - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {total_mass}, not 1")
    total = 0.0
    for p in probs:
        if p > 0:
            total -= p * math.log2(p)
    return total


def softmax(scores: Sequence[float] | ScoreVector) -> list[float]:
    """Numerically stable softmax (maximum subtracted before exponentiation)."""
    if isinstance(scores, ScoreVector):
        scores = scores.scores
    if not scores:
        raise ValueError("empty scores")
    peak = max(scores)
    exps = [math.exp(s - peak) for s in scores]
    norm = sum(exps)
    return [e / norm for e in exps]


def label_normalized_histogram(
    values: Sequence[float],
    labels: Sequence[Hashable],
    bin_edges: Sequence[float],
    universe: Iterable[Hashable] | None = None,
) -> dict[Hashable, list[float]]:
    """Per-label bar heights of values over bins, normalized within each label.

    Bin i spans [bin_edges[i], bin_edges[i+1]); the final bin includes its
    right edge. Heights for each label sum to 1, making groups of different
    sizes comparable. A label in the universe with no values gets all-zero
    heights and a warning.
    """
    _check_paired(values, labels)
    if len(bin_edges) < 2 or any(
        lo >= hi for lo, hi in zip(bin_edges, bin_edges[1:])
    ):
        raise ValueError("bin edges must be strictly increasing with >= 2 entries")
    n_bins = len(bin_edges) - 1
    groups = list(universe) if universe is not None else []
    for label in labels:
        if label not in groups:
            groups.append(label)
    counts: dict[Hashable, list[int]] = {g: [0] * n_bins for g in groups}
    for value, label in zip(values, labels):
        if value < bin_edges[0] or value > bin_edges[-1]:
            raise ValueError(f"value {value} outside bin range")
        idx = n_bins - 1
        for i in range(n_bins):
            if value < bin_edges[i + 1]:
                idx = i
                break
        counts[label][idx] += 1
    heights: dict[Hashable, list[float]] = {}
    for group in groups:
        total = sum(counts[group])
        if total == 0:
            warnings.warn(f"label {group!r} has no values; heights are all zero")
            heights[group] = [0.0] * n_bins
        else:
            heights[group] = [c / total for c in counts[group]]
    return heights


def gold_in_ambig_rate(
    ambig_sets: Sequence[Collection[str]], golds: Sequence[str]
) -> float:
    """Percentage of instances whose gold label lies in their ambiguous set."""
    _check_paired(ambig_sets, golds)
    return 100.0 * sum(g in s for g, s in zip(golds, ambig_sets)) / len(golds)


def demo_gold_match_rate(
    selected_demo_sets: Sequence[Sequence[str]], golds: Sequence[str]
) -> float:
    """Percentage of selected demonstrations sharing the test gold label.

    Each test example contributes its own matching fraction and the
    fractions are averaged, so examples with more demonstrations do not
    dominate. Empty demonstration sets are skipped with a warning.
    """
    _check_paired(selected_demo_sets, golds)
    fractions = []
    for demos, gold in zip(selected_demo_sets, golds):
        if not demos:
            warnings.warn(f"empty demonstration set for gold {gold!r}; skipped")
            continue
        fractions.append(sum(d == gold for d in demos) / len(demos))
    if not fractions:
        raise ValueError("every demonstration set is empty")
    return 100.0 * sum(fractions) / len(fractions)


@dataclass(frozen=True)
class BootstrapResult:
    p_value: float
    wins_a: int
    wins_b: int
    ties: int
    resamples: int


def paired_bootstrap(
    golds: Sequence[str],
    preds_a: Sequence[str],
    preds_b: Sequence[str],
    metric: Callable[[Sequence[str], Sequence[str]], float],
    seed: int,
    resamples: int = 1000,
) -> BootstrapResult:
    """Paired bootstrap significance test between two systems' predictions.

    Each resample draws n indices with replacement from its own derived
    stream and compares metric(golds*, preds_a*) against
    metric(golds*, preds_b*) on the resampled sequences. The reported
    p-value is 1 - (wins_a + 0.5 * ties) / resamples, so comparing a
    system with itself yields exactly 0.5 and strict dominance of A
    yields 0.0.
    """
    _check_paired(golds, preds_a)
    _check_paired(golds, preds_b)
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    n = len(golds)
    wins_a = wins_b = ties = 0
    for stream_seed in derive_streams(seed, resamples):
        rng = SplitMix64(stream_seed)
        idx = [rng.next_below(n) for _ in range(n)]
        g = [golds[i] for i in idx]
        value_a = metric(g, [preds_a[i] for i in idx])
        value_b = metric(g, [preds_b[i] for i in idx])
        if value_a > value_b:
            wins_a += 1
        elif value_b > value_a:
            wins_b += 1
        else:
            ties += 1
    p_value = 1.0 - (wins_a + 0.5 * ties) / resamples
    return BootstrapResult(
        p_value=p_value, wins_a=wins_a, wins_b=wins_b, ties=ties, resamples=resamples
    )
