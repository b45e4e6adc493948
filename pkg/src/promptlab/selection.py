"""Demonstration selection for in-context classification.

Covers retrieval ranking by embedding inner product, the ambiguous-label
machinery (top-2 label sets, constraint cascades over gold labels and
model misclassifications), the static and frequency baselines, and the
two presentation orderings. Selection itself is pure; only pool
annotation talks to the model gateway.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

from .core import Demonstration, LabelSpace, ScoreVector, SplitMix64, seeded_shuffle
from .metrics import entropy_base2, softmax
from .prompting import (
    Pattern,
    PromptBundle,
    Verbalizer,
    classify_with_prompt,
    zero_shot_classify,
)

logger = logging.getLogger(__name__)

STRATEGIES = ("retr", "gold", "gold_mis", "gold_mis_pred", "static_n", "freq")
ORDERINGS = ("seeded_shuffle", "entropy_ascending")

# fallback chain, strictest constraint first; scanning starts at the
# requested strategy and relaxes rightward
SCAN_CHAIN = ("gold_mis_pred", "gold_mis", "gold", "retr")


class SelectionError(ValueError):
    """The demonstration pool cannot satisfy the request."""


@dataclass(frozen=True)
class RetrievedList:
    """Pool examples ranked for one test example, most similar first."""

    test_id: str
    entries: tuple[tuple[Demonstration, float], ...]


@dataclass(frozen=True)
class AmbigSet:
    """The two labels the zero-shot model scored highest, best first."""

    first: str
    second: str

    def __post_init__(self):
        if self.first == self.second:
            raise ValueError(f"ambiguous set needs two distinct labels, got {self.first!r} twice")

    def __contains__(self, label: str) -> bool:
        return label == self.first or label == self.second


@dataclass(frozen=True)
class SelectionConfig:
    n: int
    strategy: str
    search_cap: int = 250
    ordering: str = "seeded_shuffle"
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"unknown ordering {self.ordering!r}")
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if self.search_cap < self.n:
            raise ValueError(f"search_cap {self.search_cap} < n {self.n}")


@dataclass(frozen=True)
class FallbackReport:
    """How the constraint cascade filled the demonstration slots."""

    test_id: str
    strategy_requested: str
    stage_filled: tuple[tuple[str, int], ...]
    scanned: int

    def as_dict(self) -> dict:
        return {
            "test_id": self.test_id,
            "strategy_requested": self.strategy_requested,
            "stage_filled": [
                {"stage": stage, "count": count} for stage, count in self.stage_filled
            ],
            "scanned": self.scanned,
        }


def rank_by_inner_product(
    test_id: str,
    test_vec: Sequence[float],
    pool: Sequence[tuple[Demonstration, Sequence[float]]],
) -> RetrievedList:
    """Rank pool entries by inner product with the test vector.

    Ties break toward the lexicographically smaller pool example id, so
    the ranking is a deterministic function of its inputs. Each returned
    demonstration carries its 1-based retrieval rank.
    """
    sims = []
    for demo, vec in pool:
        if len(vec) != len(test_vec):
            raise ValueError(
                f"dimension mismatch: pool vector of {len(vec)} vs test vector of {len(test_vec)}"
            )
        sims.append((demo, sum(a * b for a, b in zip(test_vec, vec))))
    sims.sort(key=lambda pair: (-pair[1], pair[0].example.id))
    entries = tuple(
        (dataclasses.replace(demo, retrieval_rank=rank), sim)
        for rank, (demo, sim) in enumerate(sims, start=1)
    )
    return RetrievedList(test_id=test_id, entries=entries)


def exclude_exact_matches(retrieved: RetrievedList, test_text: str) -> RetrievedList:
    """Drop pool entries whose text equals the test input, logging each."""
    kept = []
    for demo, sim in retrieved.entries:
        if demo.example.text == test_text:
            logger.info(
                "excluding pool example %s: text identical to test %s",
                demo.example.id,
                retrieved.test_id,
            )
        else:
            kept.append((demo, sim))
    return RetrievedList(test_id=retrieved.test_id, entries=tuple(kept))


def compute_ambig_set(sv: ScoreVector, space: LabelSpace) -> AmbigSet:
    """The two highest-scoring labels; ties resolve to the lower index."""
    if len(space) < 2:
        raise ValueError("ambiguous set needs a label space of >= 2 labels")
    if len(sv.scores) != len(space):
        raise ValueError(
            f"score vector of {len(sv.scores)} does not match {len(space)} labels"
        )
    first = sv.argmax()
    second = None
    for i, score in enumerate(sv.scores):
        if i == first:
            continue
        if second is None or score > sv.scores[second]:
            second = i
    return AmbigSet(first=space.ids[first], second=space.ids[second])


def annotate_pool(
    pool: Sequence[Demonstration],
    prompt_source: str | tuple[Pattern, Verbalizer],
    space: LabelSpace,
    gateway,
) -> tuple[Demonstration, ...]:
    """Attach a zero-shot prediction and score vector to every pool example.

    prompt_source is either a task-definition string (scored as a
    zero-demonstration prompt) or a (pattern, verbalizer) pair (scored by
    mask-filling). Scoring goes through the gateway, whose cache keys on
    the full request, so an interrupted run resumes without recomputing
    finished examples.
    """
    annotated = []
    for demo in pool:
        if isinstance(prompt_source, str):
            bundle = PromptBundle(
                task_definition=prompt_source,
                demonstrations=(),
                test_text=demo.example.text,
            )
            pred, vec = classify_with_prompt(bundle, space, gateway)
        else:
            pattern, verbalizer = prompt_source
            pred, vec = zero_shot_classify(demo.example, pattern, verbalizer, gateway)
        annotated.append(
            dataclasses.replace(demo, zero_shot_prediction=pred, zero_shot_scores=vec)
        )
    return tuple(annotated)


def _satisfies(stage: str, demo: Demonstration, ambig: AmbigSet) -> bool:
    if stage == "retr":
        return True
    if stage == "gold":
        return demo.gold_label in ambig
    mis = demo.gold_label in ambig and demo.zero_shot_prediction != demo.gold_label
    if stage == "gold_mis":
        return mis
    return mis and demo.zero_shot_prediction in ambig


def scan_demos(
    cfg: SelectionConfig, retrieved: RetrievedList, ambig: AmbigSet
) -> tuple[list[Demonstration], FallbackReport]:
    """Fill cfg.n slots by scanning ranked entries through the constraint cascade.

    Returns demonstrations in (stage, retrieval rank) order, before any
    presentation ordering. Each stage scans from the top of the ranking,
    skips entries already selected, and keeps those satisfying its
    predicate until the remaining slots are filled. The gold stage
    examines at most search_cap entries; the misclassification stages
    consider only the first search_cap misclassified entries (correct
    ones pass through without consuming the cap). A stage that cannot
    fill every slot falls back to the next weaker one; if even the
    unconstrained stage runs out, a shortfall error reports how many
    demonstrations were found.
    """
    if cfg.strategy not in SCAN_CHAIN:
        raise ValueError(f"strategy {cfg.strategy!r} is not a scan strategy")
    if cfg.strategy in ("gold_mis", "gold_mis_pred"):
        for demo, _ in retrieved.entries:
            if demo.zero_shot_prediction is None:
                raise ValueError(
                    f"strategy {cfg.strategy!r} needs an annotated pool; "
                    f"example {demo.example.id} has no zero-shot prediction"
                )
    selected: list[Demonstration] = []
    stage_filled: list[tuple[str, int]] = []
    scanned = 0
    for stage in SCAN_CHAIN[SCAN_CHAIN.index(cfg.strategy):]:
        if len(selected) == cfg.n:
            break
        filled_here = 0
        examined = 0
        mis_seen = 0
        for demo, _ in retrieved.entries:
            if len(selected) == cfg.n:
                break
            if stage == "gold" and examined >= cfg.search_cap:
                break
            examined += 1
            if stage in ("gold_mis", "gold_mis_pred"):
                if demo.zero_shot_prediction != demo.gold_label:
                    mis_seen += 1
                    if mis_seen > cfg.search_cap:
                        break
            if demo in selected:
                continue
            if _satisfies(stage, demo, ambig):
                selected.append(demo)
                filled_here += 1
        stage_filled.append((stage, filled_here))
        scanned = max(scanned, examined)
    if len(selected) < cfg.n:
        raise SelectionError(
            f"requested {cfg.n} demonstrations but only found {len(selected)} "
            f"after every fallback stage"
        )
    report = FallbackReport(
        test_id=retrieved.test_id,
        strategy_requested=cfg.strategy,
        stage_filled=tuple(stage_filled),
        scanned=scanned,
    )
    return selected, report


def select_demos(
    cfg: SelectionConfig, retrieved: RetrievedList, ambig: AmbigSet
) -> tuple[list[Demonstration], FallbackReport]:
    """scan_demos plus the configured presentation ordering."""
    demos, report = scan_demos(cfg, retrieved, ambig)
    return order_demos(demos, cfg.ordering, cfg.seed), report


def select_static_n(
    pool: Sequence[Demonstration], space: LabelSpace, seed: int
) -> tuple[Demonstration, ...]:
    """One seeded-uniform pick per label, returned in label-space order."""
    rng = SplitMix64(seed)
    picks = []
    for label in space.ids:
        candidates = [d for d in pool if d.gold_label == label]
        if not candidates:
            raise ValueError(f"pool has no example with label {label!r}")
        picks.append(candidates[rng.next_below(len(candidates))])
    return tuple(picks)


def freq_baseline(train_label_counts: Mapping[str, int]) -> str:
    """Most frequent training label; ties keep the earlier label."""
    if not train_label_counts:
        raise ValueError("empty label counts")
    best = None
    best_count = None
    for label, count in train_label_counts.items():
        if best_count is None or count > best_count:
            best, best_count = label, count
    return best


def order_demos(
    demos: Sequence[Demonstration], ordering: str, seed: int
) -> list[Demonstration]:
    """Apply a presentation ordering to selected demonstrations.

    seeded_shuffle permutes reproducibly from the seed. entropy_ascending
    sorts by the entropy of each demonstration's softmaxed zero-shot
    scores, stably, so equal entropies keep their input order.
    """
    if ordering == "seeded_shuffle":
        return seeded_shuffle(demos, seed)
    if ordering == "entropy_ascending":
        for demo in demos:
            if demo.zero_shot_scores is None:
                raise ValueError(
                    f"entropy ordering needs zero-shot scores; "
                    f"example {demo.example.id} has none"
                )
        return sorted(
            demos, key=lambda d: entropy_base2(softmax(d.zero_shot_scores))
        )
    raise ValueError(f"unknown ordering {ordering!r}")
