"""Shared domain types, dataset I/O, and seeded deterministic utilities."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

MASK64 = 0xFFFFFFFFFFFFFFFF

#: the 4-character blank marker used in cloze contexts
BLANK_MARKER = "____"


class DatasetError(ValueError):
    """A dataset file or record violates the expected layout."""


class FormatError(ValueError):
    """A resource file is malformed; the message names the offending line."""


class SplitMix64:
    """Deterministic 64-bit generator (splitmix64).

    Update: state += 0x9E3779B97F4A7C15 (mod 2^64); output = mix(state) with
    mix(z) = h(h(z, 30, 0xBF58476D1CE4E5B9), 27, 0x94D049BB133111EB) ^ >>31
    where h(z, s, m) = ((z ^ (z >> s)) * m) mod 2^64.  The same sequence is
    reproducible in any language, which is what seeded runs rely on.
    """

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return (z ^ (z >> 31)) & MASK64

    def next_below(self, bound: int) -> int:
        """Uniform-enough draw in [0, bound); bound must be positive."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound

    def next_float(self) -> float:
        """Draw in [0, 1) with 53 significant bits."""
        return (self.next_u64() >> 11) / float(1 << 53)


def derive_streams(seed: int, count: int) -> list[int]:
    """Derive `count` independent child seeds from one root seed.

    Child i is the i-th output of SplitMix64(seed), so parallel consumers of
    the children produce results independent of scheduling.
    """
    g = SplitMix64(seed)
    return [g.next_u64() for _ in range(count)]


def seeded_shuffle(items: Sequence, seed: int) -> list:
    """Fisher-Yates permutation driven by SplitMix64(seed).

    Walks i from n-1 down to 1 and swaps with j = next_u64() % (i + 1).
    """
    out = list(items)
    g = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = g.next_below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def normalize_surface(raw: str) -> str:
    """Replace non-breaking spaces with ordinary spaces, then strip the ends."""
    return raw.replace(" ", " ").strip()


@dataclass(frozen=True)
class LabelSpace:
    """Ordered label set; the order is canonical for score alignment."""

    labels: tuple[tuple[str, str], ...]  # (label_id, display_name)

    def __post_init__(self):
        if not self.labels:
            raise ValueError("label space must be non-empty")
        ids = [label_id for label_id, _ in self.labels]
        if len(set(ids)) != len(ids):
            raise ValueError("label ids must be unique")

    @classmethod
    def from_ids(cls, ids: Iterable[str]) -> "LabelSpace":
        return cls(tuple((i, i) for i in ids))

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(label_id for label_id, _ in self.labels)

    @property
    def display_names(self) -> tuple[str, ...]:
        return tuple(name for _, name in self.labels)

    def index_of(self, label_id: str) -> int:
        for i, (candidate, _) in enumerate(self.labels):
            if candidate == label_id:
                return i
        raise KeyError(label_id)

    def display_name(self, label_id: str) -> str:
        return self.labels[self.index_of(label_id)][1]

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label_id: object) -> bool:
        return any(candidate == label_id for candidate, _ in self.labels)


@dataclass(frozen=True)
class TextExample:
    id: str
    text: str
    gold_label: str | None = None


@dataclass(frozen=True)
class ScoreVector:
    """Per-label log-scores aligned to a LabelSpace order."""

    scores: tuple[float, ...]

    def __post_init__(self):
        if not all(math.isfinite(s) for s in self.scores):
            raise ValueError("scores must be finite")

    def argmax(self) -> int:
        """Index of the maximum score; ties break toward the lower index."""
        best = 0
        for i, s in enumerate(self.scores):
            if s > self.scores[best]:
                best = i
        return best

    def __len__(self) -> int:
        return len(self.scores)


@dataclass(frozen=True)
class Demonstration:
    """A retrieved pool example attached to one test example."""

    example: TextExample
    gold_label: str
    retrieval_rank: int
    zero_shot_prediction: str | None = None
    zero_shot_scores: ScoreVector | None = None


@dataclass(frozen=True)
class WordForm:
    headword: str
    inflected: str

    def __post_init__(self):
        if not self.headword or not self.inflected:
            raise ValueError("word forms must be non-empty")


@dataclass(frozen=True)
class ClozeInstance:
    id: str
    context: str
    long_context: str | None
    correct: WordForm
    distractor: WordForm
    label: bool


def _require(record: dict, key: str, line_no: int):
    if key not in record:
        raise DatasetError(f"line {line_no}: missing field {key!r}")
    return record[key]


def _parse_word_form(value, line_no: int) -> WordForm:
    if not isinstance(value, dict):
        raise DatasetError(f"line {line_no}: word form must be an object")
    try:
        return WordForm(
            headword=normalize_surface(str(_require(value, "headword", line_no))),
            inflected=normalize_surface(str(_require(value, "inflected", line_no))),
        )
    except ValueError as exc:
        raise DatasetError(f"line {line_no}: {exc}") from exc


def parse_dataset(
    path: str | Path,
    schema: str,
    space: LabelSpace | None = None,
) -> list[TextExample] | list[ClozeInstance]:
    """Parse a JSONL dataset of the given schema ("classification" or "cloze")."""
    if schema not in ("classification", "cloze"):
        raise ValueError(f"unknown schema {schema!r}")
    out: list = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise DatasetError(f"line {line_no}: record must be an object")
            record_id = str(_require(record, "id", line_no))
            if record_id in seen_ids:
                raise DatasetError(f"line {line_no}: duplicate id {record_id!r}")
            seen_ids.add(record_id)
            if schema == "classification":
                text = _require(record, "text", line_no)
                label = record.get("label")
                if label is not None:
                    label = str(label)
                    if space is not None and label not in space:
                        raise DatasetError(f"line {line_no}: unknown label {label!r}")
                out.append(TextExample(id=record_id, text=str(text), gold_label=label))
            else:
                context = str(_require(record, "context", line_no))
                if context.count(BLANK_MARKER) != 1:
                    raise DatasetError(
                        f"line {line_no}: context must contain exactly one blank marker {BLANK_MARKER!r}"
                    )
                label = _require(record, "label", line_no)
                if not isinstance(label, bool):
                    raise DatasetError(f"line {line_no}: label must be true or false")
                long_context = record.get("long_context")
                out.append(
                    ClozeInstance(
                        id=record_id,
                        context=context,
                        long_context=None if long_context is None else str(long_context),
                        correct=_parse_word_form(_require(record, "correct", line_no), line_no),
                        distractor=_parse_word_form(_require(record, "distractor", line_no), line_no),
                        label=label,
                    )
                )
    return out


def serialize_dataset(items: Sequence[TextExample] | Sequence[ClozeInstance]) -> str:
    """Serialize examples back to the JSONL layout accepted by parse_dataset."""
    lines = []
    for item in items:
        if isinstance(item, TextExample):
            record = {"id": item.id, "text": item.text, "label": item.gold_label}
        else:
            record = {
                "id": item.id,
                "context": item.context,
                "long_context": item.long_context,
                "correct": {"headword": item.correct.headword, "inflected": item.correct.inflected},
                "distractor": {
                    "headword": item.distractor.headword,
                    "inflected": item.distractor.inflected,
                },
                "label": item.label,
            }
        lines.append(json.dumps(record, ensure_ascii=False))
    return "\n".join(lines) + ("\n" if lines else "")


def write_dataset(items: Sequence, path: str | Path) -> None:
    Path(path).write_text(serialize_dataset(items), encoding="utf-8")
