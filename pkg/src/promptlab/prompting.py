"""Pattern rendering, verbalizer mapping, and prompt-based classification.

Two classification setups share this module: mask-fill scoring of
verbalizer tokens inside a pattern (``zero_shot_classify``), and
log-likelihood scoring of label names appended to an assembled
instruction prompt (``classify_with_prompt``). All template text is
byte-exact; nothing is trimmed or rewritten during rendering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from .core import FormatError, LabelSpace, ScoreVector, TextExample
from .gateway import MASK_TOKEN, MaskFillRequest, ScoreRequest

X_SLOT = "{x}"
PATTERN_KINDS = ("qa", "prompt")


def _fixture_path(*parts: str) -> Path:
    return Path(resources.files("promptlab").joinpath("fixtures", *parts))


@dataclass(frozen=True)
class Pattern:
    """A cloze template with one text slot and one mask site."""

    id: str
    kind: str
    template: str

    def __post_init__(self) -> None:
        if self.kind not in PATTERN_KINDS:
            raise ValueError(f"kind must be one of {PATTERN_KINDS}, got {self.kind!r}")
        if self.template.count(X_SLOT) != 1:
            raise ValueError(f"template must contain {X_SLOT} exactly once")
        if self.template.count(MASK_TOKEN) != 1:
            raise ValueError(f"template must contain {MASK_TOKEN} exactly once")


@dataclass(frozen=True)
class Verbalizer:
    """Total mapping from label ids to unique single verbalizer tokens."""

    space: LabelSpace
    mapping: Mapping[str, str]

    def __post_init__(self) -> None:
        missing = [label for label in self.space.ids if label not in self.mapping]
        if missing:
            raise ValueError(f"verbalizer is missing labels: {missing}")
        extra = [label for label in self.mapping if label not in self.space]
        if extra:
            raise ValueError(f"verbalizer has labels outside the space: {extra}")
        tokens = list(self.mapping.values())
        if len(set(tokens)) != len(tokens):
            raise ValueError("verbalizer tokens must be unique")
        object.__setattr__(self, "mapping", dict(self.mapping))

    def token_for(self, label_id: str) -> str:
        return self.mapping[label_id]

    def tokens_in_order(self) -> tuple[str, ...]:
        return tuple(self.mapping[label] for label in self.space.ids)


@dataclass(frozen=True)
class PromptBundle:
    """Task definition, ordered demonstrations, and the test input."""

    task_definition: str
    demonstrations: tuple
    test_text: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "demonstrations", tuple(self.demonstrations))


def render_pattern(pattern: Pattern, x: str) -> str:
    """Substitute the input into the template byte-exactly."""
    return pattern.template.replace(X_SLOT, x, 1)


def zero_shot_classify(
    x: TextExample, pattern: Pattern, verbalizer: Verbalizer, gateway
) -> tuple[str, ScoreVector]:
    """Predict by mask-filling verbalizer tokens; scores follow label order.

    The prediction considers only the verbalizer tokens, never the full
    vocabulary; ties break toward the smaller label index.
    """
    text = render_pattern(pattern, x.text)
    request = MaskFillRequest(text_with_mask=text, candidates=verbalizer.tokens_in_order())
    scores = gateway.mask_fill_scores(request)
    vector = ScoreVector(scores=tuple(scores))
    return verbalizer.space.ids[vector.argmax()], vector


_TRAILER = "Thus given the following input:\ninput: {x}\nanswer:"


def assemble_icl_prompt(bundle: PromptBundle, space: LabelSpace | None = None) -> str:
    """Render the instruction prompt byte-exactly.

    Zero demonstrations:
        {task_definition}\\n\\nThus given the following input:\\ninput:
        {test_text}\\nanswer:
    With demonstrations, "Some examples are:" introduces one
    "input/answer" block per demonstration (order significant) before the
    same trailer. Answers use the demonstration's gold label id, mapped to
    its display name when a label space is supplied.
    """
    trailer = _TRAILER.replace("{x}", bundle.test_text, 1)
    if not bundle.demonstrations:
        return f"{bundle.task_definition}\n\n{trailer}"
    blocks = []
    for demo in bundle.demonstrations:
        answer = demo.gold_label
        if space is not None:
            answer = space.display_name(answer)
        blocks.append(f"input: {demo.example.text}\nanswer: {answer}\n\n")
    return f"{bundle.task_definition}\n\nSome examples are:\n" + "".join(blocks) + trailer


def classify_with_prompt(
    bundle: PromptBundle, space: LabelSpace, gateway
) -> tuple[str, ScoreVector]:
    """Predict by scoring each label's display name as the continuation."""
    prompt = assemble_icl_prompt(bundle, space=space)
    request = ScoreRequest(prompt=prompt, candidates=tuple(space.display_names))
    scores = gateway.score_completions(request)
    vector = ScoreVector(scores=tuple(scores))
    return space.ids[vector.argmax()], vector


def _read_tsv(path: Path, columns: int) -> list[tuple[str, ...]]:
    rows = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != columns:
                raise FormatError(f"line {line_no}: expected {columns} fields, found {len(parts)}")
            rows.append(tuple(parts))
    if not rows:
        raise FormatError("empty table")
    return rows


def load_patterns(path: str | Path | None = None) -> tuple[Pattern, ...]:
    """Load the pattern table (id, kind, template); header row optional."""
    rows = _read_tsv(Path(path) if path else _fixture_path("patterns.tsv"), 3)
    if rows and rows[0] == ("id", "kind", "template"):
        rows = rows[1:]
    patterns = tuple(Pattern(id=i, kind=k, template=t) for i, k, t in rows)
    ids = [p.id for p in patterns]
    if len(set(ids)) != len(ids):
        raise FormatError("duplicate pattern id")
    return patterns


def load_verbalizers(path: str | Path | None = None) -> dict[str, dict[str, str]]:
    """Load the verbalizer table as dataset -> {label -> token}, file-ordered."""
    rows = _read_tsv(Path(path) if path else _fixture_path("verbalizers.tsv"), 3)
    if rows and rows[0] == ("dataset", "label", "token"):
        rows = rows[1:]
    table: dict[str, dict[str, str]] = {}
    for dataset, label, token in rows:
        per = table.setdefault(dataset, {})
        if label in per:
            raise FormatError(f"duplicate label {label!r} for dataset {dataset!r}")
        per[label] = token
    return table


def verbalizer_for(dataset: str, path: str | Path | None = None) -> Verbalizer:
    """Build a Verbalizer whose label space follows the table's row order."""
    table = load_verbalizers(path)
    if dataset not in table:
        raise KeyError(dataset)
    mapping = table[dataset]
    return Verbalizer(space=LabelSpace.from_ids(mapping.keys()), mapping=mapping)


def load_task_definition(task: str, directory: str | Path | None = None) -> str:
    """Load a task definition; single-space normalized, no trailing newline."""
    base = Path(directory) if directory else _fixture_path("task_defs")
    path = base / f"{task}.txt"
    if not path.exists():
        raise KeyError(task)
    return path.read_text(encoding="utf-8").strip()


def load_icl_label_space(task: str, path: str | Path | None = None) -> LabelSpace:
    """Label space for an instruction-classification task, fixture-ordered."""
    source = Path(path) if path else _fixture_path("label_spaces.json")
    table = json.loads(source.read_text(encoding="utf-8"))
    if task not in table:
        raise KeyError(task)
    return LabelSpace.from_ids(table[task])
