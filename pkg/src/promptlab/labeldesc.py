"""Construction of small label-description training sets.

Topic labels get six examples each (label terms, dictionary definition,
encyclopedia lead sentence); sentiment labels get 25 (five terms, each
alone and in four fixed sentence templates). The balanced sets train or
demonstrate classifiers without any task data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .core import TextExample

#: sentence templates instantiated per sentiment term; A(n) resolves by article rule
SENTIMENT_TEMPLATES = (
    "It was {t}.",
    "A(n) {t} experience.",
    "Just {t}.",
    "Overall, it was {t}.",
)

TOPIC_DATASETS = ("agnews", "20ng", "yahoo", "dbpedia")

#: five-way sentiment labels collapse pairwise onto the binary space
BINARY_COLLAPSE = {
    "Very Negative": "Negative",
    "Negative": "Negative",
    "Neutral": None,
    "Positive": "Positive",
    "Very Positive": "Positive",
}

#: domain transfer: question-forum topics onto the news topic space
_DOMAIN_TRANSFER = {
    "Society & Culture": "World",
    "Science & Mathematics": "Sci/Tech",
    "Health": None,
    "Education & Reference": None,
    "Computers & Internet": "Sci/Tech",
    "Sports": "Sports",
    "Business & Finance": "Business",
    "Entertainment & Music": None,
    "Family & Relationships": None,
    "Politics & Government": "World",
}


class RecipeError(ValueError):
    """A label recipe is missing or malformed."""


@dataclass(frozen=True)
class LabelDescRecipe:
    """Raw material for one label's description examples."""

    label_id: str
    terms: tuple[str, ...]
    wiki: tuple[str, ...] = ()
    dict_defs: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for name in ("terms", "wiki", "dict_defs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))


@dataclass(frozen=True)
class LabelDescSet:
    """Balanced labeled examples with a provenance tag per example."""

    examples: tuple[TextExample, ...]
    provenance: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "examples", tuple(self.examples))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if len(self.examples) != len(self.provenance):
            raise ValueError("examples and provenance must align")
        counts: dict[str, int] = {}
        for example in self.examples:
            if example.gold_label is None:
                raise ValueError("every example needs a gold label")
            counts[example.gold_label] = counts.get(example.gold_label, 0) + 1
        if len(set(counts.values())) > 1:
            raise ValueError(f"unbalanced label counts: {counts}")

    def __add__(self, other: "LabelDescSet") -> "LabelDescSet":
        return LabelDescSet(
            examples=self.examples + other.examples,
            provenance=self.provenance + other.provenance,
        )


def _assemble(label_id: str, rows: list[tuple[str, str]]) -> LabelDescSet:
    examples = tuple(
        TextExample(id=f"{label_id}::{i}", text=text, gold_label=label_id)
        for i, (text, _) in enumerate(rows)
    )
    return LabelDescSet(examples=examples, provenance=tuple(tag for _, tag in rows))


def build_topic_labeldesc(recipe: LabelDescRecipe) -> LabelDescSet:
    """Six examples for one topic label: terms, then definitions.

    Single-keyword labels use four terms + one dictionary definition + one
    encyclopedia lead; two-keyword labels use two terms + two of each
    definition. Either way the label contributes exactly six examples.
    """
    if not (recipe.terms and recipe.wiki and recipe.dict_defs):
        raise RecipeError(f"{recipe.label_id}: topic recipe needs terms, wiki, and dict entries")
    total = len(recipe.terms) + len(recipe.wiki) + len(recipe.dict_defs)
    if total != 6:
        raise RecipeError(f"{recipe.label_id}: topic recipe has {total} entries, expected 6")
    rows = (
        [(t, "term") for t in recipe.terms]
        + [(d, "dict") for d in recipe.dict_defs]
        + [(w, "wiki") for w in recipe.wiki]
    )
    return _assemble(recipe.label_id, rows)


def _article_for(term: str) -> str:
    return "An" if term[:1].lower() in "aeiou" else "A"


def instantiate_template(template: str, term: str) -> str:
    """Fill one sentence template, resolving A(n) by the vowel-initial rule."""
    text = template.replace("A(n)", _article_for(term))
    return text.replace("{t}", term, 1)


def build_sentiment_labeldesc(recipe: LabelDescRecipe) -> LabelDescSet:
    """25 examples for one sentiment label: 5 terms + 5 terms x 4 templates."""
    if len(recipe.terms) != 5:
        raise RecipeError(
            f"{recipe.label_id}: sentiment recipe has {len(recipe.terms)} terms, expected 5"
        )
    rows = [(t, "term") for t in recipe.terms]
    for term in recipe.terms:
        for template in SENTIMENT_TEMPLATES:
            rows.append((instantiate_template(template, term), "template"))
    return _assemble(recipe.label_id, rows)


def collapse_to_binary(five_way: LabelDescSet) -> LabelDescSet:
    """Merge the five-way sentiment set onto {Negative, Positive}.

    Neutral examples are dropped; the two negative labels merge, as do the
    two positive ones, preserving input order (so each merged label lists
    one source label's examples before the other's).
    """
    rows = []
    for example, tag in zip(five_way.examples, five_way.provenance):
        if example.gold_label not in BINARY_COLLAPSE:
            raise ValueError(f"unexpected five-way label {example.gold_label!r}")
        target = BINARY_COLLAPSE[example.gold_label]
        if target is None:
            continue
        rows.append(
            (
                TextExample(id=f"{target}::{len(rows)}", text=example.text, gold_label=target),
                tag,
            )
        )
    return LabelDescSet(
        examples=tuple(e for e, _ in rows), provenance=tuple(t for _, t in rows)
    )


def map_domain_labels(src_label: str) -> str | None:
    """Map a question-forum topic label onto the news label space.

    Returns None for source labels that are removed rather than mapped;
    unknown labels raise KeyError.
    """
    return _DOMAIN_TRANSFER[src_label]


def _fixture_path(name: str) -> Path:
    return Path(resources.files("promptlab").joinpath("fixtures", "labeldesc", name))


def load_labeldesc_recipes(
    dataset: str, path: str | Path | None = None
) -> dict[str, LabelDescRecipe]:
    """Load the recipe table for a dataset id, keyed by label."""
    if path is None:
        if dataset not in TOPIC_DATASETS + ("sentiment-5",):
            raise KeyError(dataset)
        path = _fixture_path(f"{dataset}.json")
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {
        label: LabelDescRecipe(
            label_id=label,
            terms=tuple(entry.get("terms", ())),
            wiki=tuple(entry.get("wiki", ())),
            dict_defs=tuple(entry.get("dict", ())),
        )
        for label, entry in raw.items()
    }


def build_labeldesc_dataset(dataset: str) -> LabelDescSet:
    """Build the complete balanced set for a dataset id.

    Topic datasets yield 6 examples per label; "sentiment-5" yields 125
    examples; "sentiment-2" is the binary collapse of the five-way build.
    """
    if dataset == "sentiment-2":
        return collapse_to_binary(build_labeldesc_dataset("sentiment-5"))
    recipes = load_labeldesc_recipes(dataset)
    build = build_sentiment_labeldesc if dataset == "sentiment-5" else build_topic_labeldesc
    combined: LabelDescSet | None = None
    for label in recipes:
        part = build(recipes[label])
        combined = part if combined is None else combined + part
    assert combined is not None
    return combined
