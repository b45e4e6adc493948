"""Corpus-derived statistical models served over the wire.

Two models are built at startup from the embedded corpus:

* ``ClozeModel``: a smoothed count model for mask filling and completion
  scoring. The probability of a word at a masked position is a smoothed
  unigram prior multiplied by smoothed sentence co-occurrence likelihoods
  of the surrounding context words, renormalized over the vocabulary plus
  a single unknown-word entry, so every returned log-probability comes
  from a genuine distribution that sums to one.
* ``PpmiEmbedder``: word vectors from a truncated SVD of the positive
  PMI co-occurrence matrix; a text embeds as the normalized mean of its
  word vectors.

Both are pure functions of the corpus: no sampling, no hidden state, so
identical requests always return identical floats.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from functools import lru_cache
from typing import Callable, Dict, Sequence

import numpy as np

from . import corpus

TOKEN_RE = re.compile(r"[a-z0-9']+")
UNK = "<unk>"
MASK_TOKEN = "[MASK]"


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens, apostrophes kept inside words."""
    return TOKEN_RE.findall(text.lower())


def _sentence_stats(
    sentences: Sequence[str],
) -> tuple[tuple[str, ...], dict[str, int], np.ndarray, np.ndarray]:
    """Vocabulary, index, unigram counts, and sentence-level type co-occurrence."""
    tokenized = [tokenize(s) for s in sentences]
    counts = Counter(t for toks in tokenized for t in toks)
    if not counts:
        raise ValueError("corpus has no tokens")
    vocab = tuple(sorted(counts))
    index = {w: i for i, w in enumerate(vocab)}
    unigrams = np.array([counts[w] for w in vocab], dtype=float)
    cooc = np.zeros((len(vocab), len(vocab)))
    for toks in tokenized:
        types = sorted(set(toks))
        for a_pos, a in enumerate(types):
            ia = index[a]
            for b in types[a_pos + 1 :]:
                ib = index[b]
                cooc[ia, ib] += 1
                cooc[ib, ia] += 1
    return vocab, index, unigrams, cooc


class ClozeModel:
    """Smoothed count model over masked positions.

    score(w | C) = log p(w) + sum over context words c of log p(c | w),
    with p(w) = (n(w) + a) / (N + aE) and p(c | w) = (cooc(w, c) + a) /
    (n(w) + aE), where E counts the vocabulary plus the unknown entry.
    The scores are renormalized into a distribution over all E entries;
    context words outside the vocabulary are dropped. Out-of-vocabulary
    candidates (and multi-token units that do not normalize to a single
    vocabulary word) score as the unknown entry.
    """

    def __init__(self, sentences: Sequence[str], alpha: float = 0.1):
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.alpha = alpha
        self.vocab, self._index, unigrams, cooc = _sentence_stats(sentences)
        self._n_real = len(self.vocab)
        counts = np.append(unigrams, 0.0)
        self._cooc = np.vstack([cooc, np.zeros((1, self._n_real))])
        total = counts.sum()
        entries = self._n_real + 1
        self._log_prior = np.log(counts + alpha) - math.log(total + alpha * entries)
        self._log_denom = np.log(counts + alpha * entries)

    def _entry(self, unit: str) -> int:
        tokens = tokenize(unit)
        if len(tokens) != 1:
            return self._n_real
        return self._index.get(tokens[0], self._n_real)

    def log_dist(self, context: Sequence[str]) -> np.ndarray:
        """Log-probabilities over vocabulary + unknown, given context words."""
        scores = self._log_prior.copy()
        ids = [self._index[c] for c in context if c in self._index]
        if ids:
            scores += np.log(self._cooc[:, ids] + self.alpha).sum(axis=1)
            scores -= len(ids) * self._log_denom
        peak = scores.max()
        return scores - (peak + math.log(np.exp(scores - peak).sum()))

    def _dist(self, context: tuple[str, ...], memo: Dict[tuple, np.ndarray]) -> np.ndarray:
        if context not in memo:
            memo[context] = self.log_dist(context)
        return memo[context]

    def log_prob(self, unit: str, context: Sequence[str]) -> float:
        return float(self.log_dist(context)[self._entry(unit)])

    def rank(self, unit: str, context: Sequence[str]) -> int:
        """1 + number of vocabulary words strictly more probable here."""
        probs = np.exp(self.log_dist(context))
        mine = probs[self._entry(unit)]
        return 1 + int((probs[: self._n_real] > mine).sum())

    def _mean_rule(
        self,
        base_ctx: list[str],
        units: list[str],
        memo: Dict[tuple, np.ndarray],
    ) -> tuple[float, tuple[str, ...]]:
        """Multi-unit candidates: mask each unit in turn with the others
        filled in; report log of the arithmetic mean of the per-position
        probabilities, plus the first unit's context for ranking."""
        if len(units) == 1:
            ctx = tuple(base_ctx)
            return float(self._dist(ctx, memo)[self._entry(units[0])]), ctx
        probs = []
        first_ctx = tuple(base_ctx)
        for i, unit in enumerate(units):
            others = units[:i] + units[i + 1 :]
            ctx = tuple(base_ctx + [t for u in others for t in tokenize(u)])
            if i == 0:
                first_ctx = ctx
            probs.append(math.exp(float(self._dist(ctx, memo)[self._entry(unit)])))
        return math.log(sum(probs) / len(probs)), first_ctx

    @staticmethod
    def _units(candidate: str) -> list[str]:
        units = candidate.split()
        if not units:
            raise ValueError("candidate has no whitespace units")
        return units

    def maskfill(
        self, text: str, candidates: Sequence[str]
    ) -> tuple[list[float], list[int]]:
        if text.count(MASK_TOKEN) != 1:
            raise ValueError(f"text must contain exactly one {MASK_TOKEN}")
        before, _, after = text.partition(MASK_TOKEN)
        base_ctx = tokenize(before) + tokenize(after)
        memo: Dict[tuple, np.ndarray] = {}
        log_probs: list[float] = []
        ranks: list[int] = []
        for candidate in candidates:
            units = self._units(candidate)
            lp, first_ctx = self._mean_rule(base_ctx, units, memo)
            probs = np.exp(self._dist(first_ctx, memo))
            mine = probs[self._entry(units[0])]
            log_probs.append(lp)
            ranks.append(1 + int((probs[: self._n_real] > mine).sum()))
        return log_probs, ranks

    def score(self, prompt: str, candidates: Sequence[str]) -> list[float]:
        """Score candidates as fillers of a virtual slot after the prompt."""
        base_ctx = tokenize(prompt)
        memo: Dict[tuple, np.ndarray] = {}
        return [
            self._mean_rule(base_ctx, self._units(candidate), memo)[0]
            for candidate in candidates
        ]


def ppmi(cooc: np.ndarray) -> np.ndarray:
    """Positive pointwise mutual information; zero cells stay zero."""
    cooc = np.asarray(cooc, dtype=float)
    out = np.zeros_like(cooc)
    total = cooc.sum()
    if total == 0:
        return out
    margins = cooc.sum(axis=1)
    rows, cols = np.nonzero(cooc > 0)
    values = np.log(cooc[rows, cols] * total / (margins[rows] * margins[cols]))
    out[rows, cols] = np.maximum(values, 0.0)
    return out


class PpmiEmbedder:
    """Word vectors from the truncated SVD of the PPMI matrix.

    A text embeds as the mean of its word vectors (bag of words, token
    order ignored), normalized to unit length; texts with no known words
    embed as the zero vector.
    """

    def __init__(self, sentences: Sequence[str], dim: int = 32):
        vocab, index, _, cooc = _sentence_stats(sentences)
        if not 1 <= dim <= len(vocab):
            raise ValueError(f"dim must be in [1, {len(vocab)}], got {dim}")
        self.dim = dim
        self._index = index
        u, s, _ = np.linalg.svd(ppmi(cooc))
        self._vectors = u[:, :dim] * np.sqrt(s[:dim])

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        rows = []
        for text in texts:
            ids = sorted(self._index[t] for t in tokenize(text) if t in self._index)
            if not ids:
                rows.append(np.zeros(self.dim))
                continue
            vector = self._vectors[ids].mean(axis=0)
            norm = float(np.linalg.norm(vector))
            rows.append(vector / norm if norm > 0 else vector)
        return np.stack(rows)


@lru_cache(maxsize=None)
def _default_cloze() -> ClozeModel:
    return ClozeModel(corpus.SENTENCES)


@lru_cache(maxsize=None)
def _default_embedder() -> PpmiEmbedder:
    return PpmiEmbedder(corpus.SENTENCES, dim=32)


MLM_MODELS: dict[str, Callable[[], ClozeModel]] = {"count-cloze-base": _default_cloze}
EMBEDDER_MODELS: dict[str, Callable[[], PpmiEmbedder]] = {
    "ppmi-svd-base": _default_embedder
}


def load_mlm(name: str) -> ClozeModel:
    try:
        builder = MLM_MODELS[name]
    except KeyError:
        raise ValueError(f"unknown mask-fill model {name!r}") from None
    return builder()


def load_embedder(name: str) -> PpmiEmbedder:
    try:
        builder = EMBEDDER_MODELS[name]
    except KeyError:
        raise ValueError(f"unknown embedder model {name!r}") from None
    return builder()
