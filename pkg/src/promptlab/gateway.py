"""Model-scoring boundary: completion scoring, mask filling, embeddings.

All scoring flows through a ``Gateway`` wrapping a pluggable backend. The
in-process ``MockBackend`` is fully deterministic (hash-derived scores), so
every downstream pipeline is reproducible without a model server. The
``HttpBackend`` speaks the same three-operation wire protocol to a real
scoring server.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import urllib.error
import urllib.request
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

from .core import FormatError

MASK_TOKEN = "[MASK]"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


class BackendError(RuntimeError):
    """Transport-level failure talking to a scoring backend (retriable)."""


class ProtocolError(BackendError):
    """The backend answered, but the reply violates the wire contract."""


def fnv1a64(data: bytes | str) -> int:
    """64-bit FNV-1a hash of ``data`` (strings are hashed as UTF-8)."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _U64
    return h


def _check_candidates(candidates: Sequence[str]) -> tuple[str, ...]:
    out = tuple(candidates)
    if not out:
        raise ValueError("candidates must be non-empty")
    for c in out:
        if not isinstance(c, str) or not c:
            raise ValueError(f"candidate must be a non-empty string, got {c!r}")
    if len(set(out)) != len(out):
        raise ValueError("candidates must be unique")
    return out


@dataclass(frozen=True)
class ScoreRequest:
    """Score each candidate continuation against a prompt."""

    prompt: str
    candidates: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", _check_candidates(self.candidates))


@dataclass(frozen=True)
class MaskFillRequest:
    """Score candidates at the mask site of ``text_with_mask``."""

    text_with_mask: str
    candidates: tuple[str, ...]

    def __post_init__(self) -> None:
        if MASK_TOKEN not in self.text_with_mask:
            raise ValueError(f"text must contain {MASK_TOKEN}")
        object.__setattr__(self, "candidates", _check_candidates(self.candidates))


@dataclass(frozen=True)
class EmbedRequest:
    """Embed each text into a fixed-dimension vector."""

    texts: tuple[str, ...]

    def __post_init__(self) -> None:
        out = tuple(self.texts)
        if not out:
            raise ValueError("texts must be non-empty")
        for t in out:
            if not isinstance(t, str):
                raise ValueError(f"text must be a string, got {t!r}")
        object.__setattr__(self, "texts", out)


class Backend(Protocol):
    backend_id: str

    def score_completions(self, prompt: str, candidates: Sequence[str]) -> list[float]: ...

    def maskfill(self, text: str, candidates: Sequence[str]) -> tuple[list[float], list[int]]: ...

    def embed(self, texts: Sequence[str]) -> tuple[list[list[float]], int]: ...


def compose_multi_token(backend, text_with_mask: str, candidate: str) -> float:
    """Log-probability of a multi-unit candidate at a single mask site.

    Each whitespace unit is masked in turn with the other units filled in;
    the result is the log of the arithmetic mean of the per-position
    probabilities. A single-unit candidate degenerates to its own score.
    """
    units = candidate.split()
    if not units:
        raise ValueError("candidate has no whitespace units")
    if len(units) == 1:
        return backend.maskfill(text_with_mask, (units[0],))[0][0]
    probs = []
    for i, unit in enumerate(units):
        filled = list(units)
        filled[i] = MASK_TOKEN
        variant = text_with_mask.replace(MASK_TOKEN, " ".join(filled), 1)
        probs.append(math.exp(backend.maskfill(variant, (unit,))[0][0]))
    return math.log(sum(probs) / len(probs))


# Deterministic default vocabulary for mask-fill ranking under the mock.
DEFAULT_MOCK_VOCAB: tuple[str, ...] = (
    "the", "and", "of", "to", "in", "that", "for", "with", "was", "on",
    "world", "sports", "business", "technology", "science", "politics",
    "religion", "medicine", "automobile", "gun", "society", "health",
    "education", "computer", "entertainment", "relationship", "company",
    "school", "artist", "album", "film", "book", "animal", "plant",
    "village", "building", "transportation", "natural", "great", "good",
    "okay", "bad", "awful", "terrible", "positive", "negative", "news",
    "money",
)


class MockBackend:
    """Hash-derived deterministic backend.

    * ``score_completions``: score = -(fnv1a64(prompt + NUL + candidate)
      mod 10**6) / 10**5, so every score lies in (-10, 0].
    * mask filling: the probability of a token at the mask site is
      exp(score) of that token scored as a completion of the masked text;
      rank counts vocabulary tokens with strictly higher probability.
    * ``embed``: component i of a text's vector is derived from
      fnv1a64(utf8(text) + NUL + ascii(i)), mapped into [-1, 1).
    """

    def __init__(self, vocab: Sequence[str] | None = None, dim: int = 16):
        self.backend_id = "mock"
        self.vocab: tuple[str, ...] = tuple(vocab) if vocab is not None else DEFAULT_MOCK_VOCAB
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim

    def score_completions(self, prompt: str, candidates: Sequence[str]) -> list[float]:
        out = []
        for candidate in candidates:
            h = fnv1a64(prompt.encode("utf-8") + b"\x00" + candidate.encode("utf-8"))
            out.append(-(h % 10**6) / 10**5)
        return out

    def _unit_log_prob(self, text: str, unit: str) -> float:
        return self.score_completions(text, (unit,))[0]

    def _unit_rank(self, text: str, unit: str) -> int:
        p = math.exp(self._unit_log_prob(text, unit))
        higher = 0
        for v in self.vocab:
            if v == unit:
                continue
            if math.exp(self._unit_log_prob(text, v)) > p:
                higher += 1
        return 1 + higher

    def maskfill(self, text: str, candidates: Sequence[str]) -> tuple[list[float], list[int]]:
        if text.count(MASK_TOKEN) != 1:
            raise ValueError(f"text must contain exactly one {MASK_TOKEN}")
        log_probs: list[float] = []
        ranks: list[int] = []
        for candidate in candidates:
            units = candidate.split()
            if not units:
                raise ValueError("candidate has no whitespace units")
            if len(units) == 1:
                log_probs.append(self._unit_log_prob(text, units[0]))
                ranks.append(self._unit_rank(text, units[0]))
            else:
                log_probs.append(compose_multi_token(self, text, candidate))
                # rank of a multi-unit candidate is reported for its first
                # unit at its own masked position
                filled = list(units)
                filled[0] = MASK_TOKEN
                variant = text.replace(MASK_TOKEN, " ".join(filled), 1)
                ranks.append(self._unit_rank(variant, units[0]))
        return log_probs, ranks

    def embed(self, texts: Sequence[str]) -> tuple[list[list[float]], int]:
        vectors = []
        for text in texts:
            base = text.encode("utf-8") + b"\x00"
            vec = []
            for i in range(self.dim):
                h = fnv1a64(base + str(i).encode("ascii"))
                vec.append(((h % 2000) - 1000) / 1000)
            vectors.append(vec)
        return vectors, self.dim


class HttpBackend:
    """Client for a scoring server speaking the three-operation protocol.

    POST {base}/v1/score    {"prompt", "candidates"} -> {"log_scores"}
    POST {base}/v1/maskfill {"text", "candidates"}   -> {"log_probs", "ranks"}
    POST {base}/v1/embed    {"texts"}                -> {"vectors", "dim"}

    Transport failures and 5xx replies raise ``BackendError`` after
    ``retries`` additional attempts; malformed replies and 4xx raise
    ``ProtocolError`` immediately.
    """

    def __init__(self, base_url: str, timeout: float = 30.0, retries: int = 2):
        self.base_url = base_url.rstrip("/")
        self.backend_id = f"http:{self.base_url}"
        self.timeout = timeout
        self.retries = retries

    def _post(self, path: str, payload: dict) -> dict:
        body = json.dumps(payload).encode("utf-8")
        url = f"{self.base_url}{path}"
        last: Exception | None = None
        for _ in range(self.retries + 1):
            request = urllib.request.Request(
                url, data=body, headers={"Content-Type": "application/json"}, method="POST"
            )
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as reply:
                    raw = reply.read()
                break
            except urllib.error.HTTPError as err:
                if 400 <= err.code < 500:
                    raise ProtocolError(f"{url} rejected the request: HTTP {err.code}") from err
                last = err
            except (urllib.error.URLError, TimeoutError, OSError) as err:
                last = err
        else:
            raise BackendError(f"cannot reach {url}: {last}") from last
        try:
            parsed = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise ProtocolError(f"{url} returned malformed JSON") from err
        if not isinstance(parsed, dict):
            raise ProtocolError(f"{url} returned {type(parsed).__name__}, expected object")
        return parsed

    @staticmethod
    def _field(reply: dict, key: str, length: int | None = None) -> list:
        if key not in reply:
            raise ProtocolError(f"reply is missing {key!r}")
        value = reply[key]
        if not isinstance(value, list):
            raise ProtocolError(f"{key!r} must be an array")
        if length is not None and len(value) != length:
            raise ProtocolError(f"{key!r} has {len(value)} entries, expected {length}")
        return value

    def score_completions(self, prompt: str, candidates: Sequence[str]) -> list[float]:
        reply = self._post("/v1/score", {"prompt": prompt, "candidates": list(candidates)})
        return [float(x) for x in self._field(reply, "log_scores", len(candidates))]

    def maskfill(self, text: str, candidates: Sequence[str]) -> tuple[list[float], list[int]]:
        reply = self._post("/v1/maskfill", {"text": text, "candidates": list(candidates)})
        log_probs = [float(x) for x in self._field(reply, "log_probs", len(candidates))]
        ranks = [int(x) for x in self._field(reply, "ranks", len(candidates))]
        if any(r < 1 for r in ranks):
            raise ProtocolError("ranks must be >= 1")
        return log_probs, ranks

    def embed(self, texts: Sequence[str]) -> tuple[list[list[float]], int]:
        reply = self._post("/v1/embed", {"texts": list(texts)})
        vectors = [[float(x) for x in row] for row in self._field(reply, "vectors", len(texts))]
        dim = reply.get("dim")
        if not isinstance(dim, int) or dim <= 0:
            raise ProtocolError("reply is missing a positive integer 'dim'")
        for row in vectors:
            if len(row) != dim:
                raise ProtocolError(f"vector has {len(row)} components, expected {dim}")
        return vectors, dim


class ScoreCache:
    """Content-addressed on-disk cache of backend replies.

    Keys are digests of (backend id, operation, canonical request JSON);
    values are the reply JSON. Writes go through a temp file and an atomic
    rename, so concurrent writers and crashes never leave partial entries.
    """

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def _path(self, backend_id: str, kind: str, request: dict) -> Path:
        canonical = json.dumps(
            {"backend": backend_id, "kind": kind, "request": request},
            sort_keys=True,
            separators=(",", ":"),
            ensure_ascii=False,
        )
        digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()
        return self.root / digest[:2] / f"{digest[2:]}.json"

    def get(self, backend_id: str, kind: str, request: dict):
        path = self._path(backend_id, kind, request)
        try:
            with open(path, encoding="utf-8") as handle:
                return json.load(handle)
        except FileNotFoundError:
            return None
        except json.JSONDecodeError:
            return None  # partial or corrupted entry: treat as a miss

    def put(self, backend_id: str, kind: str, request: dict, reply) -> None:
        path = self._path(backend_id, kind, request)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(reply, handle, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except FileNotFoundError:
                pass
            raise


@dataclass(frozen=True)
class WordVectorTable:
    """Pretrained word vectors with frequency ranks from file order."""

    dim: int
    size: int
    _vectors: dict = field(repr=False)
    _ranks: dict = field(repr=False)

    def vector(self, token: str) -> tuple[float, ...] | None:
        return self._vectors.get(token)

    def rank(self, token: str) -> int:
        """Line-order rank; unknown tokens rank just past the table."""
        return self._ranks.get(token, self.size + 1)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors


def load_word_vectors(path: str | os.PathLike) -> WordVectorTable:
    """Load whitespace-separated ``token c1 .. cD`` lines.

    Rank equals the (1-based) entry number, so the file must already be
    sorted by descending frequency. A repeated token keeps its first vector
    and rank (with a warning) but the repeat still counts as an entry.
    """
    vectors: dict[str, tuple[float, ...]] = {}
    ranks: dict[str, int] = {}
    dim: int | None = None
    entries = 0
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            parts = line.split()
            token, raw = parts[0], parts[1:]
            if not raw:
                raise FormatError(f"line {line_no}: no vector components")
            if dim is None:
                dim = len(raw)
            elif len(raw) != dim:
                raise FormatError(
                    f"line {line_no}: expected {dim} components, found {len(raw)}"
                )
            try:
                components = tuple(float(x) for x in raw)
            except ValueError as err:
                raise FormatError(f"line {line_no}: non-numeric component") from err
            entries += 1
            if token in vectors:
                warnings.warn(f"duplicate token {token!r} at line {line_no}; keeping first")
                continue
            vectors[token] = components
            ranks[token] = entries
    if dim is None:
        raise FormatError("no vector entries found")
    return WordVectorTable(dim=dim, size=entries, _vectors=vectors, _ranks=ranks)


class Gateway:
    """Caching front door for all model scoring.

    Results are returned in request order. When ``cache_dir`` is set,
    replies are cached by content digest so reruns never re-score; cached
    and uncached paths return identical values.
    """

    def __init__(
        self,
        backend,
        cache_dir: str | os.PathLike | None = None,
        max_concurrency: int = 1,
    ):
        if max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        self.backend = backend
        self.cache = ScoreCache(cache_dir) if cache_dir is not None else None
        self.max_concurrency = max_concurrency

    def _cached(self, kind: str, request: dict, compute):
        if self.cache is None:
            return compute()
        hit = self.cache.get(self.backend.backend_id, kind, request)
        if hit is not None:
            return hit
        reply = compute()
        self.cache.put(self.backend.backend_id, kind, request, reply)
        return reply

    def score_completions(self, request: ScoreRequest) -> list[float]:
        payload = {"prompt": request.prompt, "candidates": list(request.candidates)}
        return self._cached(
            "score",
            payload,
            lambda: list(self.backend.score_completions(request.prompt, request.candidates)),
        )

    def score_many(self, requests: Sequence[ScoreRequest]) -> list[list[float]]:
        """Score a batch concurrently; results stay in request order."""
        if self.max_concurrency == 1 or len(requests) <= 1:
            return [self.score_completions(r) for r in requests]
        with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
            return list(pool.map(self.score_completions, requests))

    def _maskfill(self, request: MaskFillRequest) -> tuple[list[float], list[int]]:
        if request.text_with_mask.count(MASK_TOKEN) != 1:
            raise ValueError(f"mask-fill operations require exactly one {MASK_TOKEN}")
        payload = {
            "text": request.text_with_mask,
            "candidates": list(request.candidates),
        }
        reply = self._cached(
            "maskfill",
            payload,
            lambda: list(self.backend.maskfill(request.text_with_mask, request.candidates)),
        )
        log_probs, ranks = reply
        return list(log_probs), [int(r) for r in ranks]

    def mask_fill_scores(self, request: MaskFillRequest) -> list[float]:
        """Log-probability of each candidate at the mask site."""
        return self._maskfill(request)[0]

    def mask_fill_rank(self, request: MaskFillRequest, candidate: str) -> int:
        """Vocabulary rank of a single-unit candidate at the mask site."""
        if len(candidate.split()) != 1:
            raise ValueError("rank is defined for single whitespace-unit candidates")
        single = MaskFillRequest(
            text_with_mask=request.text_with_mask, candidates=(candidate,)
        )
        return self._maskfill(single)[1][0]

    def embed_texts(self, request: EmbedRequest) -> tuple[list[list[float]], int]:
        reply = self._cached(
            "embed", {"texts": list(request.texts)}, lambda: list(self.backend.embed(request.texts))
        )
        vectors, dim = reply
        return [list(v) for v in vectors], int(dim)
