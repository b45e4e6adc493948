"""Distractor plausibility features and the feed-forward ranking classifier.

Static features come from surface length, pretrained word vectors, and
frequency ranks; contextual features query a mask-filling gateway per
subword unit. The classifier is a one-hidden-layer network trained with
Adam under early stopping, scored through a logistic sigmoid, thresholded
on a fixed grid, and emitted as a ranked CSV.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import ClozeInstance, FormatError, SplitMix64, derive_streams, seeded_shuffle
from .core import BLANK_MARKER
from .gateway import MASK_TOKEN, MaskFillRequest, WordVectorTable
from .metrics import aupr, prf1_binary

MODEL_MAGIC = "ffnn-scorer-v1"
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class FrequencyTable:
    """Frequency ranks over a closed vocabulary; unknown tokens rank N+1."""

    ranks: Mapping[str, int]
    size: int

    def __post_init__(self):
        for token, rank in self.ranks.items():
            if not 1 <= rank <= self.size:
                raise ValueError(
                    f"rank {rank} for {token!r} outside [1, {self.size}]"
                )

    def rank_of(self, token: str) -> int:
        return self.ranks.get(token, self.size + 1)

    @classmethod
    def from_word_vectors(cls, table: WordVectorTable) -> "FrequencyTable":
        return cls(ranks=dict(table._ranks), size=table.size)


def _phrase_rank(text: str, table: FrequencyTable) -> int:
    """Rank of a word or phrase; a phrase takes its rarest word's rank."""
    units = text.split()
    if not units:
        return table.size + 1
    return max(table.rank_of(unit) for unit in units)


def length_difference(c: str, d: str) -> int:
    """Absolute character-length difference, whitespace included."""
    return abs(len(c) - len(d))


def _mean_vector(text: str, vectors: WordVectorTable) -> list[float] | None:
    found = [vectors.vector(w) for w in text.split() if vectors.vector(w) is not None]
    if not found:
        warnings.warn(f"every word of {text!r} is out of vocabulary; similarity is 0")
        return None
    return [sum(column) / len(found) for column in zip(*found)]


def embedding_similarity(c: str, d: str, vectors: WordVectorTable) -> float:
    """Cosine similarity of mean word vectors; a fully-OOV side gives 0."""
    a = _mean_vector(c, vectors)
    b = _mean_vector(d, vectors)
    if a is None or b is None:
        return 0.0
    norm_a = math.sqrt(sum(x * x for x in a))
    norm_b = math.sqrt(sum(x * x for x in b))
    if norm_a == 0.0 or norm_b == 0.0:
        warnings.warn("zero-magnitude mean vector; similarity is 0")
        return 0.0
    return sum(x * y for x, y in zip(a, b)) / (norm_a * norm_b)


def distractor_frequency(d: str, table: FrequencyTable) -> float:
    """Negative log frequency rank; rank 1 scores 0."""
    return -math.log(_phrase_rank(d, table))


def rank_difference(c: str, d: str, table: FrequencyTable) -> float:
    """log(1 + |rank(c) - rank(d)|)."""
    return math.log(1 + abs(_phrase_rank(c, table) - _phrase_rank(d, table)))


def contextual_features(
    instance: ClozeInstance, side: str, gateway
) -> tuple[float, float, float, float, float, float]:
    """Mean/min/max pooled log-probability and log-rank per subword unit.

    Each unit of the candidate is masked in turn with the other units
    filled in, so every gateway call sees exactly one mask. Returns
    (lp_mean, lp_min, lp_max, rank_mean, rank_min, rank_max).
    """
    if side not in ("distractor", "correct"):
        raise ValueError(f"side must be 'distractor' or 'correct', got {side!r}")
    if instance.context.count(BLANK_MARKER) != 1:
        raise ValueError(
            f"context of {instance.id} must contain exactly one {BLANK_MARKER!r}"
        )
    candidate = (
        instance.distractor if side == "distractor" else instance.correct
    ).inflected
    units = candidate.split()
    if not units:
        raise ValueError(f"candidate for {instance.id} has no units")
    log_probs = []
    log_ranks = []
    for i, unit in enumerate(units):
        masked = " ".join(
            MASK_TOKEN if j == i else other for j, other in enumerate(units)
        )
        request = MaskFillRequest(
            text_with_mask=instance.context.replace(BLANK_MARKER, masked, 1),
            candidates=(unit,),
        )
        log_probs.append(gateway.mask_fill_scores(request)[0])
        log_ranks.append(math.log(gateway.mask_fill_rank(request, unit)))
    return (
        sum(log_probs) / len(log_probs),
        min(log_probs),
        max(log_probs),
        sum(log_ranks) / len(log_ranks),
        min(log_ranks),
        max(log_ranks),
    )


def _check_block(name: str, block) -> None:
    if block is None:
        return
    if len(block) != 6 or any(not math.isfinite(v) for v in block):
        raise ValueError(f"{name} must be 6 finite reals")


@dataclass(frozen=True)
class FeatureVector:
    """Model input for one (correct answer, distractor) pair."""

    len_diff: float
    cos_head: float
    cos_infl: float
    freq_head: float
    freq_infl: float
    rankdiff_head: float
    rankdiff_infl: float
    ctx: tuple[float, ...] | None = None
    ctx_correct: tuple[float, ...] | None = None

    def __post_init__(self):
        base = (
            self.len_diff, self.cos_head, self.cos_infl, self.freq_head,
            self.freq_infl, self.rankdiff_head, self.rankdiff_infl,
        )
        if any(not math.isfinite(v) for v in base):
            raise ValueError("every feature must be finite")
        _check_block("ctx", self.ctx)
        _check_block("ctx_correct", self.ctx_correct)
        if self.ctx_correct is not None and self.ctx is None:
            raise ValueError("correct-side block requires the distractor block")

    def as_row(self) -> tuple[float, ...]:
        row = (
            self.len_diff, self.cos_head, self.cos_infl, self.freq_head,
            self.freq_infl, self.rankdiff_head, self.rankdiff_infl,
        )
        if self.ctx is not None:
            row += self.ctx
        if self.ctx_correct is not None:
            row += self.ctx_correct
        return row


def extract_features(
    instance: ClozeInstance,
    vectors: WordVectorTable,
    freq_table: FrequencyTable,
    gateway=None,
    contextual: bool = False,
    include_correct: bool = False,
) -> FeatureVector:
    """Assemble the feature vector over headword and surface forms.

    Length difference uses the surface (inflected) forms. The contextual
    block covers the distractor side; include_correct adds a second block
    for the correct answer.
    """
    if include_correct and not contextual:
        raise ValueError("include_correct requires contextual features")
    if contextual and gateway is None:
        raise ValueError("contextual features need a gateway")
    c, d = instance.correct, instance.distractor
    return FeatureVector(
        len_diff=float(length_difference(c.inflected, d.inflected)),
        cos_head=embedding_similarity(c.headword, d.headword, vectors),
        cos_infl=embedding_similarity(c.inflected, d.inflected, vectors),
        freq_head=distractor_frequency(d.headword, freq_table),
        freq_infl=distractor_frequency(d.inflected, freq_table),
        rankdiff_head=rank_difference(c.headword, d.headword, freq_table),
        rankdiff_infl=rank_difference(c.inflected, d.inflected, freq_table),
        ctx=contextual_features(instance, "distractor", gateway) if contextual else None,
        ctx_correct=(
            contextual_features(instance, "correct", gateway) if include_correct else None
        ),
    )


@dataclass
class MlpModel:
    """One-hidden-layer ReLU network with a scalar output."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float

    @property
    def input_width(self) -> int:
        return self.W1.shape[0]

    def copy(self) -> "MlpModel":
        return MlpModel(
            W1=self.W1.copy(), b1=self.b1.copy(), W2=self.W2.copy(), b2=float(self.b2)
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 30
    patience: int = 5
    batch_size: int = 32
    seed: int = 0
    tune_metric: str = "aupr"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("max_epochs, patience, and batch_size must be >= 1")
        if self.tune_metric not in ("aupr", "f1"):
            raise ValueError(f"unknown tune_metric {self.tune_metric!r}")


@dataclass(frozen=True)
class TrainingTrace:
    epoch_metrics: tuple[float, ...]
    best_epoch: int


def init_model(width: int, hidden: int, seed: int) -> MlpModel:
    """Glorot-uniform weights and zero biases from a seeded stream."""
    rng = SplitMix64(seed)

    def uniform(limit):
        return (rng.next_float() * 2 - 1) * limit

    limit1 = math.sqrt(6 / (width + hidden))
    W1 = np.array(
        [[uniform(limit1) for _ in range(hidden)] for _ in range(width)], dtype=float
    )
    limit2 = math.sqrt(6 / (hidden + 1))
    W2 = np.array([uniform(limit2) for _ in range(hidden)], dtype=float)
    return MlpModel(W1=W1, b1=np.zeros(hidden), W2=W2, b2=0.0)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    expz = np.exp(z[~pos])
    out[~pos] = expz / (1.0 + expz)
    return out


def _forward(model: MlpModel, X: np.ndarray):
    pre = X @ model.W1 + model.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ model.W2 + model.b2
    return pre, hidden, logits


def loss_and_gradients(model: MlpModel, features, labels):
    """Mean logistic loss and its analytic gradients (W1, b1, W2, b2)."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    pre, hidden, z = _forward(model, X)
    # stable binary cross-entropy with logits
    loss = float(np.mean(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))))
    n = len(y)
    dz = (_sigmoid(z) - y) / n
    gW2 = hidden.T @ dz
    gb2 = float(dz.sum())
    dhidden = np.outer(dz, model.W2) * (pre > 0)
    gW1 = X.T @ dhidden
    gb1 = dhidden.sum(axis=0)
    return loss, (gW1, gb1, gW2, gb2)


def score_candidates(model: MlpModel, feature_rows) -> list[float]:
    """Sigmoid of the network output per row."""
    X = np.asarray(feature_rows, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.input_width:
        raise ValueError(
            f"feature width {X.shape[-1] if X.ndim else 0} does not match "
            f"model width {model.input_width}"
        )
    _, _, logits = _forward(model, X)
    return [float(s) for s in _sigmoid(logits)]


def _epoch_metric(model, dev_X, dev_labels, tune_metric):
    scores = score_candidates(model, dev_X)
    if tune_metric == "aupr":
        return aupr(scores, dev_labels)
    return prf1_binary(scores, dev_labels, 0.5).f1


def train_mlp(
    features,
    labels,
    cfg: TrainConfig,
    dev_features=None,
    dev_labels=None,
    hidden: int = 50,
) -> tuple[MlpModel, TrainingTrace]:
    """Adam-trained classifier with patience-based early stopping.

    Evaluates the tuning metric at every epoch end on the dev split (the
    training data when no dev split is given), keeps the best-epoch
    parameters, and stops once the metric has not improved for
    cfg.patience consecutive epochs. Bit-deterministic per seed.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=bool)
    if X.ndim != 2 or len(X) != len(y) or len(X) == 0:
        raise ValueError("features must be a non-empty 2-D array matching labels")
    if bool(y.all()) or not bool(y.any()):
        raise ValueError("training needs both classes; got a single-class set")
    if (dev_features is None) != (dev_labels is None):
        raise ValueError("dev features and labels come together")
    dev_X = X if dev_features is None else np.asarray(dev_features, dtype=float)
    dev_y = [bool(v) for v in (y if dev_labels is None else dev_labels)]

    model = init_model(X.shape[1], hidden, cfg.seed)
    m_state = [np.zeros_like(model.W1), np.zeros_like(model.b1),
               np.zeros_like(model.W2), 0.0]
    v_state = [np.zeros_like(model.W1), np.zeros_like(model.b1),
               np.zeros_like(model.W2), 0.0]
    step = 0
    y_float = y.astype(float)
    epoch_streams = derive_streams(cfg.seed, cfg.max_epochs)

    best_metric = -math.inf
    best_model = model.copy()
    best_epoch = 0
    flat_epochs = 0
    trace = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = seeded_shuffle(range(len(X)), epoch_streams[epoch - 1])
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grads = loss_and_gradients(model, X[batch], y_float[batch])
            step += 1
            scale1 = 1 - ADAM_BETA1**step
            scale2 = 1 - ADAM_BETA2**step
            params = [model.W1, model.b1, model.W2]
            for i in range(3):
                m_state[i] = ADAM_BETA1 * m_state[i] + (1 - ADAM_BETA1) * grads[i]
                v_state[i] = ADAM_BETA2 * v_state[i] + (1 - ADAM_BETA2) * grads[i] ** 2
                params[i] -= cfg.learning_rate * (m_state[i] / scale1) / (
                    np.sqrt(v_state[i] / scale2) + ADAM_EPS
                )
            m_state[3] = ADAM_BETA1 * m_state[3] + (1 - ADAM_BETA1) * grads[3]
            v_state[3] = ADAM_BETA2 * v_state[3] + (1 - ADAM_BETA2) * grads[3] ** 2
            model.b2 -= cfg.learning_rate * (m_state[3] / scale1) / (
                math.sqrt(v_state[3] / scale2) + ADAM_EPS
            )
        metric = _epoch_metric(model, dev_X, dev_y, cfg.tune_metric)
        trace.append(metric)
        if metric > best_metric:
            best_metric = metric
            best_model = model.copy()
            best_epoch = epoch
            flat_epochs = 0
        else:
            flat_epochs += 1
            if flat_epochs >= cfg.patience:
                break
    return best_model, TrainingTrace(epoch_metrics=tuple(trace), best_epoch=best_epoch)


THRESHOLD_GRID = tuple(i / 10 for i in range(1, 10))


def tune_threshold(scores, labels, metric: str = "f1") -> float:
    """Grid-argmax of F1 over thresholds 0.1..0.9; ties keep the lowest."""
    if metric != "f1":
        raise ValueError(f"unsupported tuning metric {metric!r}")
    best_threshold = THRESHOLD_GRID[0]
    best_f1 = -1.0
    for threshold in THRESHOLD_GRID:
        f1 = prf1_binary(scores, labels, threshold).f1
        if f1 > best_f1:
            best_f1 = f1
            best_threshold = threshold
    return best_threshold


def normalize_scores_minmax(scores) -> list[float]:
    """(x - min) / (max - min); a constant input collapses to zeros."""
    values = [float(s) for s in scores]
    if not values:
        return []
    low, high = min(values), max(values)
    if high == low:
        return [0.0] * len(values)
    return [(v - low) / (high - low) for v in values]


def save_model(model: MlpModel, path) -> None:
    """Text header with shapes, then row-major float64 parameters."""
    width, hidden = model.W1.shape
    header = f"{MODEL_MAGIC} in={width} hidden={hidden}\n".encode("ascii")
    blocks = [
        np.ascontiguousarray(model.W1, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.b1, dtype="<f8").tobytes(),
        np.ascontiguousarray(model.W2, dtype="<f8").tobytes(),
        np.array([model.b2], dtype="<f8").tobytes(),
    ]
    Path(path).write_bytes(header + b"".join(blocks))


def load_model(path) -> MlpModel:
    raw = Path(path).read_bytes()
    header, _, payload = raw.partition(b"\n")
    try:
        magic, in_part, hidden_part = header.decode("ascii").split()
        if magic != MODEL_MAGIC:
            raise ValueError
        width = int(in_part.removeprefix("in="))
        hidden = int(hidden_part.removeprefix("hidden="))
    except ValueError:
        raise FormatError(f"{path}: not a recognized model file") from None
    expected = 8 * (width * hidden + hidden + hidden + 1)
    if len(payload) != expected:
        raise FormatError(
            f"{path}: expected {expected} parameter bytes, found {len(payload)}"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    offset = width * hidden
    return MlpModel(
        W1=flat[:offset].reshape(width, hidden).copy(),
        b1=flat[offset : offset + hidden].copy(),
        W2=flat[offset + hidden : offset + 2 * hidden].copy(),
        b2=float(flat[-1]),
    )


RANKED_CSV_COLUMNS = (
    "instance_id", "distractor", "raw_score", "normalized_score", "rank", "gold_label",
)


def write_ranked_csv(path, instances: Sequence[ClozeInstance], raw_scores) -> None:
    """Candidates by descending raw score; ties order by instance id."""
    if len(instances) != len(raw_scores):
        raise ValueError(
            f"{len(instances)} instances but {len(raw_scores)} scores"
        )
    normalized = normalize_scores_minmax(raw_scores)
    order = sorted(
        range(len(instances)),
        key=lambda i: (-float(raw_scores[i]), instances[i].id),
    )
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(RANKED_CSV_COLUMNS)
        for rank, idx in enumerate(order, start=1):
            instance = instances[idx]
            writer.writerow(
                [
                    instance.id,
                    instance.distractor.inflected,
                    float(raw_scores[idx]),
                    normalized[idx],
                    rank,
                    instance.label,
                ]
            )
