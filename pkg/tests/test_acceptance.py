"""Acceptance gate: one test per release criterion, at the stated tolerance.

Run with ``pytest tests/test_acceptance.py -v`` to get one pass/fail line
per criterion. Every expected value here is produced by an independent
oracle (brute force or closed form), never by the code under test.
"""

import json
import math
import random
import time
from pathlib import Path

import numpy as np
import pytest

from promptlab.cli import main
from promptlab.core import Demonstration, LabelSpace, ScoreVector, TextExample
from promptlab.distractor import TrainConfig, init_model, loss_and_gradients, train_mlp
from promptlab.labeldesc import build_labeldesc_dataset
from promptlab.metrics import (
    accuracy,
    aupr,
    entropy_base2,
    gold_in_ambig_rate,
    paired_bootstrap,
    prf1_binary,
    spearman,
)
from promptlab.prompting import PromptBundle, assemble_icl_prompt, load_patterns, render_pattern
from promptlab.selection import (
    AmbigSet,
    RetrievedList,
    SelectionConfig,
    SelectionError,
    compute_ambig_set,
    scan_demos,
)


def elapsed_under(start, limit):
    assert time.monotonic() - start < limit


def test_entropy_constants_for_uniform_label_spaces():
    start = time.monotonic()
    assert entropy_base2([1 / 4] * 4) == pytest.approx(2.00, abs=0.01)
    assert entropy_base2([1 / 5] * 5) == pytest.approx(2.32, abs=0.01)
    assert entropy_base2([1 / 27] * 27) == pytest.approx(4.75, abs=0.01)
    elapsed_under(start, 1.0)


def test_labeldesc_set_sizes_exact():
    start = time.monotonic()
    sizes = {
        "agnews": 24,
        "yahoo": 60,
        "dbpedia": 84,
        "sentiment-5": 125,
        "sentiment-2": 100,
    }
    for dataset, expected in sizes.items():
        assert len(build_labeldesc_dataset(dataset).examples) == expected
    elapsed_under(start, 1.0)


def test_always_true_baseline_precision_recall_f1():
    start = time.monotonic()
    golds = [True] * 1046 + [False] * (7859 - 1046)
    report = prf1_binary([1.0] * 7859, golds, 0.5)
    assert round(100 * report.precision, 1) == pytest.approx(13.3, abs=0.1)
    assert round(100 * report.recall, 1) == pytest.approx(100.0, abs=0.1)
    assert round(100 * report.f1, 1) == pytest.approx(23.5, abs=0.1)
    elapsed_under(start, 1.0)


def test_templates_render_byte_exactly():
    start = time.monotonic()
    text = "the committee reviewed the {quoted} draft\twith care"
    for pattern in load_patterns():
        prefix, suffix = pattern.template.split("{x}")
        assert render_pattern(pattern, text) == prefix + text + suffix

    zero = PromptBundle(task_definition="DEFN", demonstrations=(), test_text="XT")
    assert (
        assemble_icl_prompt(zero)
        == "DEFN\n\nThus given the following input:\ninput: XT\nanswer:"
    )

    def demo(text, label, rank):
        return Demonstration(
            example=TextExample(id=f"d-{rank}", text=text, gold_label=label),
            gold_label=label,
            retrieval_rank=rank,
        )

    two = PromptBundle(
        task_definition="DEFN",
        demonstrations=(demo("X1", "Y1", 1), demo("X2", "Y2", 2)),
        test_text="XT",
    )
    assert assemble_icl_prompt(two) == (
        "DEFN\n\n"
        "Some examples are:\n"
        "input: X1\nanswer: Y1\n\n"
        "input: X2\nanswer: Y2\n\n"
        "Thus given the following input:\ninput: XT\nanswer:"
    )
    elapsed_under(start, 1.0)


CHAINS = {
    "retr": ("retr",),
    "gold": ("gold", "retr"),
    "gold_mis": ("gold_mis", "gold", "retr"),
    "gold_mis_pred": ("gold_mis_pred", "gold_mis", "gold", "retr"),
}


def _predicate(stage, demo, ambig):
    gold_in = demo.gold_label in (ambig.first, ambig.second)
    mis = gold_in and demo.zero_shot_prediction != demo.gold_label
    if stage == "retr":
        return True
    if stage == "gold":
        return gold_in
    if stage == "gold_mis":
        return mis
    return mis and demo.zero_shot_prediction in (ambig.first, ambig.second)


def _oracle(strategy, entries, ambig, n, cap):
    chosen, filled = [], []
    for stage in CHAINS[strategy]:
        if len(chosen) >= n:
            break
        if stage == "gold":
            visible = entries[:cap]
        elif stage in ("gold_mis", "gold_mis_pred"):
            # The cap counts raw misclassifications (prediction != gold),
            # whether or not the entry satisfies the stage predicate.
            visible, mis_seen = [], 0
            for entry in entries:
                if entry.zero_shot_prediction != entry.gold_label:
                    mis_seen += 1
                    if mis_seen > cap:
                        break
                visible.append(entry)
        else:
            visible = entries
        count = 0
        for entry in visible:
            if len(chosen) >= n:
                break
            if entry in chosen or not _predicate(stage, entry, ambig):
                continue
            chosen.append(entry)
            count += 1
        filled.append((stage, count))
    return chosen, tuple(filled), len(chosen) >= n


def _random_pool(rng):
    n_labels = rng.randint(4, 28)
    labels = [f"L{i:02d}" for i in range(n_labels)]
    size = rng.randint(1, 50)
    entries = []
    for i in range(size):
        entries.append(
            Demonstration(
                example=TextExample(id=f"d{i:02d}", text=f"text {i}", gold_label=None),
                gold_label=rng.choice(labels),
                retrieval_rank=i + 1,
                zero_shot_prediction=rng.choice(labels),
            )
        )
    first = rng.choice(labels)
    second = rng.choice([l for l in labels if l != first])
    return entries, AmbigSet(first=first, second=second)


def _check_against_oracle(strategy, entries, ambig, n, cap):
    retrieved = RetrievedList(
        test_id="t", entries=tuple((e, float(len(entries) - i)) for i, e in enumerate(entries))
    )
    cfg = SelectionConfig(n=n, strategy=strategy, search_cap=cap)
    expected, filled, feasible = _oracle(strategy, entries, ambig, n, cap)
    if not feasible:
        with pytest.raises(SelectionError):
            scan_demos(cfg, retrieved, ambig)
        return
    demos, report = scan_demos(cfg, retrieved, ambig)
    assert [d.example.id for d in demos] == [e.example.id for e in expected]
    assert report.stage_filled == filled


def test_selection_matches_brute_force_on_randomized_pools():
    start = time.monotonic()
    rng = random.Random(20260822)
    for _ in range(1000):
        entries, ambig = _random_pool(rng)
        n = rng.randint(0, min(len(entries), 8))
        for strategy in CHAINS:
            _check_against_oracle(strategy, entries, ambig, n, cap=1000)
            _check_against_oracle(
                strategy, entries, ambig, n, cap=rng.randint(max(1, n), max(10, n))
            )
    elapsed_under(start, 30.0)


def test_selection_stage_attribution_invariants():
    start = time.monotonic()
    rng = random.Random(711)
    for _ in range(500):
        entries, ambig = _random_pool(rng)
        n = rng.randint(0, min(len(entries), 8))
        strategy = rng.choice(list(CHAINS))
        retrieved = RetrievedList(
            test_id="t",
            entries=tuple((e, float(len(entries) - i)) for i, e in enumerate(entries)),
        )
        cfg = SelectionConfig(n=n, strategy=strategy, search_cap=rng.randint(max(1, n), 60))
        try:
            demos, report = scan_demos(cfg, retrieved, ambig)
        except SelectionError:
            continue
        stages = [s for s, count in report.stage_filled for _ in range(count)]
        assert len(stages) == len(demos)
        last_rank = {}
        for demo, stage in zip(demos, stages):
            assert _predicate(stage, demo, ambig)
            if stage in last_rank:
                assert demo.retrieval_rank > last_rank[stage]
            last_rank[stage] = demo.retrieval_rank
    elapsed_under(start, 10.0)


def _brute_aupr(scores, labels):
    pairs = sorted(zip(scores, labels), key=lambda p: -p[0])
    total_pos = sum(labels)
    area, prev_recall = 0.0, 0.0
    for cut in sorted(set(scores), reverse=True):
        taken = [(s, l) for s, l in pairs if s >= cut]
        tp = sum(l for _, l in taken)
        precision = tp / len(taken)
        recall = tp / total_pos
        area += precision * (recall - prev_recall)
        prev_recall = recall
    return area


def _brute_ranks(values):
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and values[order[j]] == values[order[i]]:
            j += 1
        for k in range(i, j):
            ranks[order[k]] = (i + j + 1) / 2
        i = j
    return ranks


def _brute_pearson(xs, ys):
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(xs, ys))
    vx = sum((a - mx) ** 2 for a in xs)
    vy = sum((b - my) ** 2 for b in ys)
    return cov / math.sqrt(vx * vy)


def test_aupr_and_spearman_match_brute_force():
    start = time.monotonic()
    rng = random.Random(5417)
    for _ in range(500):
        size = rng.randint(2, 12)
        labels = [rng.random() < 0.5 for _ in range(size)]
        if not any(labels):
            labels[0] = True
        if all(labels):
            labels[-1] = False
        scores = [round(rng.uniform(-2, 2), rng.choice([1, 3, 12])) for _ in range(size)]
        assert aupr(scores, labels) == pytest.approx(
            _brute_aupr(scores, labels), abs=1e-9
        )

        xs = [rng.choice([0.0, 1.0, rng.uniform(-3, 3)]) for _ in range(size)]
        ys = [rng.choice([0.0, 1.0, rng.uniform(-3, 3)]) for _ in range(size)]
        if len(set(xs)) < 2:
            xs[0] += 1.0
        if len(set(ys)) < 2:
            ys[0] += 1.0
        expected = _brute_pearson(_brute_ranks(xs), _brute_ranks(ys))
        assert spearman(xs, ys) == pytest.approx(expected, abs=1e-9)
    elapsed_under(start, 10.0)


def test_paired_bootstrap_determinism_and_edge_points():
    start = time.monotonic()
    labels = ["a", "b", "c"]
    rng = random.Random(99)
    golds = [rng.choice(labels) for _ in range(30)]
    preds_a = [rng.choice(labels) for _ in range(30)]
    preds_b = [rng.choice(labels) for _ in range(30)]

    first = paired_bootstrap(golds, preds_a, preds_b, accuracy, seed=17, resamples=1000)
    second = paired_bootstrap(golds, preds_a, preds_b, accuracy, seed=17, resamples=1000)
    assert first == second

    same = paired_bootstrap(golds, preds_a, preds_a, accuracy, seed=3, resamples=1000)
    assert same.p_value == 0.5
    assert same.ties == 1000

    wrong = [labels[(labels.index(g) + 1) % 3] for g in golds]
    dominant = paired_bootstrap(golds, golds, wrong, accuracy, seed=4, resamples=1000)
    assert dominant.p_value == 0.0
    assert dominant.wins_a == 1000
    elapsed_under(start, 10.0)


def _separable(n, seed):
    rng = random.Random(seed)
    features, labels = [], []
    for i in range(n):
        label = i % 2 == 0
        base = 2.0 if label else -2.0
        features.append([base + rng.uniform(-0.5, 0.5), base + rng.uniform(-0.5, 0.5)])
        labels.append(label)
    return features, labels


def test_mlp_gradients_toy_training_and_zero_lr():
    start = time.monotonic()
    rng = random.Random(8)
    model = init_model(5, 4, seed=9)
    rows = np.array([[rng.uniform(-1, 1) for _ in range(5)] for _ in range(8)])
    labels = np.array([i % 2 == 0 for i in range(8)], dtype=float)
    _, (g_w1, g_b1, g_w2, g_b2) = loss_and_gradients(model, rows, labels)

    h = 1e-5
    worst = 0.0

    def numeric(setter, getter):
        nonlocal worst
        value = getter()
        setter(value + h)
        up, _ = loss_and_gradients(model, rows, labels)
        setter(value - h)
        down, _ = loss_and_gradients(model, rows, labels)
        setter(value)
        return (up - down) / (2 * h)

    for mat, grad in ((model.W1, g_w1), (model.b1, g_b1), (model.W2, g_w2)):
        for idx in np.ndindex(mat.shape):
            num = numeric(
                lambda v, m=mat, i=idx: m.__setitem__(i, v),
                lambda m=mat, i=idx: float(m[i]),
            )
            rel = abs(grad[idx] - num) / max(1e-8, abs(grad[idx]) + abs(num))
            worst = max(worst, rel)

    num_b2 = numeric(lambda v: setattr(model, "b2", v), lambda: model.b2)
    worst = max(worst, abs(g_b2 - num_b2) / max(1e-8, abs(g_b2) + abs(num_b2)))
    assert worst < 1e-4

    features, labels = _separable(200, seed=2)
    cfg = TrainConfig(learning_rate=0.05, max_epochs=200, patience=200, seed=1)
    _, trace = train_mlp(features, labels, cfg, hidden=8)
    assert max(trace.epoch_metrics) == 1.0

    frozen_cfg = TrainConfig(learning_rate=0.0, max_epochs=3, patience=5, seed=4)
    frozen, _ = train_mlp(features, labels, frozen_cfg, hidden=6)
    reference = init_model(2, 6, seed=4)
    assert np.array_equal(frozen.W1, reference.W1)
    assert np.array_equal(frozen.b1, reference.b1)
    assert np.array_equal(frozen.W2, reference.W2)
    assert frozen.b2 == reference.b2
    elapsed_under(start, 30.0)


SST = ("Great", "Good", "Okay", "Bad", "Terrible")


def test_icl_cli_runs_are_byte_identical(tmp_path):
    start = time.monotonic()

    def rows(prefix, count):
        return [
            {
                "id": f"{prefix}-{i:03d}",
                "text": f"{prefix} review {i} praising aspect{i % 11} of item{i % 7}",
                "label": SST[i % 5],
            }
            for i in range(count)
        ]

    def write_jsonl(path, records):
        path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
        return path

    test_path = write_jsonl(tmp_path / "test.jsonl", rows("test", 50))
    pool_path = write_jsonl(tmp_path / "pool.jsonl", rows("pool", 25))
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps(
            {
                "task": "sst",
                "datasets": {"test": str(test_path), "pool": str(pool_path)},
                "backend": "mock",
                "selection": {
                    "n": 4,
                    "strategy": "gold_mis_pred",
                    "ordering": "entropy_ascending",
                },
                "seeds": [5],
                "out_dir": str(tmp_path / "out_a"),
                "cache_dir": str(tmp_path / "cache"),
            }
        ),
        encoding="utf-8",
    )

    assert main(["icl", "--config", str(config_path), "--verify"]) == 0
    assert main(["icl", "--config", str(config_path), "--out", str(tmp_path / "out_b")]) == 0

    def tree(root):
        return {
            str(p.relative_to(root)): p.read_bytes()
            for p in sorted(Path(root).rglob("*"))
            if p.is_file()
        }

    first = tree(tmp_path / "out_a")
    second = tree(tmp_path / "out_b")
    assert first.keys() == second.keys()
    assert first == second
    elapsed_under(start, 60.0)


def test_binary_label_space_forces_full_gold_ambiguity():
    space = LabelSpace.from_ids(["pos", "neg"])
    rng = random.Random(31)
    ambig_sets, golds = [], []
    for _ in range(200):
        vector = ScoreVector(scores=(rng.uniform(-5, 5), rng.uniform(-5, 5)))
        ambig_sets.append(compute_ambig_set(vector, space))
        golds.append(rng.choice(["pos", "neg"]))
    assert gold_in_ambig_rate(ambig_sets, golds) == 100.0
