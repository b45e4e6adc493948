import dataclasses
import logging
import random

import pytest
from hypothesis import given, settings, strategies as st

from promptlab import selection
from promptlab.core import (
    Demonstration,
    LabelSpace,
    ScoreVector,
    TextExample,
    seeded_shuffle,
)
from promptlab.gateway import Gateway, MockBackend
from promptlab.prompting import (
    PromptBundle,
    classify_with_prompt,
    load_icl_label_space,
    load_patterns,
    load_verbalizers,
    verbalizer_for,
    zero_shot_classify,
)

SPACE = LabelSpace.from_ids(["A", "B", "C", "D"])
AMBIG_AB = selection.AmbigSet(first="A", second="B")


def make_demo(demo_id, gold, rank=0, pred=None, scores=None):
    return Demonstration(
        example=TextExample(id=demo_id, text=f"text of {demo_id}"),
        gold_label=gold,
        retrieval_rank=rank,
        zero_shot_prediction=pred,
        zero_shot_scores=scores,
    )


def make_retrieved(rows, test_id="t0"):
    """rows: list of (demo_id, gold, pred); similarities strictly descend."""
    entries = []
    for i, (demo_id, gold, pred) in enumerate(rows):
        demo = make_demo(demo_id, gold, rank=i + 1, pred=pred)
        entries.append((demo, float(100 - i)))
    return selection.RetrievedList(test_id=test_id, entries=tuple(entries))


class TestRankByInnerProduct:
    def test_hand_case(self):
        pool = [
            (make_demo("a", "A"), (2.0, 0.0)),
            (make_demo("b", "A"), (1.0, 1.0)),
            (make_demo("c", "A"), (0.0, 3.0)),
        ]
        out = selection.rank_by_inner_product("t1", (1.0, 0.0), pool)
        assert out.test_id == "t1"
        assert [(d.example.id, s) for d, s in out.entries] == [
            ("a", 2.0),
            ("b", 1.0),
            ("c", 0.0),
        ]
        assert [d.retrieval_rank for d, _ in out.entries] == [1, 2, 3]

    def test_zero_vector_orders_by_id(self):
        pool = [
            (make_demo("b", "A"), (1.0, 2.0)),
            (make_demo("c", "A"), (9.0, 9.0)),
            (make_demo("a", "A"), (5.0, 1.0)),
        ]
        out = selection.rank_by_inner_product("t1", (0.0, 0.0), pool)
        assert [d.example.id for d, _ in out.entries] == ["a", "b", "c"]
        assert all(s == 0.0 for _, s in out.entries)

    def test_dimension_mismatch(self):
        pool = [(make_demo("a", "A"), (1.0, 2.0, 3.0))]
        with pytest.raises(ValueError, match="dimension"):
            selection.rank_by_inner_product("t1", (1.0, 0.0), pool)

    def test_matches_brute_force_sort(self):
        rng = random.Random(7)
        pool = [
            (make_demo(f"d{i:02d}", "A"), tuple(rng.uniform(-1, 1) for _ in range(4)))
            for i in range(50)
        ]
        test_vec = tuple(rng.uniform(-1, 1) for _ in range(4))
        out = selection.rank_by_inner_product("t1", test_vec, pool)

        # oracle: recompute dot products and sort by (-sim, id) independently
        sims = {
            demo.example.id: sum(a * b for a, b in zip(test_vec, vec))
            for demo, vec in pool
        }
        expected = sorted(sims, key=lambda i: (-sims[i], i))
        assert [d.example.id for d, _ in out.entries] == expected
        for demo, sim in out.entries:
            assert sim == pytest.approx(sims[demo.example.id])


class TestComputeAmbigSet:
    def test_top_two(self):
        space = LabelSpace.from_ids(["A", "B", "C"])
        ambig = selection.compute_ambig_set(ScoreVector(scores=(-1.2, -0.3, -5.0)), space)
        assert (ambig.first, ambig.second) == ("B", "A")

    def test_first_is_argmax_second_is_runner_up(self):
        # the pair is ordered by score, not by label-space position
        space = load_icl_label_space("goemotions")
        scores = [-5.0] * len(space)
        scores[space.index_of("Love")] = -0.5
        scores[space.index_of("Joy")] = -1.0
        ambig = selection.compute_ambig_set(ScoreVector(scores=tuple(scores)), space)
        assert (ambig.first, ambig.second) == ("Love", "Joy")

    def test_tie_for_second_takes_lower_index(self):
        space = LabelSpace.from_ids(["A", "B", "C"])
        ambig = selection.compute_ambig_set(ScoreVector(scores=(-1.0, -3.0, -3.0)), space)
        assert (ambig.first, ambig.second) == ("A", "B")
        ambig = selection.compute_ambig_set(ScoreVector(scores=(-1.0, -1.0, -9.0)), space)
        assert (ambig.first, ambig.second) == ("A", "B")

    def test_validation(self):
        with pytest.raises(ValueError):
            selection.compute_ambig_set(
                ScoreVector(scores=(-1.0,)), LabelSpace.from_ids(["A"])
            )
        with pytest.raises(ValueError):
            selection.compute_ambig_set(
                ScoreVector(scores=(-1.0, -2.0)), LabelSpace.from_ids(["A", "B", "C"])
            )

    def test_membership_and_distinctness(self):
        assert "A" in AMBIG_AB and "B" in AMBIG_AB and "C" not in AMBIG_AB
        with pytest.raises(ValueError):
            selection.AmbigSet(first="A", second="A")


class TestSelectionConfig:
    def test_defaults(self):
        cfg = selection.SelectionConfig(n=4, strategy="retr")
        assert cfg.search_cap == 250
        assert cfg.ordering == "seeded_shuffle"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"n": -1, "strategy": "retr"},
            {"n": 4, "strategy": "retr", "search_cap": 3},
            {"n": 4, "strategy": "nope"},
            {"n": 4, "strategy": "retr", "ordering": "alphabetical"},
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            selection.SelectionConfig(**kwargs)


class TestAnnotatePool:
    def test_matches_per_example_calls_and_is_deterministic(self, tmp_path):
        gw = Gateway(MockBackend(), cache_dir=tmp_path / "cache")
        space = LabelSpace.from_ids(["alpha", "beta"])
        pool = tuple(
            make_demo(f"p{i}", "alpha") for i in range(6)
        )
        annotated = selection.annotate_pool(pool, "Classify the text.", space, gw)
        assert len(annotated) == 6
        for before, after in zip(pool, annotated):
            assert after.example == before.example
            assert after.gold_label == before.gold_label
            bundle = PromptBundle(
                task_definition="Classify the text.",
                demonstrations=(),
                test_text=before.example.text,
            )
            pred, vec = classify_with_prompt(bundle, space, gw)
            assert after.zero_shot_prediction == pred
            assert after.zero_shot_scores == vec
        again = selection.annotate_pool(pool, "Classify the text.", space, gw)
        assert again == annotated

    def test_empty_pool(self):
        gw = Gateway(MockBackend())
        out = selection.annotate_pool((), "Defn.", LabelSpace.from_ids(["a", "b"]), gw)
        assert out == ()

    def test_pattern_route_matches_mask_fill(self):
        gw = Gateway(MockBackend())
        patterns = {p.id: p for p in load_patterns()}
        pattern = patterns["agnews/prompt-1"]
        verbalizer = verbalizer_for("agnews")
        pool = (make_demo("p0", "World"), make_demo("p1", "Sports"))
        annotated = selection.annotate_pool(
            pool, (pattern, verbalizer), verbalizer.space, gw
        )
        for before, after in zip(pool, annotated):
            pred, vec = zero_shot_classify(before.example, pattern, verbalizer, gw)
            assert after.zero_shot_prediction == pred
            assert after.zero_shot_scores == vec

    def test_resumes_from_cache_without_backend_calls(self, tmp_path):
        class CountingBackend(MockBackend):
            calls = 0

            def score_completions(self, prompt, candidates):
                CountingBackend.calls += 1
                return super().score_completions(prompt, candidates)

        space = LabelSpace.from_ids(["alpha", "beta"])
        pool = (make_demo("p0", "alpha"), make_demo("p1", "beta"))
        first = selection.annotate_pool(
            pool, "Defn.", space, Gateway(CountingBackend(), cache_dir=tmp_path)
        )
        warm = CountingBackend.calls
        assert warm > 0
        resumed = selection.annotate_pool(
            pool, "Defn.", space, Gateway(CountingBackend(), cache_dir=tmp_path)
        )
        assert CountingBackend.calls == warm
        assert resumed == first


CHAIN = ("gold_mis_pred", "gold_mis", "gold", "retr")


def _predicate(stage, demo, ambig):
    if stage == "retr":
        return True
    if stage == "gold":
        return demo.gold_label in ambig
    mis = demo.gold_label in ambig and demo.zero_shot_prediction != demo.gold_label
    if stage == "gold_mis":
        return mis
    return mis and demo.zero_shot_prediction in ambig


def cascade_oracle(strategy, n, retrieved, ambig):
    """Uncapped reference: per stage, filter the whole rank-ordered pool by
    the stage predicate and take survivors into the remaining slots."""
    selected = []
    stages = []
    for stage in CHAIN[CHAIN.index(strategy):]:
        if len(selected) == n:
            break
        matches = [
            d
            for d, _ in retrieved.entries
            if d not in selected and _predicate(stage, d, ambig)
        ]
        take = matches[: n - len(selected)]
        selected.extend(take)
        stages.append((stage, len(take)))
    return selected, stages


class TestSelectDemos:
    def test_retr_takes_rank_prefix(self):
        retrieved = make_retrieved(
            [("d1", "C", None), ("d2", "A", None), ("d3", "B", None),
             ("d4", "C", None), ("d5", "B", None)]
        )
        cfg = selection.SelectionConfig(n=2, strategy="retr")
        demos, report = selection.scan_demos(cfg, retrieved, AMBIG_AB)
        assert [d.example.id for d in demos] == ["d1", "d2"]
        assert report.stage_filled == (("retr", 2),)
        assert report.scanned == 2
        assert report.as_dict() == {
            "test_id": "t0",
            "strategy_requested": "retr",
            "stage_filled": [{"stage": "retr", "count": 2}],
            "scanned": 2,
        }

    def test_gold_mis_with_fallback_refill(self):
        # golds [C,A,B,C,B], predictions [A,A,C,B,B]: only d3 is an
        # ambiguous-gold misclassification; gold refills the second slot
        retrieved = make_retrieved(
            [("d1", "C", "A"), ("d2", "A", "A"), ("d3", "B", "C"),
             ("d4", "C", "B"), ("d5", "B", "B")]
        )
        cfg = selection.SelectionConfig(n=2, strategy="gold_mis")
        demos, report = selection.scan_demos(cfg, retrieved, AMBIG_AB)
        assert [d.example.id for d in demos] == ["d3", "d2"]
        assert report.stage_filled == (("gold_mis", 1), ("gold", 1))
        assert report.strategy_requested == "gold_mis"
        assert report.scanned == 5

        expected, expected_stages = cascade_oracle("gold_mis", 2, retrieved, AMBIG_AB)
        assert demos == expected
        assert list(report.stage_filled) == expected_stages

    def test_all_correct_pool_ends_at_gold(self):
        retrieved = make_retrieved(
            [("d1", "A", "A"), ("d2", "B", "B"), ("d3", "A", "A"), ("d4", "C", "C")]
        )
        cfg = selection.SelectionConfig(n=2, strategy="gold_mis_pred")
        demos, report = selection.scan_demos(cfg, retrieved, AMBIG_AB)
        assert [d.example.id for d in demos] == ["d1", "d2"]
        assert report.stage_filled == (
            ("gold_mis_pred", 0),
            ("gold_mis", 0),
            ("gold", 2),
        )

    def test_gold_scan_cap_binds(self):
        retrieved = make_retrieved([("d1", "C", None), ("d2", "A", None)])
        cfg = selection.SelectionConfig(n=1, strategy="gold", search_cap=1)
        demos, report = selection.scan_demos(cfg, retrieved, AMBIG_AB)
        # d2 would satisfy gold but sits beyond the scan cap
        assert [d.example.id for d in demos] == ["d1"]
        assert report.stage_filled == (("gold", 0), ("retr", 1))

    def test_mis_cap_counts_only_misclassified_entries(self):
        # two correct entries precede the only qualifying misclassification;
        # they do not consume the cap, so d3 is still eligible at cap=1
        retrieved = make_retrieved(
            [("c1", "A", "A"), ("c2", "B", "B"), ("d3", "A", "B")]
        )
        cfg = selection.SelectionConfig(n=1, strategy="gold_mis", search_cap=1)
        demos, report = selection.scan_demos(cfg, retrieved, AMBIG_AB)
        assert [d.example.id for d in demos] == ["d3"]
        assert report.stage_filled == (("gold_mis", 1),)
        assert report.scanned == 3

    def test_mis_cap_excludes_later_misclassifications(self):
        rows = [("d1", "C", "A"), ("d2", "D", "A"), ("d3", "A", "B")]
        capped = selection.SelectionConfig(n=1, strategy="gold_mis", search_cap=2)
        demos, report = selection.scan_demos(capped, make_retrieved(rows), AMBIG_AB)
        # d3 is the third misclassified entry, beyond cap 2, so the chain
        # falls through (gold is also capped at 2 entries) down to retr
        assert [d.example.id for d in demos] == ["d1"]
        assert report.stage_filled == (("gold_mis", 0), ("gold", 0), ("retr", 1))

        uncapped = selection.SelectionConfig(n=1, strategy="gold_mis", search_cap=250)
        demos, report = selection.scan_demos(uncapped, make_retrieved(rows), AMBIG_AB)
        assert [d.example.id for d in demos] == ["d3"]
        assert report.stage_filled == (("gold_mis", 1),)

    def test_shortfall_raises_with_count(self):
        retrieved = make_retrieved([("d1", "A", "B"), ("d2", "B", "A")])
        cfg = selection.SelectionConfig(n=3, strategy="gold_mis")
        with pytest.raises(selection.SelectionError, match="found 2"):
            selection.scan_demos(cfg, retrieved, AMBIG_AB)

    def test_n_zero_selects_nothing(self):
        retrieved = make_retrieved([("d1", "A", None)])
        cfg = selection.SelectionConfig(n=0, strategy="retr")
        demos, report = selection.scan_demos(cfg, retrieved, AMBIG_AB)
        assert demos == []
        assert report.stage_filled == ()

    def test_mis_strategy_requires_annotation(self):
        retrieved = make_retrieved([("d1", "A", None)])
        cfg = selection.SelectionConfig(n=1, strategy="gold_mis")
        with pytest.raises(ValueError, match="annotat"):
            selection.scan_demos(cfg, retrieved, AMBIG_AB)

    @pytest.mark.parametrize("strategy", ["static_n", "freq"])
    def test_non_scan_strategies_rejected(self, strategy):
        retrieved = make_retrieved([("d1", "A", "A")])
        cfg = selection.SelectionConfig(n=1, strategy=strategy)
        with pytest.raises(ValueError, match="scan"):
            selection.scan_demos(cfg, retrieved, AMBIG_AB)

    @settings(max_examples=60)
    @given(
        rows=st.lists(
            st.tuples(st.sampled_from("ABCD"), st.sampled_from("ABCD")),
            min_size=1,
            max_size=50,
        ),
        n=st.integers(min_value=0, max_value=6),
        strategy=st.sampled_from(["retr", "gold", "gold_mis", "gold_mis_pred"]),
    )
    def test_matches_brute_force_when_caps_idle(self, rows, n, strategy):
        n = min(n, len(rows))
        retrieved = make_retrieved(
            [(f"d{i:02d}", gold, pred) for i, (gold, pred) in enumerate(rows)]
        )
        cfg = selection.SelectionConfig(n=n, strategy=strategy, search_cap=1000)
        demos, report = selection.scan_demos(cfg, retrieved, AMBIG_AB)
        expected, expected_stages = cascade_oracle(strategy, n, retrieved, AMBIG_AB)
        assert demos == expected
        assert list(report.stage_filled) == expected_stages

    def test_final_order_applies_configured_ordering(self):
        rows = [("d1", "C", None), ("d2", "A", None), ("d3", "B", None),
                ("d4", "A", None), ("d5", "B", None)]
        retrieved = make_retrieved(rows)
        cfg = selection.SelectionConfig(n=4, strategy="retr", seed=13)
        demos, _ = selection.select_demos(cfg, retrieved, AMBIG_AB)
        scan, _ = selection.scan_demos(cfg, retrieved, AMBIG_AB)
        assert demos == seeded_shuffle(scan, 13)

    def test_entropy_ordering_from_config(self):
        uniform = ScoreVector(scores=(0.0, 0.0, 0.0))
        peaked = ScoreVector(scores=(8.0, 0.0, 0.0))
        entries = (
            (make_demo("d1", "A", rank=1, pred="A", scores=uniform), 2.0),
            (make_demo("d2", "B", rank=2, pred="B", scores=peaked), 1.0),
        )
        retrieved = selection.RetrievedList(test_id="t0", entries=entries)
        cfg = selection.SelectionConfig(
            n=2, strategy="retr", ordering="entropy_ascending"
        )
        demos, _ = selection.select_demos(cfg, retrieved, AMBIG_AB)
        assert [d.example.id for d in demos] == ["d2", "d1"]


class TestStaticN:
    def test_one_demo_per_label_in_space_order(self):
        pool = [
            make_demo("p0", "B"), make_demo("p1", "A"), make_demo("p2", "D"),
            make_demo("p3", "C"), make_demo("p4", "A"), make_demo("p5", "B"),
        ]
        demos = selection.select_static_n(pool, SPACE, seed=5)
        assert [d.gold_label for d in demos] == ["A", "B", "C", "D"]
        for demo in demos:
            assert demo in pool
        assert selection.select_static_n(pool, SPACE, seed=5) == demos

    def test_different_seeds_can_differ(self):
        pool = [make_demo(f"p{i}", "A") for i in range(20)] + [make_demo("q", "B")]
        space = LabelSpace.from_ids(["A", "B"])
        picks = {
            selection.select_static_n(pool, space, seed=s)[0].example.id
            for s in range(8)
        }
        assert len(picks) > 1

    def test_missing_label_named_in_error(self):
        pool = [make_demo("p0", "A"), make_demo("p1", "B")]
        with pytest.raises(ValueError, match="'C'"):
            selection.select_static_n(pool, LabelSpace.from_ids(["A", "B", "C"]), seed=0)


def test_freq_baseline():
    assert selection.freq_baseline({"A": 10, "B": 3}) == "A"
    assert selection.freq_baseline({"A": 5, "B": 5}) == "A"
    assert selection.freq_baseline({"B": 5, "A": 5}) == "B"
    assert selection.freq_baseline({"Z": 1}) == "Z"
    with pytest.raises(ValueError):
        selection.freq_baseline({})


class TestOrderDemos:
    def test_entropy_ascending(self):
        uniform = ScoreVector(scores=(0.0, 0.0, 0.0))
        peaked = ScoreVector(scores=(8.0, 0.0, 0.0))
        d1 = make_demo("d1", "A", pred="A", scores=uniform)
        d2 = make_demo("d2", "B", pred="B", scores=peaked)
        out = selection.order_demos([d1, d2], "entropy_ascending", seed=0)
        assert [d.example.id for d in out] == ["d2", "d1"]

    def test_equal_entropy_keeps_input_order(self):
        scores = ScoreVector(scores=(1.0, 2.0))
        demos = [make_demo(f"d{i}", "A", pred="A", scores=scores) for i in range(4)]
        out = selection.order_demos(demos, "entropy_ascending", seed=9)
        assert out == demos

    def test_entropy_requires_scores(self):
        with pytest.raises(ValueError, match="scores"):
            selection.order_demos([make_demo("d1", "A")], "entropy_ascending", seed=0)

    def test_seeded_shuffle_reproducible(self):
        demos = [make_demo(f"d{i}", "A") for i in range(6)]
        once = selection.order_demos(demos, "seeded_shuffle", seed=3)
        assert once == selection.order_demos(demos, "seeded_shuffle", seed=3)
        assert once == seeded_shuffle(demos, 3)
        assert sorted(d.example.id for d in once) == [f"d{i}" for i in range(6)]

    def test_unknown_ordering(self):
        with pytest.raises(ValueError):
            selection.order_demos([], "alphabetical", seed=0)


def test_exclude_exact_matches_logs_and_filters(caplog):
    dup = make_demo("d2", "A")
    dup = dataclasses.replace(dup, example=TextExample(id="d2", text="same text"))
    entries = (
        (make_demo("d1", "A"), 3.0),
        (dup, 2.0),
        (make_demo("d3", "B"), 1.0),
    )
    retrieved = selection.RetrievedList(test_id="t0", entries=entries)
    with caplog.at_level(logging.INFO, logger="promptlab.selection"):
        out = selection.exclude_exact_matches(retrieved, "same text")
    assert [d.example.id for d, _ in out.entries] == ["d1", "d3"]
    assert out.test_id == "t0"
    assert any("d2" in message for message in caplog.messages)

    untouched = selection.exclude_exact_matches(retrieved, "no such text")
    assert untouched.entries == entries
