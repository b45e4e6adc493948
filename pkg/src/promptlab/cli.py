"""Command line driver: one JSON config, flag overrides, deterministic outputs.

Every subcommand reads a single JSON config file, applies command line
overrides, and writes its report bundle under the output directory. Given
the same config, seed, and cache state, a rerun produces byte-identical
files. Exit codes: 0 success, 2 configuration error, 3 backend error,
4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import statistics
import sys
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import __version__
from .core import Demonstration, LabelSpace, parse_dataset, seeded_shuffle
from .distractor import (
    FrequencyTable,
    TrainConfig,
    extract_features,
    load_model,
    save_model,
    score_candidates,
    train_mlp,
    tune_threshold,
    write_ranked_csv,
)
from .gateway import (
    BackendError,
    EmbedRequest,
    Gateway,
    HttpBackend,
    MockBackend,
    load_word_vectors,
)
from .labeldesc import build_labeldesc_dataset
from .metrics import (
    accuracy,
    demo_gold_match_rate,
    entropy_base2,
    gold_in_ambig_rate,
    label_normalized_histogram,
    multiclass_report,
    paired_bootstrap,
    prf1_from_predictions,
    softmax,
)
from .prompting import (
    PromptBundle,
    classify_with_prompt,
    load_icl_label_space,
    load_patterns,
    load_task_definition,
    verbalizer_for,
    zero_shot_classify,
)
from .selection import (
    SCAN_CHAIN,
    SelectionConfig,
    SelectionError,
    compute_ambig_set,
    annotate_pool,
    exclude_exact_matches,
    freq_baseline,
    order_demos,
    rank_by_inner_product,
    scan_demos,
    select_static_n,
)

CACHE_ENV_VAR = "PROMPTLAB_CACHE_DIR"
PREDICTIONS_HEADER = ("id", "gold", "prediction", "entropy_bits")
BASE_FEATURE_COLUMNS = (
    "len_diff",
    "cos_head",
    "cos_infl",
    "freq_head",
    "freq_infl",
    "rankdiff_head",
    "rankdiff_infl",
)
CTX_COLUMNS = tuple(
    f"{prefix}_{stat}"
    for prefix in ("ctx_lp", "ctx_lrank")
    for stat in ("mean", "min", "max")
)
CTXC_COLUMNS = tuple(c.replace("ctx_", "ctxc_", 1) for c in CTX_COLUMNS)
CASCADE_STRATEGIES = ("retr", "gold", "gold_mis", "gold_mis_pred")
CONFIG_KEYS = frozenset(
    {
        "task",
        "datasets",
        "backend",
        "pattern",
        "verbalizers",
        "selection",
        "seeds",
        "out_dir",
        "cache_dir",
        "dataset",
        "metric",
        "positive_label",
        "resamples",
        "histogram",
        "features",
        "train",
    }
)
SELECTION_KEYS = frozenset({"n", "strategy", "search_cap", "ordering"})


class ConfigError(ValueError):
    """The run configuration is missing, malformed, or inconsistent."""


class VerificationError(RuntimeError):
    """An invariant failed on the run's actual data."""


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration for one subcommand invocation."""

    command: str
    task: str | None
    datasets: dict[str, Path]
    backend: str
    pattern_id: str | None
    verbalizer_set: str | None
    selection: dict | None
    seeds: tuple[int, ...]
    out_dir: Path
    cache_dir: Path
    verify: bool
    extras: dict
    digest: str


def _canonical_digest(merged: dict) -> str:
    # Output and cache locations must not change what the run computes.
    canonical = {k: v for k, v in merged.items() if k not in ("out_dir", "cache_dir")}
    payload = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_run_config(args) -> RunConfig:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err.msg}") from err
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")

    merged = dict(raw)
    if args.backend:
        merged["backend"] = args.backend
    if args.seed is not None:
        merged["seeds"] = [args.seed]
    if args.out:
        merged["out_dir"] = args.out
    if args.cache_dir:
        merged["cache_dir"] = args.cache_dir

    backend = merged.get("backend", "mock")
    if backend != "mock" and not backend.startswith(("http://", "https://")):
        raise ConfigError(f"backend must be 'mock' or an http(s) URL, got {backend!r}")

    seeds = merged.get("seeds")
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds must be a non-empty list of integers")
    if not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("seeds must be a non-empty list of integers")

    datasets = {}
    for role, value in dict(merged.get("datasets", {})).items():
        dataset_path = Path(value)
        if not dataset_path.is_file():
            raise ConfigError(f"dataset {role!r} not found: {dataset_path}")
        datasets[role] = dataset_path

    out_dir = merged.get("out_dir")
    if not out_dir:
        raise ConfigError("out_dir is required")

    cache_dir = merged.get("cache_dir") or os.environ.get(CACHE_ENV_VAR)
    if not cache_dir:
        cache_dir = Path.home() / ".cache" / "promptlab"

    selection = merged.get("selection")
    if selection is not None:
        if not isinstance(selection, dict):
            raise ConfigError("selection must be an object")
        bad = sorted(set(selection) - SELECTION_KEYS)
        if bad:
            raise ConfigError(f"unknown selection keys: {bad}")

    extras = {
        k: merged[k]
        for k in ("dataset", "metric", "positive_label", "resamples", "histogram", "features", "train")
        if k in merged
    }
    return RunConfig(
        command=args.command,
        task=merged.get("task"),
        datasets=datasets,
        backend=backend,
        pattern_id=merged.get("pattern"),
        verbalizer_set=merged.get("verbalizers"),
        selection=selection,
        seeds=tuple(seeds),
        out_dir=Path(out_dir),
        cache_dir=Path(cache_dir),
        verify=bool(args.verify),
        extras=extras,
        digest=_canonical_digest(merged),
    )


def make_gateway(cfg: RunConfig) -> Gateway:
    backend = MockBackend() if cfg.backend == "mock" else HttpBackend(cfg.backend)
    return Gateway(backend, cache_dir=cfg.cache_dir)


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_csv(path: Path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        csv.writer(handle, lineterminator="\n").writerows(rows)


def write_manifest(cfg: RunConfig, backend_id: str) -> None:
    manifest = {
        "backend": backend_id,
        "command": cfg.command,
        "config_digest": cfg.digest,
        "datasets": {
            role: hashlib.sha256(path.read_bytes()).hexdigest()
            for role, path in cfg.datasets.items()
        },
        "toolkit_version": __version__,
    }
    write_json(cfg.out_dir / "manifest.json", manifest)


def _require_golds(examples, role: str) -> list[str]:
    golds = []
    for ex in examples:
        if ex.gold_label is None:
            raise ConfigError(f"{role} example {ex.id!r} has no gold label")
        golds.append(ex.gold_label)
    return golds


def _per_label_dict(report) -> dict:
    return {label: dataclasses.asdict(prf1) for label, prf1 in report.per_label}


def _summarize(cfg: RunConfig, per_seed: dict[int, dict]) -> None:
    names = [
        name
        for name, value in per_seed[cfg.seeds[0]].items()
        if isinstance(value, (int, float)) and not isinstance(value, bool)
    ]
    metrics = {}
    for name in names:
        values = [per_seed[s][name] for s in cfg.seeds]
        if any(v is None for v in values):
            continue
        metrics[name] = {"mean": statistics.fmean(values), "std": statistics.pstdev(values)}
    write_json(cfg.out_dir / "summary.json", {"seeds": list(cfg.seeds), "metrics": metrics})


def _classification_metrics(preds, golds, space: LabelSpace, entropies) -> dict:
    report = multiclass_report(preds, golds, space)
    return {
        "accuracy": report.accuracy,
        "macro_f1": report.macro_f1,
        "per_label": _per_label_dict(report),
        "mean_entropy_bits": statistics.fmean(entropies),
    }


def cmd_zero_shot(cfg: RunConfig) -> None:
    if cfg.verbalizer_set is None:
        raise ConfigError("zero-shot requires a verbalizers key")
    try:
        verbalizer = verbalizer_for(cfg.verbalizer_set)
    except KeyError:
        raise ConfigError(f"unknown verbalizer set {cfg.verbalizer_set!r}") from None
    patterns = {p.id: p for p in load_patterns()}
    if cfg.pattern_id not in patterns:
        raise ConfigError(f"unknown pattern id {cfg.pattern_id!r}")
    pattern = patterns[cfg.pattern_id]
    if "test" not in cfg.datasets:
        raise ConfigError("zero-shot requires a 'test' dataset")
    examples = parse_dataset(cfg.datasets["test"], "classification", verbalizer.space)
    golds = _require_golds(examples, "test")
    gateway = make_gateway(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)

    per_seed = {}
    for seed in cfg.seeds:
        seed_dir = cfg.out_dir / f"seed_{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        rows = [PREDICTIONS_HEADER]
        preds, entropies = [], []
        for ex in examples:
            pred, vector = zero_shot_classify(ex, pattern, verbalizer, gateway)
            entropy = entropy_base2(softmax(vector))
            if cfg.verify:
                _verify_prediction(ex.id, pred, vector, verbalizer.space)
            preds.append(pred)
            entropies.append(entropy)
            rows.append((ex.id, ex.gold_label, pred, entropy))
        write_csv(seed_dir / "predictions.csv", rows)
        metrics = _classification_metrics(preds, golds, verbalizer.space, entropies)
        write_json(seed_dir / "metrics.json", metrics)
        per_seed[seed] = metrics
    _summarize(cfg, per_seed)
    write_manifest(cfg, gateway.backend.backend_id)


def _verify_prediction(test_id: str, pred: str, vector, space: LabelSpace) -> None:
    if len(vector.scores) != len(space.ids):
        raise VerificationError(
            f"{test_id}: score vector has {len(vector.scores)} entries for "
            f"{len(space.ids)} labels"
        )
    if pred != space.ids[vector.argmax()]:
        raise VerificationError(f"{test_id}: prediction does not match argmax label")


def _selection_config(cfg: RunConfig, seed: int) -> SelectionConfig:
    if cfg.selection is None:
        raise ConfigError("icl requires a selection key")
    return SelectionConfig(seed=seed, **cfg.selection)


def _expand_stages(stage_filled) -> list[str]:
    stages = []
    for stage, count in stage_filled:
        stages.extend([stage] * count)
    return stages


def _verify_icl_records(records, space: LabelSpace) -> None:
    binary = len(space.ids) == 2
    for rec in records:
        if rec["from_prompt"]:
            _verify_prediction(rec["test_id"], rec["prediction"], rec["vector"], space)
        ambig = rec["ambig"]
        if binary and rec["gold"] not in ambig:
            raise VerificationError(
                f"{rec['test_id']}: binary label space but gold outside the ambiguous set"
            )
        last_rank = {}
        for demo, stage in zip(rec["demos"], rec["stages"]):
            if stage in ("gold", "gold_mis", "gold_mis_pred") and demo.gold_label not in ambig:
                raise VerificationError(
                    f"{rec['test_id']}: demo {demo.example.id} in stage {stage} "
                    "has gold outside the ambiguous set"
                )
            if stage in ("gold_mis", "gold_mis_pred"):
                if demo.zero_shot_prediction == demo.gold_label:
                    raise VerificationError(
                        f"{rec['test_id']}: demo {demo.example.id} in stage {stage} "
                        "is not misclassified"
                    )
            if stage == "gold_mis_pred" and demo.zero_shot_prediction not in ambig:
                raise VerificationError(
                    f"{rec['test_id']}: demo {demo.example.id} prediction outside "
                    "the ambiguous set"
                )
            if stage in SCAN_CHAIN:
                if stage in last_rank and demo.retrieval_rank <= last_rank[stage]:
                    raise VerificationError(
                        f"{rec['test_id']}: retrieval ranks not increasing in stage {stage}"
                    )
                last_rank[stage] = demo.retrieval_rank


def cmd_icl(cfg: RunConfig) -> None:
    if cfg.task is None:
        raise ConfigError("icl requires a task key")
    try:
        space = load_icl_label_space(cfg.task)
        definition = load_task_definition(cfg.task)
    except KeyError:
        raise ConfigError(f"unknown task {cfg.task!r}") from None
    for role in ("test", "pool"):
        if role not in cfg.datasets:
            raise ConfigError(f"icl requires a {role!r} dataset")
    tests = parse_dataset(cfg.datasets["test"], "classification", space)
    pool_examples = parse_dataset(cfg.datasets["pool"], "classification", space)
    golds = _require_golds(tests, "test")
    _require_golds(pool_examples, "pool")
    base = _selection_config(cfg, cfg.seeds[0])

    gateway = make_gateway(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    pool = tuple(
        Demonstration(example=ex, gold_label=ex.gold_label, retrieval_rank=0)
        for ex in pool_examples
    )
    need_annotation = (
        base.strategy in ("gold_mis", "gold_mis_pred") or base.ordering == "entropy_ascending"
    )
    if need_annotation:
        pool = annotate_pool(pool, definition, space, gateway)
    if base.strategy in CASCADE_STRATEGIES:
        pool_vecs, _ = gateway.embed_texts(
            EmbedRequest(texts=tuple(d.example.text for d in pool))
        )
        test_vecs, _ = gateway.embed_texts(EmbedRequest(texts=tuple(e.text for e in tests)))
    else:
        pool_vecs, test_vecs = None, None
    freq_label = (
        freq_baseline(Counter(d.gold_label for d in pool)) if base.strategy == "freq" else None
    )

    zero_shot = {}
    for ex in tests:
        bundle = PromptBundle(task_definition=definition, demonstrations=(), test_text=ex.text)
        _, vector = classify_with_prompt(bundle, space, gateway)
        zero_shot[ex.id] = vector
    ambig_sets = {ex.id: compute_ambig_set(zero_shot[ex.id], space) for ex in tests}

    per_seed = {}
    for seed in cfg.seeds:
        sel = _selection_config(cfg, seed)
        seed_dir = cfg.out_dir / f"seed_{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        records = []
        for index, ex in enumerate(tests):
            ambig = ambig_sets[ex.id]
            if sel.strategy == "freq":
                demos, stages, ordered = [], [], []
                report_row = {
                    "test_id": ex.id,
                    "strategy_requested": "freq",
                    "stage_filled": [{"stage": "freq", "count": 0}],
                    "scanned": 0,
                }
                prediction = freq_label
                vector = zero_shot[ex.id]
            else:
                if sel.strategy == "static_n":
                    demos = list(select_static_n(pool, space, seed))
                    stages = ["static_n"] * len(demos)
                    report_row = {
                        "test_id": ex.id,
                        "strategy_requested": "static_n",
                        "stage_filled": [{"stage": "static_n", "count": len(demos)}],
                        "scanned": 0,
                    }
                else:
                    ranked = rank_by_inner_product(
                        ex.id, test_vecs[index], list(zip(pool, pool_vecs))
                    )
                    ranked = exclude_exact_matches(ranked, ex.text)
                    try:
                        demos, report = scan_demos(sel, ranked, ambig)
                    except SelectionError as err:
                        raise ConfigError(f"selection failed for {ex.id}: {err}") from err
                    stages = _expand_stages(report.stage_filled)
                    report_row = report.as_dict()
                ordered = order_demos(demos, sel.ordering, seed)
                bundle = PromptBundle(
                    task_definition=definition,
                    demonstrations=tuple(ordered),
                    test_text=ex.text,
                )
                prediction, vector = classify_with_prompt(bundle, space, gateway)
            report_row.update(
                {
                    "demo_ids": [d.example.id for d in demos],
                    "demo_stages": stages,
                    "prompt_order": [d.example.id for d in ordered],
                    "ambig": [ambig.first, ambig.second],
                    "gold_in_ambig": ex.gold_label in ambig,
                }
            )
            records.append(
                {
                    "test_id": ex.id,
                    "gold": ex.gold_label,
                    "prediction": prediction,
                    "vector": vector,
                    "entropy": entropy_base2(softmax(vector)),
                    "demos": demos,
                    "stages": stages,
                    "ambig": ambig,
                    "from_prompt": sel.strategy != "freq",
                    "report_row": report_row,
                }
            )
        if cfg.verify:
            _verify_icl_records(records, space)
        write_csv(
            seed_dir / "predictions.csv",
            [PREDICTIONS_HEADER]
            + [(r["test_id"], r["gold"], r["prediction"], r["entropy"]) for r in records],
        )
        (seed_dir / "fallback_reports.jsonl").write_text(
            "".join(json.dumps(r["report_row"], sort_keys=True) + "\n" for r in records),
            encoding="utf-8",
        )
        preds = [r["prediction"] for r in records]
        entropies = [r["entropy"] for r in records]
        metrics = _classification_metrics(preds, golds, space, entropies)
        metrics["gold_in_ambig_rate"] = gold_in_ambig_rate(
            [r["ambig"] for r in records], golds
        )
        if sel.strategy == "freq":
            metrics["demo_gold_match_rate"] = None
        else:
            metrics["demo_gold_match_rate"] = demo_gold_match_rate(
                [[d.gold_label for d in r["demos"]] for r in records], golds
            )
        write_json(seed_dir / "metrics.json", metrics)
        per_seed[seed] = metrics
    _summarize(cfg, per_seed)
    write_manifest(cfg, gateway.backend.backend_id)


def cmd_labeldesc_build(cfg: RunConfig) -> None:
    name = cfg.extras.get("dataset")
    if not name:
        raise ConfigError("labeldesc-build requires a dataset key")
    dataset = build_labeldesc_dataset(name)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for example, provenance in zip(dataset.examples, dataset.provenance):
        record = {
            "id": example.id,
            "text": example.text,
            "label": example.gold_label,
            "provenance": provenance,
        }
        lines.append(json.dumps(record, sort_keys=True) + "\n")
    (cfg.out_dir / "labeldesc.jsonl").write_text("".join(lines), encoding="utf-8")
    labels = {ex.gold_label for ex in dataset.examples}
    print(f"wrote {len(lines)} examples across {len(labels)} labels")
    write_manifest(cfg, "none")


def _features_options(cfg: RunConfig) -> tuple[bool, bool]:
    options = dict(cfg.extras.get("features", {}))
    contextual = bool(options.pop("contextual", False))
    include_correct = bool(options.pop("include_correct", False))
    if options:
        raise ConfigError(f"unknown features keys: {sorted(options)}")
    return contextual, include_correct


def cmd_distractor_extract(cfg: RunConfig) -> None:
    for role in ("instances", "vectors"):
        if role not in cfg.datasets:
            raise ConfigError(f"distractor-extract requires a {role!r} dataset")
    contextual, include_correct = _features_options(cfg)
    instances = parse_dataset(cfg.datasets["instances"], "cloze")
    table = load_word_vectors(cfg.datasets["vectors"])
    freq = FrequencyTable.from_word_vectors(table)
    gateway = make_gateway(cfg) if contextual else None
    header = ("instance_id",) + BASE_FEATURE_COLUMNS
    if contextual:
        header += CTX_COLUMNS
    if include_correct:
        header += CTXC_COLUMNS
    rows = [header + ("label",)]
    for inst in instances:
        fv = extract_features(
            inst,
            table,
            freq,
            gateway=gateway,
            contextual=contextual,
            include_correct=include_correct,
        )
        rows.append((inst.id,) + fv.as_row() + (inst.label,))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(cfg.out_dir / "features.csv", rows)
    backend_id = gateway.backend.backend_id if gateway is not None else "none"
    write_manifest(cfg, backend_id)


def _read_features(path: Path) -> tuple[list[str], list[list[float]], list[bool]]:
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if not rows or rows[0][:1] != ["instance_id"] or rows[0][-1:] != ["label"]:
        raise ConfigError(f"{path}: expected instance_id ... label columns")
    ids, features, labels = [], [], []
    for row in rows[1:]:
        ids.append(row[0])
        features.append([float(v) for v in row[1:-1]])
        if row[-1] not in ("True", "False"):
            raise ConfigError(f"{path}: label must be True or False, got {row[-1]!r}")
        labels.append(row[-1] == "True")
    return ids, features, labels


def cmd_distractor_train(cfg: RunConfig) -> None:
    if "train" not in cfg.datasets:
        raise ConfigError("distractor-train requires a 'train' dataset")
    _, features, labels = _read_features(cfg.datasets["train"])
    dev_features, dev_labels = None, None
    if "dev" in cfg.datasets:
        _, dev_features, dev_labels = _read_features(cfg.datasets["dev"])
    options = dict(cfg.extras.get("train", {}))
    hidden = options.pop("hidden", 50)
    try:
        train_config = TrainConfig(seed=cfg.seeds[0], **options)
    except TypeError as err:
        raise ConfigError(f"bad train options: {err}") from None
    model, trace = train_mlp(
        features,
        labels,
        train_config,
        dev_features=dev_features,
        dev_labels=dev_labels,
        hidden=hidden,
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, cfg.out_dir / "model.bin")
    write_json(
        cfg.out_dir / "trace.json",
        {"best_epoch": trace.best_epoch, "epoch_metrics": list(trace.epoch_metrics)},
    )
    scores = score_candidates(model, dev_features if dev_features is not None else features)
    threshold = tune_threshold(scores, dev_labels if dev_labels is not None else labels)
    write_json(
        cfg.out_dir / "threshold.json",
        {"threshold": threshold, "tune_metric": train_config.tune_metric},
    )
    write_manifest(cfg, "none")


def cmd_distractor_rank(cfg: RunConfig) -> None:
    for role in ("instances", "features", "model"):
        if role not in cfg.datasets:
            raise ConfigError(f"distractor-rank requires a {role!r} dataset")
    instances = parse_dataset(cfg.datasets["instances"], "cloze")
    model = load_model(cfg.datasets["model"])
    ids, features, _ = _read_features(cfg.datasets["features"])
    by_id = dict(zip(ids, features))
    missing = [inst.id for inst in instances if inst.id not in by_id]
    if missing:
        raise ConfigError(f"features file lacks rows for instances: {missing}")
    raw_scores = score_candidates(model, [by_id[inst.id] for inst in instances])
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_ranked_csv(cfg.out_dir / "ranked.csv", instances, raw_scores)
    write_manifest(cfg, "none")


def _load_space(cfg: RunConfig) -> LabelSpace:
    if cfg.verbalizer_set is not None:
        try:
            return verbalizer_for(cfg.verbalizer_set).space
        except KeyError:
            raise ConfigError(f"unknown verbalizer set {cfg.verbalizer_set!r}") from None
    if cfg.task is not None:
        try:
            return load_icl_label_space(cfg.task)
        except KeyError:
            raise ConfigError(f"unknown task {cfg.task!r}") from None
    raise ConfigError("a verbalizers or task key is required to fix the label space")


def _read_predictions(path: Path) -> tuple[list[str], list[str], list[str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        ids, golds, preds = [], [], []
        for row in reader:
            if row.get("id") is None or row.get("gold") is None or row.get("prediction") is None:
                raise ConfigError(f"{path}: need id, gold, and prediction columns")
            ids.append(row["id"])
            golds.append(row["gold"])
            preds.append(row["prediction"])
    if not ids:
        raise ConfigError(f"{path}: no prediction rows")
    return ids, golds, preds


def cmd_analyze(cfg: RunConfig) -> None:
    if "predictions" not in cfg.datasets:
        raise ConfigError("analyze requires a 'predictions' dataset")
    space = _load_space(cfg)
    _, golds, preds = _read_predictions(cfg.datasets["predictions"])
    report = multiclass_report(preds, golds, space)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_json(
        cfg.out_dir / "report.json",
        {
            "accuracy": report.accuracy,
            "macro_f1": report.macro_f1,
            "per_label": _per_label_dict(report),
        },
    )
    confusion_rows = [("",) + tuple(space.ids)]
    for label, row in zip(space.ids, report.confusion):
        confusion_rows.append((label,) + tuple(row))
    write_csv(cfg.out_dir / "confusion.csv", confusion_rows)

    histogram = cfg.extras.get("histogram")
    if histogram is not None:
        _write_histogram(cfg, dict(histogram))
    write_manifest(cfg, "none")


def _write_histogram(cfg: RunConfig, options: dict) -> None:
    if "values" not in cfg.datasets:
        raise ConfigError("histogram requires a 'values' dataset")
    bins = options.pop("bins", 10)
    value_column = options.pop("value_column", "value")
    label_column = options.pop("label_column", "label")
    if options:
        raise ConfigError(f"unknown histogram keys: {sorted(options)}")
    if not isinstance(bins, int) or bins < 1:
        raise ConfigError("histogram bins must be a positive integer")
    values, labels = [], []
    with open(cfg.datasets["values"], newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            if row.get(value_column) is None or row.get(label_column) is None:
                raise ConfigError(
                    f"values file needs {value_column!r} and {label_column!r} columns"
                )
            values.append(float(row[value_column]))
            labels.append(row[label_column])
    if not values:
        raise ConfigError("values file has no rows")
    lo, hi = min(values), max(values)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = [lo + (hi - lo) * i / bins for i in range(bins + 1)]
    heights = label_normalized_histogram(values, labels, edges)
    rows = [("bin_lo", "bin_hi", "label", "height")]
    for label in sorted(heights):
        for i, height in enumerate(heights[label]):
            rows.append((edges[i], edges[i + 1], label, height))
    write_csv(cfg.out_dir / "histogram.csv", rows)


def _bootstrap_metric(cfg: RunConfig):
    name = cfg.extras.get("metric", "accuracy")
    if name == "accuracy":
        return accuracy
    if name == "macro_f1":
        space = _load_space(cfg)
        return lambda golds, preds: multiclass_report(preds, golds, space).macro_f1
    if name == "binary_f1":
        positive = cfg.extras.get("positive_label")
        if positive is None:
            raise ConfigError("binary_f1 requires a positive_label key")
        return lambda golds, preds: prf1_from_predictions(
            [g == positive for g in golds], [p == positive for p in preds]
        ).f1
    raise ConfigError(f"unknown metric {name!r}")


def cmd_bootstrap(cfg: RunConfig) -> None:
    for role in ("predictions_a", "predictions_b"):
        if role not in cfg.datasets:
            raise ConfigError(f"bootstrap requires a {role!r} dataset")
    ids_a, golds_a, preds_a = _read_predictions(cfg.datasets["predictions_a"])
    ids_b, golds_b, preds_b = _read_predictions(cfg.datasets["predictions_b"])
    if ids_a != ids_b or golds_a != golds_b:
        raise ConfigError("prediction files disagree on instance ids or gold labels")
    metric = _bootstrap_metric(cfg)
    resamples = cfg.extras.get("resamples", 1000)
    if not isinstance(resamples, int) or resamples < 1:
        raise ConfigError("resamples must be a positive integer")
    result = paired_bootstrap(
        golds_a, preds_a, preds_b, metric, seed=cfg.seeds[0], resamples=resamples
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_json(cfg.out_dir / "bootstrap.json", dataclasses.asdict(result))
    print(
        f"p = {result.p_value:g} (wins_a={result.wins_a}, wins_b={result.wins_b}, "
        f"ties={result.ties}, resamples={result.resamples})"
    )
    write_manifest(cfg, "none")


COMMANDS = {
    "zero-shot": cmd_zero_shot,
    "icl": cmd_icl,
    "labeldesc-build": cmd_labeldesc_build,
    "distractor-extract": cmd_distractor_extract,
    "distractor-train": cmd_distractor_train,
    "distractor-rank": cmd_distractor_rank,
    "analyze": cmd_analyze,
    "bootstrap": cmd_bootstrap,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptlab",
        description="Run classification experiments from a JSON config.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", required=True, help="path to the JSON run config")
        sub.add_argument("--seed", type=int, help="replace the config's seed list")
        sub.add_argument("--backend", help="override the backend (mock or an http URL)")
        sub.add_argument("--cache-dir", help="override the score cache directory")
        sub.add_argument("--out", help="override the output directory")
        sub.add_argument(
            "--verify",
            action="store_true",
            help="assert module invariants on the run's actual data",
        )
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        COMMANDS[args.command](load_run_config(args))
        return 0
    except BackendError as err:
        print(f"backend error: {err}", file=sys.stderr)
        return 3
    except VerificationError as err:
        print(f"verification failure: {err}", file=sys.stderr)
        return 4
    except (ConfigError, ValueError, KeyError, FileNotFoundError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
