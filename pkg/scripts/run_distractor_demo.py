"""Distractor scoring pipeline demo: extract features, train, rank.

Creates a synthetic cloze corpus and word-vector table, runs the three
distractor subcommands end to end with contextual features from the mock
backend, and prints the top of the ranked output.
"""

import argparse
import csv
import json
import random
import sys
from pathlib import Path

from promptlab.cli import main as cli_main

PAIRS = (
    ("walk", "walked"),
    ("jump", "jumped"),
    ("swim", "swam"),
    ("read", "reads"),
    ("write", "wrote"),
)
VOCAB = (
    "the", "a", "animal", "person", "quickly", "slowly", "near", "river",
    "walk", "walked", "jump", "jumped", "swim", "swam", "read", "reads",
    "write", "wrote", "run", "ran",
)


def build_vectors(path: Path, seed: int) -> None:
    rng = random.Random(seed)
    lines = []
    for token in VOCAB:
        components = " ".join(f"{rng.uniform(-1, 1):.4f}" for _ in range(8))
        lines.append(f"{token} {components}\n")
    path.write_text("".join(lines), encoding="utf-8")


def build_instances(path: Path, n: int, seed: int) -> None:
    rng = random.Random(seed)
    rows = []
    for i in range(n):
        head, infl = PAIRS[i % len(PAIRS)]
        rows.append(
            {
                "id": f"cloze-{i:03d}",
                "context": f"the person ____ near the river landmark{i}",
                "correct": {"headword": "run", "inflected": "ran"},
                "distractor": {"headword": head, "inflected": infl},
                "label": rng.random() < 0.5,
            }
        )
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/distractor_demo", help="output directory")
    parser.add_argument("--instances", type=int, default=30)
    parser.add_argument("--seed", type=int, default=13)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vectors = out / "vectors.txt"
    instances = out / "instances.jsonl"
    build_vectors(vectors, args.seed)
    build_instances(instances, args.instances, args.seed)

    extract_config = out / "extract.json"
    extract_config.write_text(
        json.dumps(
            {
                "datasets": {"instances": str(instances), "vectors": str(vectors)},
                "backend": "mock",
                "features": {"contextual": True, "include_correct": True},
                "seeds": [args.seed],
                "out_dir": str(out / "extract"),
                "cache_dir": str(out / "cache"),
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    code = cli_main(["distractor-extract", "--config", str(extract_config)])
    if code != 0:
        return code

    train_config = out / "train.json"
    train_config.write_text(
        json.dumps(
            {
                "datasets": {"train": str(out / "extract" / "features.csv")},
                "train": {
                    "hidden": 16,
                    "learning_rate": 0.01,
                    "max_epochs": 30,
                    "patience": 5,
                },
                "seeds": [args.seed],
                "out_dir": str(out / "train"),
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    code = cli_main(["distractor-train", "--config", str(train_config)])
    if code != 0:
        return code
    trace = json.loads((out / "train" / "trace.json").read_text())
    print(f"trained {len(trace['epoch_metrics'])} epochs, best epoch {trace['best_epoch']}")

    rank_config = out / "rank.json"
    rank_config.write_text(
        json.dumps(
            {
                "datasets": {
                    "instances": str(instances),
                    "features": str(out / "extract" / "features.csv"),
                    "model": str(out / "train" / "model.bin"),
                },
                "seeds": [args.seed],
                "out_dir": str(out / "rank"),
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    code = cli_main(["distractor-rank", "--config", str(rank_config)])
    if code != 0:
        return code

    with open(out / "rank" / "ranked.csv", newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    print("top ranked distractors:")
    for row in rows[:6]:
        print("  " + "  ".join(row))
    return 0


if __name__ == "__main__":
    sys.exit(main())
