"""Demonstration-selection strategy sweep for in-context classification.

Builds a synthetic sentiment pool and test split, then runs the icl
subcommand once per selection strategy and prints the headline metrics
side by side.
"""

import argparse
import json
import sys
from pathlib import Path

from promptlab.cli import main as cli_main

LABELS = ("Great", "Good", "Okay", "Bad", "Terrible")
STRATEGIES = ("retr", "gold", "gold_mis", "gold_mis_pred", "static_n", "freq")


def build_split(path: Path, prefix: str, n: int) -> None:
    rows = [
        {
            "id": f"{prefix}-{i:03d}",
            "text": f"{prefix} review {i} discussing aspect{i % 11} of product{i % 7}",
            "label": LABELS[i % 5],
        }
        for i in range(n)
    ]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/icl_demo", help="output directory")
    parser.add_argument("--pool", type=int, default=40)
    parser.add_argument("--test", type=int, default=25)
    parser.add_argument("--demos", type=int, default=4)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pool = out / "pool.jsonl"
    test = out / "test.jsonl"
    build_split(pool, "pool", args.pool)
    build_split(test, "test", args.test)

    results = {}
    for strategy in STRATEGIES:
        config = out / f"config_{strategy}.json"
        config.write_text(
            json.dumps(
                {
                    "task": "sst",
                    "datasets": {"test": str(test), "pool": str(pool)},
                    "backend": "mock",
                    "selection": {"n": args.demos, "strategy": strategy},
                    "seeds": [args.seed],
                    "out_dir": str(out / strategy),
                    "cache_dir": str(out / "cache"),
                },
                indent=2,
            ),
            encoding="utf-8",
        )
        code = cli_main(["icl", "--config", str(config), "--verify"])
        if code != 0:
            return code
        metrics = json.loads(
            (out / strategy / f"seed_{args.seed}" / "metrics.json").read_text()
        )
        results[strategy] = metrics

    header = f"{'strategy':<14}{'accuracy':>10}{'macro_f1':>10}{'gold_in_ambig':>15}{'demo_match':>12}"
    print(header)
    for strategy, metrics in results.items():
        match = metrics["demo_gold_match_rate"]
        match_cell = f"{match:11.1f}%" if match is not None else f"{'n/a':>12}"
        print(
            f"{strategy:<14}{metrics['accuracy']:>10.3f}{metrics['macro_f1']:>10.3f}"
            f"{metrics['gold_in_ambig_rate']:>14.1f}%{match_cell}"
        )
    print(f"per-strategy reports under {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
