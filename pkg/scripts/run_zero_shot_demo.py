"""Zero-shot classification demo on a synthetic topic dataset.

Generates a small labeled JSONL dataset, runs the zero-shot subcommand
with the mock backend across three seeds, and prints the summary.
"""

import argparse
import json
import sys
from pathlib import Path

from promptlab.cli import main as cli_main

LABELS = ("World", "Sports", "Business", "Sci/Tech")


def build_dataset(path: Path, n: int) -> None:
    rows = [
        {
            "id": f"demo-{i:03d}",
            "text": f"story {i} about {LABELS[i % 4].lower()} and topic{i % 9}",
            "label": LABELS[i % 4],
        }
        for i in range(n)
    ]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/zero_shot_demo", help="output directory")
    parser.add_argument("--examples", type=int, default=40)
    parser.add_argument("--pattern", default="agnews/prompt-1")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = out / "test.jsonl"
    build_dataset(dataset, args.examples)
    config = out / "config.json"
    config.write_text(
        json.dumps(
            {
                "datasets": {"test": str(dataset)},
                "backend": "mock",
                "pattern": args.pattern,
                "verbalizers": "agnews",
                "seeds": [1, 2, 3],
                "out_dir": str(out / "reports"),
                "cache_dir": str(out / "cache"),
            },
            indent=2,
        ),
        encoding="utf-8",
    )

    code = cli_main(["zero-shot", "--config", str(config), "--verify"])
    if code != 0:
        return code
    summary = json.loads((out / "reports" / "summary.json").read_text())
    print(f"reports under {out / 'reports'}")
    for name, stats in summary["metrics"].items():
        print(f"  {name}: mean={stats['mean']:.4f} std={stats['std']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
