#!/usr/bin/env python3
"""End-to-end CLI demo: synth -> build-graph -> train -> eval -> export-centers.

Usage: python scripts/run_pipeline.py [workdir] [--seed 0]
Writes every artifact into the workdir and prints the metrics report.
"""

import argparse
import json
import sys
from pathlib import Path

from spmll.cli import run


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("workdir", nargs="?", default="pipeline_out")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    d = Path(args.workdir)
    d.mkdir(parents=True, exist_ok=True)

    conf = d / "run.conf"
    conf.write_text(
        "epochs=70\nbatch=64\nhidden=128\nembed_dim=64\nlr=2e-3\ngamma_lr=0.97\n"
        "loss=bce\ngcn_layers=2\nadv.method=pgd\nadv.epsilon=0.005\n"
        "adv.ball_radius=0.02\nadv.steps=5\n"
    )

    steps = [
        ["synth", "--out", str(d), "--l", "10", "--groups", "6,2,2", "--samples", "50",
         "--dim", "16", "--separation", "6.0", "--overlap", "2.5", "--noise", "0.75",
         "--seed", str(args.seed)],
        ["build-graph", "--classes", str(d / "classes.jsonl"), "--k", "2", "--s", "0.5",
         "--out", str(d / "graph.json")],
        ["train", "--train", str(d / "train.jsonl"), "--graph", str(d / "graph.json"),
         "--config", str(conf), "--seed", str(args.seed), "--out", str(d / "model.json")],
        ["eval", "--ckpt", str(d / "model.json"), "--test", str(d / "test.jsonl"),
         "--metrics", str(d / "metrics.json")],
        ["export-centers", "--ckpt", str(d / "model.json"), "--graph", str(d / "graph.json"),
         "--out", str(d / "centers.csv")],
        ["stats", "--data", str(d / "test.jsonl"), "--out", str(d / "stats.json")],
    ]
    for argv in steps:
        print(f"$ spmll {' '.join(argv)}")
        code = run(argv)
        if code != 0:
            print(f"step failed with exit code {code}", file=sys.stderr)
            return code

    report = json.loads((d / "metrics.json").read_text())
    print(f"\ntop1={report['top1']:.4f} top5={report['top5']:.4f} map={report['map']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
