#!/usr/bin/env python3
"""Run the synthetic ablation suite and print the component/attack tables.

Usage: python scripts/run_ablation.py [--seeds 0,1,2,3,4] [--samples 50]
"""

import argparse
import sys
import time

from spmll.synthbench import VARIANTS, mean_metric, run_suite


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated suite seeds")
    parser.add_argument("--samples", type=int, default=50, help="samples per class per split")
    args = parser.parse_args()
    seeds = tuple(int(v) for v in args.seeds.split(","))

    t0 = time.monotonic()
    results = run_suite(seeds=seeds, samples_per_class=args.samples)
    elapsed = time.monotonic() - t0

    print(f"\nsuite: {len(seeds)} seeds x {len(VARIANTS)} variants "
          f"({args.samples} samples/class) in {elapsed:.1f}s\n")
    header = f"{'variant':10s} {'gcn':>4s} {'adv':>5s} {'top1':>7s} {'top5':>7s} {'map':>7s}"
    print(header)
    print("-" * len(header))
    for name, (gcn_layers, adv) in VARIANTS.items():
        rs = results[name]
        print(
            f"{name:10s} {gcn_layers:4d} {adv:>5s} "
            f"{mean_metric(rs, 'top1'):7.4f} {mean_metric(rs, 'top5'):7.4f} "
            f"{mean_metric(rs, 'map'):7.4f}"
        )

    base = mean_metric(results["baseline"], "map")
    print()
    for name in ("gcn", "pgd", "gcn+fgsm", "gcn+pgd", "gcn4+pgd"):
        delta = (mean_metric(results[name], "map") - base) * 100
        print(f"MAP delta vs baseline, {name:9s}: {delta:+.2f} points")
    return 0


if __name__ == "__main__":
    sys.exit(main())
