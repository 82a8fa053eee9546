#!/usr/bin/env python3
"""Run a config under several strategies and seeds; write one CSV row per run."""

import argparse
import csv
import sys

from simdis import experiment
from simdis.losses import Strategy


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", required=True)
    ap.add_argument("--strategies", default="ALL,ANY,MulSupCon,SimDis-inside,SimDis-outside,SimDis-temperature")
    ap.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seeds")
    ap.add_argument("--out", help="CSV path (default stdout)")
    args = ap.parse_args()

    cfg = experiment.load_config(args.config)
    strategies = [Strategy.parse(s.strip()) for s in args.strategies.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    results = experiment.seed_sweep(cfg, strategies, seeds)

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = None
    for name, runs in results.items():
        for seed, r in zip(seeds, runs):
            row = {"strategy": name, "seed": seed, "final_loss": r.trace.contrastive_loss[-1]}
            row.update({k: v for k, v in r.metrics.items() if not isinstance(v, list)})
            if writer is None:
                writer = csv.DictWriter(fh, fieldnames=list(row))
                writer.writeheader()
            writer.writerow(row)
    if fh is not sys.stdout:
        fh.close()


if __name__ == "__main__":
    main()
