#!/usr/bin/env python3
"""Learned vs random illumination patterns on a held-out testset.

Evaluates a saved pattern file against the best of N independent
Uniform(0,1) mask draws on the same seeded test images, and prints the
mean-PSNR gap. Pass --patterns from scripts/learn_patterns.py output.

Usage:
    python3 scripts/compare_learned_random.py \
        --patterns runs/bars_t4/patterns_mask.json --kind bars
"""

import argparse
from pathlib import Path

from cdp_forge.bench import BenchReport, evaluate, random_baseline
from cdp_forge.data import planes, synth_dataset
from cdp_forge.forward_model import load_pattern_file, patterns_from_params
from cdp_forge.solver import SolverConfig


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--patterns", required=True)
    ap.add_argument("--kind", default="bars")
    ap.add_argument("--k", type=int, default=50)
    ap.add_argument("--n-test", type=int, default=100)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--trials", type=int, default=30)
    ap.add_argument("--seed", type=int, default=2)
    ap.add_argument("--csv", default=None, help="optional per-image CSV output")
    return ap.parse_args()


def main():
    args = parse_args()
    stack, kind = load_pattern_file(args.patterns)
    masks = patterns_from_params(stack) if kind == "theta" else stack

    test = planes(synth_dataset(args.kind, args.n_test, args.size, args.size,
                                args.seed))
    scfg = SolverConfig(k=args.k)

    report = BenchReport()
    learned = evaluate(masks, test, scfg, dataset=args.kind,
                       pattern_source="learned")
    report.records.extend(learned)
    report.add_aggregate("learned", [r.psnr_db for r in learned])

    _, rand = random_baseline(test, masks.shape[0], scfg, trials=args.trials,
                              seed=args.seed, dataset=args.kind)
    report.records.extend(rand.records)
    best = [r.psnr_db for r in rand.records]
    report.add_aggregate(f"random-best-of-{args.trials}", best)

    rows = {a["group"]: a["mean_psnr"] for a in report.aggregates}
    for group, mean in rows.items():
        print(f"{group:>22s}: {mean:7.2f} dB")
    print(f"{'gap':>22s}: {rows['learned'] - best_mean(best):7.2f} dB")
    if args.csv:
        report.to_csv(Path(args.csv))


def best_mean(psnrs):
    return sum(psnrs) / len(psnrs)


if __name__ == "__main__":
    main()
