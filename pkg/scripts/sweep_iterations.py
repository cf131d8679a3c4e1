#!/usr/bin/env python3
"""Reconstruction quality and runtime as a function of solver depth K.

Runs the AltMin solver with a fixed pattern file at several iteration
budgets and reports mean PSNR and mean per-image time for each, showing
the quality/latency trade-off.

Usage:
    python3 scripts/sweep_iterations.py \
        --patterns runs/bars_t4/patterns_mask.json --kind bars \
        --k-values 10 50 200
"""

import argparse
from pathlib import Path

from cdp_forge.bench import sweep_k
from cdp_forge.data import planes, synth_dataset
from cdp_forge.forward_model import load_pattern_file, patterns_from_params
from cdp_forge.solver import SolverConfig


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--patterns", required=True)
    ap.add_argument("--kind", default="bars")
    ap.add_argument("--k-values", type=int, nargs="+", default=[10, 50, 200])
    ap.add_argument("--n-test", type=int, default=50)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--seed", type=int, default=2)
    ap.add_argument("--csv", default=None)
    return ap.parse_args()


def main():
    args = parse_args()
    stack, kind = load_pattern_file(args.patterns)
    masks = patterns_from_params(stack) if kind == "theta" else stack
    test = planes(synth_dataset(args.kind, args.n_test, args.size, args.size,
                                args.seed))

    report = sweep_k(masks, test, args.k_values, SolverConfig(k=50))
    print(f"{'K':>6s} {'mean PSNR (dB)':>16s} {'mean time (s)':>14s}")
    for agg in report.aggregates:
        k = int(agg["k"])
        secs = [r.seconds for r in report.records if r.k == k]
        print(f"{k:6d} {agg['mean_psnr']:16.2f} {sum(secs) / len(secs):14.4f}")
    if args.csv:
        report.to_csv(Path(args.csv))


if __name__ == "__main__":
    main()
