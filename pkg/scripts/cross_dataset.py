#!/usr/bin/env python3
"""Cross-dataset generalization matrix for learned illumination patterns.

Trains one pattern set per synthetic dataset kind, evaluates every
pattern set on every testset, and prints the train x test mean-PSNR
matrix with a random-baseline row.

Usage:
    python3 scripts/cross_dataset.py --kinds blobs bars --epochs 500
"""

import argparse
from pathlib import Path

from cdp_forge.bench import cross_eval
from cdp_forge.data import planes, split, synth_dataset
from cdp_forge.learning import TrainConfig, train
from cdp_forge.solver import SolverConfig


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kinds", nargs="+", default=["blobs", "bars"])
    ap.add_argument("--t", type=int, default=4)
    ap.add_argument("--k", type=int, default=50)
    ap.add_argument("--epochs", type=int, default=500)
    ap.add_argument("--n-train", type=int, default=32)
    ap.add_argument("--n-test", type=int, default=100)
    ap.add_argument("--size", type=int, default=32)
    ap.add_argument("--trials", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", default=None)
    return ap.parse_args()


def main():
    args = parse_args()
    scfg = SolverConfig(k=args.k)
    patterns = {}
    testsets = {}
    for kind in args.kinds:
        pool = synth_dataset(kind, args.n_train + args.n_test,
                             args.size, args.size, args.seed)
        tr, te = split(pool, args.n_train, args.n_test, args.seed)
        cfg = TrainConfig(t_patterns=args.t, epochs=args.epochs,
                          seed=args.seed, solver=scfg)
        print(f"training on {kind} ...")
        _, masks, hist = train(planes(tr), cfg)
        print(f"  final loss {hist.losses[-1]:.4g}")
        patterns[kind] = masks
        testsets[kind] = planes(te)

    report = cross_eval(patterns, testsets, scfg,
                        random_trials=args.trials, seed=args.seed)
    width = max(len(k) for k in args.kinds) + 2
    header = " " * (width + 8) + "".join(f"{k:>{width}s}" for k in args.kinds)
    print(header)
    for row_name in list(args.kinds) + ["random"]:
        cells = []
        for test_name in args.kinds:
            agg = report.aggregate(f"train={row_name}/test={test_name}")
            cells.append(f"{agg['mean_psnr']:{width}.2f}")
        print(f"train={row_name:<{width}s}" + "".join(cells))
    if args.csv:
        report.to_csv(Path(args.csv))


if __name__ == "__main__":
    main()
