"""PSNR metric, benchmark drivers, and the best-of-N random-pattern baseline.

Reports carry one row per reconstructed image plus aggregate rows, and echo
every seed needed to replay them. The drivers mirror the standard
experiment protocols: learned-vs-random comparison, iteration-count sweep,
noise-level sweep, and the cross-dataset generalization matrix.

Reports serialize to CSV (one row per record) and JSON (full report with
config echo and the RNG algorithm identifier).
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .data import ImageRecord, planes
from .forward_model import RNG_ALGORITHM, NoiseSpec, add_noise, measure
from .numerics import ShapeMismatchError
from .solver import SolverConfig, solve_cdp

PSNR_CAP_DB = 200.0  # returned when MSE < 1e-20 so averages stay finite


def psnr(reference: np.ndarray, estimate: np.ndarray) -> float:
    """10*log10(1/MSE) with peak 1.0; capped at 200 dB for (near-)zero MSE."""
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise ShapeMismatchError(
            f"reference {reference.shape} vs estimate {estimate.shape}"
        )
    mse = float(np.mean((reference - estimate) ** 2))
    if mse < 1e-20:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


@dataclass
class BenchRecord:
    dataset: str
    image_id: str
    t: int
    k: int
    noise_kind: str
    snr_db: float | None
    pattern_source: str
    psnr_db: float
    seconds: float
    seed: int | None = None

    CSV_FIELDS = (
        "dataset", "image_id", "t", "k", "noise_kind", "snr_db",
        "pattern_source", "psnr_db", "seconds", "seed",
    )


@dataclass
class BenchReport:
    records: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    rng_algorithm: str = RNG_ALGORITHM

    def add_aggregate(self, group: str, values, extra: dict | None = None) -> None:
        values = np.asarray(values, dtype=np.float64)
        row = {
            "group": group,
            "n": int(values.size),
            "mean_psnr": float(values.mean()),
            "median_psnr": float(np.median(values)),
            "std_psnr": float(values.std()),
        }
        if extra:
            row.update(extra)
        self.aggregates.append(row)

    def aggregate(self, group: str) -> dict:
        for row in self.aggregates:
            if row["group"] == group:
                return row
        raise KeyError(group)

    def psnrs(self, **filters) -> np.ndarray:
        out = []
        for rec in self.records:
            if all(getattr(rec, k) == v for k, v in filters.items()):
                out.append(rec.psnr_db)
        return np.asarray(out)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(BenchRecord.CSV_FIELDS)
            for rec in sorted(self.records, key=lambda r: (r.dataset, r.image_id)):
                writer.writerow([getattr(rec, f) for f in BenchRecord.CSV_FIELDS])

    def to_json(self, path) -> None:
        doc = {
            "rng_algorithm": self.rng_algorithm,
            "config": self.config,
            "records": [asdict(r) for r in self.records],
            "aggregates": self.aggregates,
        }
        Path(path).write_text(json.dumps(doc, indent=2))


def _per_image_noise_seed(master_seed: int, idx: int) -> int:
    """Stable per-image noise seed derived from the master seed."""
    return int(np.random.SeedSequence((master_seed, idx)).generate_state(1)[0])


def _measurements(x, masks, noise: NoiseSpec | None, idx: int):
    if noise is None or noise.kind == "none":
        return measure(x, masks), None
    seed = _per_image_noise_seed(noise.seed, idx)
    spec = NoiseSpec(kind=noise.kind, target_snr_db=noise.target_snr_db, seed=seed)
    return add_noise(x, masks, spec), seed


def evaluate(
    masks: np.ndarray,
    testset,
    cfg: SolverConfig,
    noise: NoiseSpec | None = None,
    dataset: str = "test",
    pattern_source: str = "learned",
    timed: bool = True,
) -> list:
    """Reconstruct every test image and return per-image BenchRecords.

    With timed=True each image is solved at batch size 1 and timed with a
    monotonic clock; timed=False solves the whole set in one batched call
    and divides the wall time evenly (used by the sweep drivers).
    """
    masks = np.asarray(masks, dtype=np.float64)
    t = masks.shape[0]
    records = []
    imgs = [r.plane if isinstance(r, ImageRecord) else np.asarray(r) for r in testset]
    ids = [
        r.source if isinstance(r, ImageRecord) and r.source else str(i)
        for i, r in enumerate(testset)
    ]
    kind = noise.kind if noise is not None else "none"
    snr = noise.target_snr_db if noise is not None and noise.kind != "none" else None

    if timed:
        for i, x in enumerate(imgs):
            y, seed = _measurements(x, masks, noise, i)
            t0 = time.monotonic()
            est, _ = solve_cdp(y, masks, cfg)
            elapsed = time.monotonic() - t0
            records.append(BenchRecord(
                dataset=dataset, image_id=ids[i], t=t, k=cfg.k, noise_kind=kind,
                snr_db=snr, pattern_source=pattern_source,
                psnr_db=psnr(x, est), seconds=elapsed, seed=seed,
            ))
    else:
        ys = []
        seeds = []
        for i, x in enumerate(imgs):
            y, seed = _measurements(x, masks, noise, i)
            ys.append(y)
            seeds.append(seed)
        batch = np.stack(ys)
        t0 = time.monotonic()
        ests, _ = solve_cdp(batch, masks, cfg)
        per_img = (time.monotonic() - t0) / len(imgs)
        for i, x in enumerate(imgs):
            records.append(BenchRecord(
                dataset=dataset, image_id=ids[i], t=t, k=cfg.k, noise_kind=kind,
                snr_db=snr, pattern_source=pattern_source,
                psnr_db=psnr(x, ests[i]), seconds=per_img, seed=seeds[i],
            ))
    return records


def mean_psnr_for_masks(
    masks: np.ndarray, testset, cfg: SolverConfig, noise: NoiseSpec | None = None
) -> float:
    """Batched mean reconstruction PSNR over a test set (no per-image rows)."""
    imgs = planes(testset)
    if noise is None or noise.kind == "none":
        ys = measure(imgs, masks)
    else:
        ys = np.stack([
            _measurements(x, masks, noise, i)[0] for i, x in enumerate(imgs)
        ])
    ests, _ = solve_cdp(ys, masks, cfg)
    return float(np.mean([psnr(imgs[i], ests[i]) for i in range(len(imgs))]))


def random_baseline(
    testset,
    t: int,
    cfg: SolverConfig,
    trials: int = 30,
    seed: int = 0,
    dataset: str = "test",
) -> tuple[np.ndarray, BenchReport]:
    """Best-of-N random masks: draw T Uniform(0,1) masks per trial, keep the
    trial with the highest mean test PSNR. Fully determined by `seed`."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    imgs = planes(testset)
    h, w = imgs.shape[-2:]
    rng = np.random.Generator(np.random.PCG64(seed))
    report = BenchReport(config={
        "t": t, "k": cfg.k, "trials": trials, "seed": seed, "dataset": dataset,
    })
    best_mean = -np.inf
    best_masks = None
    best_idx = -1
    trial_records = []
    for trial in range(trials):
        masks = rng.uniform(0.0, 1.0, size=(t, h, w))
        recs = evaluate(
            masks, testset, cfg, dataset=dataset,
            pattern_source=f"random-trial-{trial}", timed=False,
        )
        vals = [r.psnr_db for r in recs]
        report.add_aggregate(f"trial-{trial}", vals, {"trial": trial})
        trial_records.append(recs)
        if np.mean(vals) > best_mean:
            best_mean = float(np.mean(vals))
            best_masks = masks
            best_idx = trial
    for rec in trial_records[best_idx]:
        rec.pattern_source = f"random-best-of-{trials}"
        report.records.append(rec)
    report.config["best_trial"] = best_idx
    report.add_aggregate(
        "random-best", [r.psnr_db for r in trial_records[best_idx]],
        {"trial": best_idx},
    )
    return best_masks, report


def sweep_k(
    masks: np.ndarray,
    testset,
    k_values,
    cfg: SolverConfig,
    noise: NoiseSpec | None = None,
    dataset: str = "test",
    pattern_source: str = "learned",
) -> BenchReport:
    """Reconstruction quality as a function of the iteration count.

    Measurements are synthesized once (same noise draw for every K) and the
    solver is re-run per K value.
    """
    k_values = list(k_values)
    if not k_values:
        raise ValueError("k_values must be nonempty")
    report = BenchReport(config={"k_values": k_values, "dataset": dataset})
    for k in k_values:
        kcfg = SolverConfig(k=k, step_size=cfg.step_size, algorithm="altmin")
        recs = evaluate(
            masks, testset, kcfg, noise=noise, dataset=dataset,
            pattern_source=pattern_source, timed=False,
        )
        report.records.extend(recs)
        report.add_aggregate(f"k={k}", [r.psnr_db for r in recs], {"k": k})
    return report


def noise_sweep(
    masks: np.ndarray,
    testset,
    kind: str,
    snr_values,
    cfg: SolverConfig,
    seed: int = 0,
    dataset: str = "test",
    pattern_source: str = "learned",
) -> BenchReport:
    """Mean/std PSNR per target SNR for one noise model."""
    snr_values = list(snr_values)
    if not snr_values:
        raise ValueError("snr_values must be nonempty")
    report = BenchReport(config={
        "kind": kind, "snr_values": snr_values, "seed": seed, "dataset": dataset,
    })
    for snr in snr_values:
        noise = NoiseSpec(kind=kind, target_snr_db=snr, seed=seed)
        recs = evaluate(
            masks, testset, cfg, noise=noise, dataset=dataset,
            pattern_source=pattern_source, timed=False,
        )
        report.records.extend(recs)
        report.add_aggregate(f"snr={snr}", [r.psnr_db for r in recs], {"snr_db": snr})
    return report


def cross_eval(
    patterns_by_dataset: dict,
    testsets: dict,
    cfg: SolverConfig,
    random_trials: int = 30,
    seed: int = 0,
) -> BenchReport:
    """Train-dataset x test-dataset PSNR matrix plus a random-pattern column."""
    if not patterns_by_dataset or not testsets:
        raise ValueError("cross_eval needs at least one pattern set and test set")
    report = BenchReport(config={
        "train_datasets": sorted(patterns_by_dataset),
        "test_datasets": sorted(testsets),
        "random_trials": random_trials,
        "seed": seed,
    })
    for test_name in sorted(testsets):
        testset = testsets[test_name]
        for train_name in sorted(patterns_by_dataset):
            recs = evaluate(
                patterns_by_dataset[train_name], testset, cfg, dataset=test_name,
                pattern_source=f"learned:{train_name}", timed=False,
            )
            report.records.extend(recs)
            report.add_aggregate(
                f"train={train_name}/test={test_name}",
                [r.psnr_db for r in recs],
                {"train": train_name, "test": test_name},
            )
        t = next(iter(patterns_by_dataset.values())).shape[0]
        _, rand_report = random_baseline(
            testset, t, cfg, trials=random_trials, seed=seed, dataset=test_name,
        )
        report.records.extend(rand_report.records)
        report.add_aggregate(
            f"train=random/test={test_name}",
            [r.psnr_db for r in rand_report.records],
            {"train": "random", "test": test_name},
        )
    return report
