"""Command-line entry point: train / reconstruct / bench.

Configuration is a strict JSON document; unknown keys are rejected before
any work starts. Flag precedence is flags > config > built-in defaults.
Every run writes a metadata JSON with the fully resolved configuration and
all seeds, sufficient to replay it exactly.

Exit codes: 0 success, 2 invalid config or arguments, 3 data error,
4 numerical divergence.

stdout carries machine-readable ``key=value`` progress lines; stderr
carries human diagnostics.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .bench import (
    BenchReport,
    cross_eval,
    evaluate,
    noise_sweep,
    psnr,
    random_baseline,
    sweep_k,
)
from .data import (
    DatasetManifest,
    ImageRecord,
    PREPROCESSORS,
    load_image,
    planes,
    split,
    synth_dataset,
)
from .forward_model import (
    RNG_ALGORITHM,
    NoiseSpec,
    add_noise,
    load_pattern_file,
    measure,
    patterns_from_params,
    save_pattern_file,
)
from .learning import TrainConfig, train
from .solver import DivergenceError, SolverConfig, solve_cdp

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

BENCH_MODES = ("table1", "sweep-k", "noise", "cross")


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config schema: section -> {key: (type(s), default)}
# ---------------------------------------------------------------------------

_SCHEMA = {
    "": {
        "experiment_id": (str, "run"),
        "output_dir": (str, "out"),
        "t": (int, 4),
        "dataset": (dict, None),
        "train": (dict, {}),
        "solver": (dict, {}),
        "noise": (dict, {}),
        "bench": (dict, {}),
    },
    "dataset": {
        "kind": (str, "synthetic"),
        "synth_kind": (str, "blobs"),
        "count": (int, 132),
        "height": (int, 32),
        "width": (int, 32),
        "seed": (int, 0),
        "n_train": (int, 32),
        "n_test": (int, 100),
        "path": (str, ""),
        "recipe": (str, "tiny32"),
    },
    "train": {
        "epochs": (int, 500),
        "lr": (float, 1e-2),
        "adam_beta1": (float, 0.9),
        "adam_beta2": (float, 0.999),
        "adam_eps": (float, 1e-8),
        "batch_size": ((int, str), "full"),
        "grad_mode": (str, "phase_detached"),
        "init_low": (float, 0.0),
        "init_high": (float, 1.0),
        "seed": (int, 0),
        "checkpoint_every": (int, 50),
    },
    "solver": {
        "k": (int, 50),
        "step_size": ((float, type(None)), None),
        "algorithm": (str, "altmin"),
    },
    "noise": {
        "kind": (str, "none"),
        "target_snr_db": (float, 0.0),
        "seed": (int, 0),
    },
    "bench": {
        "trials": (int, 30),
        "k_values": (list, [10, 50, 200]),
        "snr_values": (list, [40.0, 30.0, 20.0, 10.0]),
        "seed": (int, 0),
        "cross_datasets": (list, ["blobs", "bars"]),
    },
}


def _validate_section(name: str, raw: dict) -> dict:
    schema = _SCHEMA[name]
    unknown = set(raw) - set(schema)
    if unknown:
        where = name or "top level"
        raise ConfigError(f"unknown config key(s) in {where}: {sorted(unknown)}")
    out = {}
    for key, (types, default) in schema.items():
        val = raw.get(key, default)
        if key in raw and val is not None:
            ok_types = types if isinstance(types, tuple) else (types,)
            if isinstance(val, bool) or not isinstance(val, ok_types):
                if float in ok_types and isinstance(val, int):
                    val = float(val)
                else:
                    raise ConfigError(f"config field {name or 'top'}.{key} has wrong type")
        out[key] = val
    return out


def load_run_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    cfg = _validate_section("", raw)
    for section in ("dataset", "train", "solver", "noise", "bench"):
        cfg[section] = _validate_section(section, cfg.get(section) or {})
    _check_values(cfg)
    return cfg


def _check_values(cfg: dict) -> None:
    if cfg["t"] < 1:
        raise ConfigError("t must be >= 1")
    if cfg["solver"]["k"] < 0:
        raise ConfigError("solver.k must be >= 0")
    step = cfg["solver"]["step_size"]
    if step is not None and step <= 0:
        raise ConfigError("solver.step_size must be positive")
    if cfg["train"]["epochs"] < 0:
        raise ConfigError("train.epochs must be >= 0")
    if cfg["noise"]["kind"] not in ("none", "gaussian", "poisson"):
        raise ConfigError(f"noise.kind invalid: {cfg['noise']['kind']!r}")
    if cfg["dataset"]["kind"] not in ("synthetic", "manifest"):
        raise ConfigError(f"dataset.kind invalid: {cfg['dataset']['kind']!r}")


def _apply_overrides(cfg: dict, args) -> dict:
    if getattr(args, "k", None) is not None:
        cfg["solver"]["k"] = args.k
    if getattr(args, "t", None) is not None:
        cfg["t"] = args.t
    if getattr(args, "alpha", None) is not None:
        cfg["solver"]["step_size"] = args.alpha
    if getattr(args, "seed", None) is not None:
        cfg["train"]["seed"] = args.seed
        cfg["noise"]["seed"] = args.seed
        cfg["bench"]["seed"] = args.seed
    if getattr(args, "noise_kind", None) is not None:
        cfg["noise"]["kind"] = args.noise_kind
    if getattr(args, "snr_db", None) is not None:
        cfg["noise"]["target_snr_db"] = args.snr_db
    if getattr(args, "out", None) is not None:
        cfg["output_dir"] = args.out
    _check_values(cfg)
    return cfg


def _resolve_threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return max(1, args.threads)
    env = os.environ.get("CDP_FORGE_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"CDP_FORGE_THREADS is not an integer: {env!r}") from exc
    return os.cpu_count() or 1


def _solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(
        k=cfg["solver"]["k"],
        step_size=cfg["solver"]["step_size"],
        algorithm=cfg["solver"]["algorithm"],
    )


def _train_config(cfg: dict, out_dir: Path | None = None) -> TrainConfig:
    tr = cfg["train"]
    return TrainConfig(
        t_patterns=cfg["t"],
        epochs=tr["epochs"],
        lr=tr["lr"],
        adam_beta1=tr["adam_beta1"],
        adam_beta2=tr["adam_beta2"],
        adam_eps=tr["adam_eps"],
        batch_size=tr["batch_size"],
        grad_mode=tr["grad_mode"],
        init_low=tr["init_low"],
        init_high=tr["init_high"],
        seed=tr["seed"],
        solver=_solver_config(cfg),
        checkpoint_every=tr["checkpoint_every"],
        checkpoint_dir=str(out_dir / "checkpoint") if out_dir else None,
    )


def _noise_spec(cfg: dict) -> NoiseSpec | None:
    n = cfg["noise"]
    if n["kind"] == "none":
        return None
    return NoiseSpec(kind=n["kind"], target_snr_db=n["target_snr_db"], seed=n["seed"])


def _load_dataset(cfg: dict) -> tuple[list, list]:
    """Resolve the config's dataset block to (train, test) ImageRecord lists."""
    ds = cfg["dataset"]
    if ds["kind"] == "synthetic":
        pool = synth_dataset(
            ds["synth_kind"], ds["count"], ds["height"], ds["width"], ds["seed"]
        )
        return split(pool, ds["n_train"], ds["n_test"], ds["seed"])
    manifest_path = Path(ds["path"])
    if not manifest_path.exists():
        raise DataError(f"manifest not found: {manifest_path}")
    manifest = DatasetManifest.load(manifest_path)
    recipe = PREPROCESSORS.get(manifest.recipe)
    if recipe is None:
        raise DataError(f"unknown preprocessing recipe {manifest.recipe!r}")
    try:
        train_imgs = [recipe(load_image(p)) for p in manifest.paths("train")]
        test_imgs = [recipe(load_image(p)) for p in manifest.paths("test")]
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    if not train_imgs:
        raise DataError("manifest provides no training images")
    return train_imgs, test_imgs


def _write_metadata(out_dir: Path, cfg: dict, extra: dict) -> None:
    meta = {
        "version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "timestamp": time.strftime("%Y%m%dT%H%M%S"),
        "config": cfg,
    }
    meta.update(extra)
    (out_dir / "run_metadata.json").write_text(json.dumps(meta, indent=2))


def _report_paths(out_dir: Path, experiment_id: str, mode: str) -> tuple[Path, Path]:
    stamp = time.strftime("%Y%m%dT%H%M%S")
    base = f"{experiment_id}_{mode}_{stamp}"
    return out_dir / f"{base}.csv", out_dir / f"{base}.json"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    threads = _resolve_threads(args)
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    train_imgs, _ = _load_dataset(cfg)
    tcfg = _train_config(cfg, out_dir)
    print(f"progress stage=train epochs={tcfg.epochs} t={tcfg.t_patterns} "
          f"k={tcfg.solver.k} n_train={len(train_imgs)}")
    thetas, masks, history = train(planes(train_imgs), tcfg)
    save_pattern_file(out_dir / "patterns_theta.json", thetas, "theta")
    save_pattern_file(out_dir / "patterns_mask.json", masks, "mask")
    # train() left a terminal checkpoint in out_dir/checkpoint; surface the
    # optimizer sidecar next to the pattern files
    ckpt = out_dir / "checkpoint"
    (out_dir / "adam_state.json").write_text((ckpt / "adam_state.json").read_text())
    history.to_csv(out_dir / "history.csv")
    _write_metadata(out_dir, cfg, {
        "threads": threads,
        "final_loss": history.losses[-1] if history.losses else None,
        "artifacts": [
            "patterns_theta.json", "patterns_mask.json",
            "adam_state.json", "history.csv",
        ],
    })
    print(f"progress stage=done final_loss={history.losses[-1] if history.losses else 'nan'}")
    return EXIT_OK


def _gather_image_paths(path: Path) -> list:
    if path.is_dir():
        files = sorted(
            p for p in path.iterdir() if p.suffix.lower() in (".png", ".pgm")
        )
        if not files:
            raise DataError(f"no PNG/PGM images in {path}")
        return files
    if not path.exists():
        raise DataError(f"image path not found: {path}")
    return [path]


def cmd_reconstruct(args) -> int:
    threads = _resolve_threads(args)
    try:
        masks, kind = load_pattern_file(args.patterns)
    except (OSError, ValueError) as exc:
        print(f"error: bad pattern file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if kind == "theta":
        masks = patterns_from_params(masks)
    k = args.k if args.k is not None else 50
    alpha = args.alpha
    cfg = SolverConfig(k=k, step_size=alpha)
    noise = None
    if args.noise_kind is not None and args.noise_kind != "none":
        noise = NoiseSpec(
            kind=args.noise_kind,
            target_snr_db=args.snr_db if args.snr_db is not None else 30.0,
            seed=args.seed if args.seed is not None else 0,
        )
    out_dir = Path(args.out or "recon_out")
    out_dir.mkdir(parents=True, exist_ok=True)

    paths = _gather_image_paths(Path(args.images))
    records = [load_image(p) for p in paths]
    h, w = masks.shape[1:]
    for rec in records:
        if rec.plane.shape != (h, w):
            print(
                f"error: image {rec.source} is {rec.plane.shape}, patterns are {h}x{w}",
                file=sys.stderr,
            )
            return EXIT_DATA

    def reconstruct_one(rec: ImageRecord):
        x = rec.plane
        if noise is None:
            y = measure(x, masks)
        else:
            y = add_noise(x, masks, noise)
        est, _ = solve_cdp(y, masks, cfg)
        return np.clip(est, 0.0, 1.0)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        estimates = list(pool.map(reconstruct_one, records))

    rows = ["image,psnr_db"]
    for rec, est in zip(records, estimates):
        name = Path(rec.source).stem + "_recon.png"
        img8 = np.round(est * 255.0).astype(np.uint8)
        Image.fromarray(img8, mode="L").save(out_dir / name)
        val = psnr(rec.plane, est)
        rows.append(f"{rec.source},{val!r}")
        print(f"progress stage=reconstruct image={rec.source} psnr_db={val:.3f}")
    (out_dir / "psnr.csv").write_text("\n".join(rows) + "\n")
    meta_cfg = {
        "patterns": str(args.patterns), "k": k, "alpha": alpha,
        "noise_kind": args.noise_kind or "none",
        "snr_db": args.snr_db, "seed": args.seed,
    }
    _write_metadata(out_dir, meta_cfg, {"threads": threads, "images": len(records)})
    return EXIT_OK


def _obtain_masks(cfg: dict, args, train_imgs) -> np.ndarray:
    """Load masks from --patterns if given, otherwise train them now."""
    if getattr(args, "patterns", None):
        stack, kind = load_pattern_file(args.patterns)
        return patterns_from_params(stack) if kind == "theta" else stack
    tcfg = _train_config(cfg)
    print(f"progress stage=train epochs={tcfg.epochs} t={tcfg.t_patterns}")
    _, masks, _ = train(planes(train_imgs), tcfg)
    return masks


def cmd_bench(args) -> int:
    cfg = _apply_overrides(load_run_config(args.config), args)
    threads = _resolve_threads(args)
    if args.mode not in BENCH_MODES:
        print(f"error: unknown bench mode {args.mode!r}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    scfg = _solver_config(cfg)
    bench_cfg = cfg["bench"]
    train_imgs, test_imgs = _load_dataset(cfg)
    if not test_imgs:
        raise DataError("dataset provides no test images")

    if args.mode == "table1":
        masks = _obtain_masks(cfg, args, train_imgs)
        report = BenchReport(config=cfg)
        learned = evaluate(
            masks, test_imgs, scfg, noise=_noise_spec(cfg),
            dataset=cfg["dataset"].get("synth_kind", "dataset"),
            pattern_source="learned", timed=True,
        )
        report.records.extend(learned)
        report.add_aggregate("learned", [r.psnr_db for r in learned])
        _, rand_report = random_baseline(
            test_imgs, cfg["t"], scfg,
            trials=bench_cfg["trials"], seed=bench_cfg["seed"],
            dataset=cfg["dataset"].get("synth_kind", "dataset"),
        )
        report.records.extend(rand_report.records)
        report.add_aggregate(
            "random-best-of-%d" % bench_cfg["trials"],
            [r.psnr_db for r in rand_report.records],
        )
    elif args.mode == "sweep-k":
        masks = _obtain_masks(cfg, args, train_imgs)
        report = sweep_k(
            masks, test_imgs, bench_cfg["k_values"], scfg, noise=_noise_spec(cfg),
        )
        report.config = cfg
    elif args.mode == "noise":
        masks = _obtain_masks(cfg, args, train_imgs)
        kind = cfg["noise"]["kind"] if cfg["noise"]["kind"] != "none" else "gaussian"
        report = noise_sweep(
            masks, test_imgs, kind, bench_cfg["snr_values"], scfg,
            seed=cfg["noise"]["seed"],
        )
        report.config = cfg
    else:  # cross
        ds = cfg["dataset"]
        patterns_by_dataset = {}
        testsets = {}
        for kind in bench_cfg["cross_datasets"]:
            pool = synth_dataset(kind, ds["count"], ds["height"], ds["width"], ds["seed"])
            tr, te = split(pool, ds["n_train"], ds["n_test"], ds["seed"])
            tcfg = _train_config(cfg)
            print(f"progress stage=train dataset={kind}")
            _, masks, _ = train(planes(tr), tcfg)
            patterns_by_dataset[kind] = masks
            testsets[kind] = te
        report = cross_eval(
            patterns_by_dataset, testsets, scfg,
            random_trials=bench_cfg["trials"], seed=bench_cfg["seed"],
        )
        report.config = cfg

    csv_path, json_path = _report_paths(out_dir, cfg["experiment_id"], args.mode)
    report.to_csv(csv_path)
    report.to_json(json_path)
    _write_metadata(out_dir, cfg, {
        "threads": threads, "mode": args.mode,
        "report_csv": csv_path.name, "report_json": json_path.name,
    })
    for row in report.aggregates:
        print(f"progress stage=aggregate group={row['group']} "
              f"mean_psnr={row['mean_psnr']:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdp-forge",
        description="Learn and benchmark illumination patterns for coded "
        "diffraction phase retrieval.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--k", type=int, help="iteration count override")
    common.add_argument("--t", type=int, help="pattern count override")
    common.add_argument("--alpha", type=float, help="solver step size override")
    common.add_argument("--seed", type=int, help="seed override")
    common.add_argument("--threads", type=int, help="worker thread bound")
    common.add_argument("--noise-kind", choices=("none", "gaussian", "poisson"))
    common.add_argument("--snr-db", type=float, help="target measurement SNR (dB)")
    common.add_argument("--out", help="output directory")

    p_train = sub.add_parser("train", parents=[common], help="learn patterns")
    p_train.add_argument("--config", required=True)
    p_train.set_defaults(func=cmd_train)

    p_rec = sub.add_parser("reconstruct", parents=[common], help="reconstruct images")
    p_rec.add_argument("--patterns", required=True, help="pattern JSON file")
    p_rec.add_argument("--images", required=True, help="image file or directory")
    p_rec.set_defaults(func=cmd_reconstruct)

    p_bench = sub.add_parser("bench", parents=[common], help="run a benchmark")
    p_bench.add_argument("--config", required=True)
    p_bench.add_argument("--mode", required=True)
    p_bench.add_argument("--patterns", help="pattern file (skips training)")
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"error: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
