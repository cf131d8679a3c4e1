"""End-to-end tests for the cdp-forge command-line interface.

These drive ``cli.main`` in-process with temp directories rather than
spawning subprocesses, which keeps the suite fast while still exercising
argument parsing, config validation, artifact layout, and exit codes.
"""

import json

import numpy as np
import pytest
from PIL import Image

from cdp_forge import cli
from cdp_forge.forward_model import load_pattern_file, save_pattern_file


def write_config(path, **overrides):
    """Minimal valid training config on a tiny synthetic problem."""
    doc = {
        "experiment_id": "t",
        "output_dir": str(path.parent / "out"),
        "t": 2,
        "dataset": {
            "kind": "synthetic",
            "synth_kind": "bars",
            "count": 12,
            "height": 8,
            "width": 8,
            "seed": 3,
            "n_train": 4,
            "n_test": 4,
        },
        "train": {"epochs": 2, "seed": 5, "checkpoint_every": 1},
        "solver": {"k": 2},
    }
    for key, val in overrides.items():
        if isinstance(val, dict) and isinstance(doc.get(key), dict):
            doc[key].update(val)
        else:
            doc[key] = val
    path.write_text(json.dumps(doc))
    return path


# ---------------------------------------------------------------------------
# config validation -> exit code 2
# ---------------------------------------------------------------------------


def test_unknown_top_level_key_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json")
    doc = json.loads(cfg.read_text())
    doc["spurious"] = 1
    cfg.write_text(json.dumps(doc))
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_CONFIG
    assert "spurious" in capsys.readouterr().err


def test_unknown_section_key_rejected(tmp_path):
    cfg = write_config(tmp_path / "c.json", solver={"iterations": 9})
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_CONFIG


def test_negative_k_rejected_with_field_name(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", solver={"k": -1})
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_CONFIG
    assert "solver.k" in capsys.readouterr().err


def test_wrong_type_rejected(tmp_path):
    cfg = write_config(tmp_path / "c.json", train={"epochs": "many"})
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_CONFIG


def test_malformed_json_rejected(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_CONFIG


def test_missing_config_file_rejected(tmp_path):
    assert cli.main(["train", "--config", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG


def test_bad_noise_kind_rejected(tmp_path):
    cfg = write_config(tmp_path / "c.json", noise={"kind": "salt"})
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_CONFIG


def test_bad_threads_env_rejected(tmp_path, monkeypatch):
    monkeypatch.setenv("CDP_FORGE_THREADS", "lots")
    cfg = write_config(tmp_path / "c.json")
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_CONFIG


def test_unknown_bench_mode_rejected(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    rc = cli.main(["bench", "--config", str(cfg), "--mode", "table9"])
    assert rc == cli.EXIT_CONFIG


# ---------------------------------------------------------------------------
# data errors -> exit code 3
# ---------------------------------------------------------------------------


def test_missing_manifest_is_data_error(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        dataset={"kind": "manifest", "path": str(tmp_path / "absent.json")},
    )
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_DATA


def test_reconstruct_size_mismatch_is_data_error(tmp_path, capsys):
    masks = np.full((2, 8, 8), 0.5)
    pat = tmp_path / "p.json"
    save_pattern_file(pat, masks, "mask")
    img = tmp_path / "big.png"
    Image.fromarray(np.zeros((16, 16), dtype=np.uint8), mode="L").save(img)
    rc = cli.main(["reconstruct", "--patterns", str(pat), "--images", str(img),
                   "--out", str(tmp_path / "r")])
    assert rc == cli.EXIT_DATA
    assert "8x8" in capsys.readouterr().err


def test_reconstruct_empty_directory_is_data_error(tmp_path):
    masks = np.full((2, 8, 8), 0.5)
    pat = tmp_path / "p.json"
    save_pattern_file(pat, masks, "mask")
    empty = tmp_path / "imgs"
    empty.mkdir()
    rc = cli.main(["reconstruct", "--patterns", str(pat), "--images", str(empty)])
    assert rc == cli.EXIT_DATA


# ---------------------------------------------------------------------------
# happy paths
# ---------------------------------------------------------------------------


def test_train_writes_expected_artifacts(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json")
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_OK
    out = tmp_path / "out"
    for name in ("patterns_theta.json", "patterns_mask.json", "adam_state.json",
                 "history.csv", "run_metadata.json"):
        assert (out / name).exists(), name
    thetas, kind = load_pattern_file(out / "patterns_theta.json")
    assert kind == "theta" and thetas.shape == (2, 8, 8)
    masks, kind = load_pattern_file(out / "patterns_mask.json")
    assert kind == "mask"
    np.testing.assert_allclose(masks, 1.0 / (1.0 + np.exp(-thetas)), atol=1e-12)
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["config"]["solver"]["k"] == 2
    assert "progress stage=done" in capsys.readouterr().out


def test_train_rerun_is_deterministic(tmp_path):
    cfg_a = write_config(tmp_path / "a.json", output_dir=str(tmp_path / "oa"))
    cfg_b = write_config(tmp_path / "b.json", output_dir=str(tmp_path / "ob"))
    assert cli.main(["train", "--config", str(cfg_a)]) == cli.EXIT_OK
    assert cli.main(["train", "--config", str(cfg_b)]) == cli.EXIT_OK
    ta, _ = load_pattern_file(tmp_path / "oa" / "patterns_theta.json")
    tb, _ = load_pattern_file(tmp_path / "ob" / "patterns_theta.json")
    np.testing.assert_array_equal(ta, tb)


def test_flag_overrides_beat_config(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    rc = cli.main(["train", "--config", str(cfg), "--k", "1", "--t", "3",
                   "--out", str(tmp_path / "ov")])
    assert rc == cli.EXIT_OK
    meta = json.loads((tmp_path / "ov" / "run_metadata.json").read_text())
    assert meta["config"]["solver"]["k"] == 1
    assert meta["config"]["t"] == 3
    thetas, _ = load_pattern_file(tmp_path / "ov" / "patterns_theta.json")
    assert thetas.shape[0] == 3


def test_reconstruct_roundtrip(tmp_path, capsys):
    rng = np.random.Generator(np.random.PCG64(0))
    masks = rng.uniform(size=(8, 8, 8))
    pat = tmp_path / "p.json"
    save_pattern_file(pat, masks, "mask")
    plane = rng.uniform(size=(8, 8))
    img = tmp_path / "tex.png"
    Image.fromarray(np.round(plane * 255).astype(np.uint8), mode="L").save(img)
    out = tmp_path / "rec"
    rc = cli.main(["reconstruct", "--patterns", str(pat), "--images", str(img),
                   "--k", "150", "--out", str(out), "--threads", "1"])
    assert rc == cli.EXIT_OK
    assert (out / "tex_recon.png").exists()
    rows = (out / "psnr.csv").read_text().strip().splitlines()
    assert rows[0] == "image,psnr_db"
    val = float(rows[1].split(",")[1])
    assert val > 30.0
    assert "psnr_db" in capsys.readouterr().out


def test_bench_table1_writes_reports(tmp_path, capsys):
    masks = np.full((2, 8, 8), 0.5)
    pat = tmp_path / "p.json"
    save_pattern_file(pat, masks, "mask")
    cfg = write_config(tmp_path / "c.json", bench={"trials": 2})
    rc = cli.main(["bench", "--config", str(cfg), "--mode", "table1",
                   "--patterns", str(pat)])
    assert rc == cli.EXIT_OK
    out = tmp_path / "out"
    csvs = list(out.glob("t_table1_*.csv"))
    jsons = list(out.glob("t_table1_*.json"))
    assert len(csvs) == 1 and len(jsons) == 1
    doc = json.loads(jsons[0].read_text())
    groups = {row["group"] for row in doc["aggregates"]}
    assert groups == {"learned", "random-best-of-2"}
    assert "stage=aggregate" in capsys.readouterr().out


def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        cli.main(["--version"])
    assert exc.value.code == 0
