"""End-to-end command-line behavior on tiny runs."""

import json
import os

import numpy as np
import pytest

from ctlab.cli import main

TINY = """
[experiment]
setting = 1m-2m

[schedule]
curriculum = fixed
n_steps = 8

[model]
hidden_dim = 8
depth = 2

[run]
seed = 3
batch_size = 8
total_steps = 6
metric_interval = 3
checkpoint_interval = 3
"""

SCORE = TINY + "model_kind = score\n"


def _write(path, text):
    path.write_text(text)
    return str(path)


def _read_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    return lines[0].split(","), [line.split(",") for line in lines[1:]]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    """One tiny consistency training and one tiny score training."""
    root = tmp_path_factory.mktemp("cli")
    cfg = _write(root / "run.ini", TINY)
    out = root / "train"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    score_cfg = _write(root / "score.ini", SCORE)
    score_out = root / "score"
    assert main(["train", "--config", score_cfg, "--out", str(score_out)]) == 0
    return {
        "root": root,
        "cfg": cfg,
        "out": out,
        "ckpts": [str(out / "checkpoints" / f"step_{s:06d}.ckpt") for s in (3, 6)],
        "score_ckpt": str(score_out / "checkpoints" / "step_000006.ckpt"),
    }


def test_train_writes_manifest_and_artifacts(run_dir):
    out = run_dir["out"]
    with open(out / "manifest.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    with open(run_dir["cfg"], "r", encoding="utf-8") as fh:
        assert manifest["config_text"] == fh.read()
    assert manifest["seed"] == 3
    assert manifest["ended_at"] is not None
    header, rows = _read_csv(out / "metrics.csv")
    assert header == ["step", "metric", "value"]
    steps = {int(r[0]) for r in rows}
    assert steps == {3, 6}
    names = {r[1] for r in rows}
    assert {"loss", "grad_variance", "coupling_gc", "n_intervals"} <= names
    for p in run_dir["ckpts"]:
        assert os.path.exists(p)


def test_train_is_byte_deterministic(run_dir, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["train", "--config", run_dir["cfg"], "--out", str(out)]) == 0
        outs.append(out)
    read = lambda p: open(p, "rb").read()
    assert read(outs[0] / "metrics.csv") == read(outs[1] / "metrics.csv")
    assert (read(outs[0] / "checkpoints" / "step_000006.ckpt")
            == read(outs[1] / "checkpoints" / "step_000006.ckpt"))


def test_seed_override(run_dir, tmp_path):
    out = tmp_path / "seeded"
    assert main(["train", "--config", run_dir["cfg"], "--seed", "11",
                 "--out", str(out)]) == 0
    with open(out / "manifest.json", "r", encoding="utf-8") as fh:
        assert json.load(fh)["seed"] == 11
    base = open(run_dir["out"] / "metrics.csv", "rb").read()
    assert open(out / "metrics.csv", "rb").read() != base


def test_sample_determinism_and_schema(run_dir, tmp_path):
    ckpt = run_dir["ckpts"][-1]
    paths = [str(tmp_path / f"s{i}.csv") for i in range(3)]
    for p in paths[:2]:
        assert main(["sample", "--checkpoint", ckpt, "--n", "16",
                     "--seed", "5", "--out", p]) == 0
    assert main(["sample", "--checkpoint", ckpt, "--n", "16",
                 "--seed", "6", "--out", paths[2]]) == 0
    header, rows = _read_csv(paths[0])
    assert header == ["x0", "x1"] and len(rows) == 16
    read = lambda p: open(p, "rb").read()
    assert read(paths[0]) == read(paths[1])
    assert read(paths[0]) != read(paths[2])


def test_sample_zero_and_negative_n(run_dir, tmp_path):
    out = str(tmp_path / "empty.csv")
    assert main(["sample", "--checkpoint", run_dir["ckpts"][-1], "--n", "0",
                 "--seed", "1", "--out", out]) == 0
    assert open(out, "r", encoding="utf-8").read() == "x0,x1\n"
    assert main(["sample", "--checkpoint", run_dir["ckpts"][-1], "--n", "-4",
                 "--seed", "1", "--out", out]) == 2


def test_diagnose_variance(run_dir, tmp_path):
    out = tmp_path / "diag"
    argv = ["diagnose", "variance", "--config", run_dir["cfg"],
            "--out", str(out), "--n", "16"]
    for p in run_dir["ckpts"]:
        argv += ["--checkpoint", p]
    assert main(argv) == 0
    header, rows = _read_csv(out / "variance.csv")
    assert header == ["step", "ic_variance", "gc_variance"]
    assert [int(r[0]) for r in rows] == [3, 6]
    for r in rows:
        assert float(r[1]) > 0.0 and float(r[2]) > 0.0


def test_diagnose_variance_rejects_score_checkpoint(run_dir, tmp_path):
    assert main(["diagnose", "variance", "--config", run_dir["cfg"],
                 "--out", str(tmp_path), "--checkpoint",
                 run_dir["score_ckpt"]]) == 2


def test_diagnose_transport_and_trajectories(run_dir, tmp_path):
    out = tmp_path / "diag"
    assert main(["diagnose", "transport", "--config", run_dir["cfg"],
                 "--out", str(out), "--checkpoint", run_dir["ckpts"][-1],
                 "--n", "64", "--trajectories", "4"]) == 0
    header, rows = _read_csv(out / "transport.csv")
    assert header == ["timestep", "sigma", "ic_cost", "gc_cost"]
    assert len(rows) == 9 and [int(r[0]) for r in rows] == list(range(9))
    sigmas = [float(r[1]) for r in rows]
    assert sigmas == sorted(sigmas)
    header, rows = _read_csv(out / "trajectories.csv")
    assert header == ["arm", "sample", "timestep", "sigma", "x0", "x1"]
    assert len(rows) == 2 * 4 * 9
    assert {r[0] for r in rows} == {"ic", "gc"}


def test_diagnose_pfode_with_analytic_score(run_dir, tmp_path):
    out = tmp_path / "diag"
    argv = ["diagnose", "pfode", "--config", run_dir["cfg"], "--out", str(out),
            "--n", "32", "--analytic-score"]
    for p in run_dir["ckpts"]:
        argv += ["--checkpoint", p]
    assert main(argv) == 0
    header, rows = _read_csv(out / "pfode.csv")
    assert header == ["step", "ic_distance", "gc_distance"]
    assert [int(r[0]) for r in rows] == [3, 6]
    assert all(float(r[1]) >= 0.0 for r in rows)


def test_diagnose_pfode_with_score_checkpoint(run_dir, tmp_path):
    assert main(["diagnose", "pfode", "--config", run_dir["cfg"],
                 "--out", str(tmp_path), "--checkpoint", run_dir["ckpts"][-1],
                 "--n", "16", "--score-checkpoint", run_dir["score_ckpt"]]) == 0
    assert os.path.exists(tmp_path / "pfode.csv")


def test_pfode_requires_a_score_source(run_dir, tmp_path):
    assert main(["diagnose", "pfode", "--config", run_dir["cfg"],
                 "--out", str(tmp_path), "--checkpoint",
                 run_dir["ckpts"][-1]]) == 2


def test_pfode_rejects_non_edm_process(run_dir, tmp_path):
    text = TINY.replace("setting = 1m-2m", "setting = 1m-2m\nprocess = bridge")
    cfg = _write(tmp_path / "bridge.ini", text)
    assert main(["diagnose", "pfode", "--config", cfg, "--out", str(tmp_path),
                 "--checkpoint", run_dir["ckpts"][-1],
                 "--analytic-score"]) == 2


def test_eval_summary(run_dir, tmp_path):
    out = str(tmp_path / "eval.csv")
    assert main(["eval", "--checkpoint", run_dir["ckpts"][-1],
                 "--config", run_dir["cfg"], "--out", out,
                 "--n", "128", "--seed", "2"]) == 0
    header, rows = _read_csv(out)
    assert header == ["n", "energy_distance", "mode_balance_0", "mode_balance_1"]
    assert len(rows) == 1
    n, ed, b0, b1 = rows[0]
    assert int(n) == 128
    assert np.isfinite(float(ed))
    assert abs(float(b0) + float(b1) - 1.0) < 1e-12


def test_architecture_mismatch_is_structural(run_dir, tmp_path):
    cfg = _write(tmp_path / "wide.ini",
                 TINY.replace("hidden_dim = 8", "hidden_dim = 16"))
    assert main(["eval", "--checkpoint", run_dir["ckpts"][-1],
                 "--config", cfg, "--out", str(tmp_path / "e.csv")]) == 2


def test_invalid_config_value_exits_2(run_dir, tmp_path):
    cfg = _write(tmp_path / "bad.ini", TINY + "\n[coupling]\nmu = 1.5\n")
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_missing_files_exit_4(run_dir, tmp_path):
    assert main(["train", "--config", str(tmp_path / "absent.ini"),
                 "--out", str(tmp_path / "o")]) == 4
    assert main(["sample", "--checkpoint", str(tmp_path / "absent.ckpt"),
                 "--n", "4", "--seed", "1",
                 "--out", str(tmp_path / "s.csv")]) == 4


def test_corrupt_checkpoint_exits_2(run_dir, tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"JUNKJUNKJUNKJUNK")
    assert main(["sample", "--checkpoint", str(bad), "--n", "4",
                 "--seed", "1", "--out", str(tmp_path / "s.csv")]) == 2


def test_divergence_exits_3_with_dump(run_dir, tmp_path):
    text = TINY + "\n[optimizer]\nkind = lion\nlr = 50.0\n"
    cfg = _write(tmp_path / "explode.ini", text)
    out = tmp_path / "o"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 3
    with open(out / "divergence.json", "r", encoding="utf-8") as fh:
        dump = json.load(fh)
    assert "context" in dump and "step" in dump["context"]


def test_usage_error_from_argparse():
    with pytest.raises(SystemExit) as exc:
        main(["diagnose", "nonsense", "--config", "x", "--out", "y",
              "--checkpoint", "z"])
    assert exc.value.code == 2
