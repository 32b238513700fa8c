import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from fastumap import __version__
from fastumap.cli import main

from conftest import blobs


@pytest.fixture
def toy_csv(tmp_path):
    X, y = blobs(90, 4, 3, seed=0)
    path = tmp_path / "toy.csv"
    with open(path, "w") as fh:
        fh.write("a,b,c,d,label\n")
        for row, lab in zip(X, y):
            fh.write(",".join(map(repr, row.tolist())) + f",{lab}\n")
    return path


def run(args):
    return main([str(a) for a in args])


def test_embed_outputs(toy_csv, tmp_path):
    out = tmp_path / "o"
    assert run(["embed", toy_csv, "--out", out, "--epochs", 30, "--eval"]) == 0
    rows = list(csv.reader(open(out / "toy.coords.csv")))
    assert rows[0] == ["index", "x", "y"] and len(rows) == 91
    meta = json.loads((out / "toy.meta.json").read_text())
    assert meta["version"] == __version__ and meta["seed"] == 42
    assert meta["config"]["epochs"] == 30 and meta["config"]["landmark_cap"] == 5000
    assert meta["m"] == 45 and set(meta["timings"]) >= {"graph_s", "spectral_s", "sgd_s", "total_s"}
    assert 0 <= meta["knn_accuracy"]["knn_accuracy"] <= 100


def test_embed_byte_identical_rerun(toy_csv, tmp_path):
    for d in ("a", "b"):
        assert run(["embed", toy_csv, "--out", tmp_path / d, "--epochs", 25, "--seed", 7, "--deterministic"]) == 0
    assert (tmp_path / "a" / "toy.coords.csv").read_bytes() == (tmp_path / "b" / "toy.coords.csv").read_bytes()


def test_conflicting_landmark_flags_exit_2(toy_csv):
    with pytest.raises(SystemExit) as info:
        run(["embed", toy_csv, "--landmarks", 10, "--landmark-ratio", 0.5])
    assert info.value.code == 2


def test_config_file_and_flag_precedence(toy_csv, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("epochs: 12\nn_landmarks: 30\nseed: 5\n")
    assert run(["embed", toy_csv, "--out", tmp_path, "--config", cfg, "--landmark-ratio", 0.5, "--seed", 9]) == 0
    meta = json.loads((tmp_path / "toy.meta.json").read_text())
    assert meta["config"]["epochs"] == 12
    assert meta["config"]["n_landmarks"] is None and meta["m"] == 45
    assert meta["seed"] == 9


def test_bad_config_values_exit_2(toy_csv, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_landmarks": 10, "landmark_ratio": 0.5}))
    assert run(["embed", toy_csv, "--config", cfg]) == 2
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(["embed", toy_csv, "--config", cfg]) == 2
    assert run(["embed", toy_csv, "--landmarks", 500]) == 2
    assert run(["embed", toy_csv, "--n-neighbors", 1]) == 2


def test_runtime_failure_exit_1(tmp_path):
    assert run(["embed", tmp_path / "missing.csv"]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("a,label\n1,x\nfoo,y\n")
    assert run(["embed", bad]) == 1


def test_no_cap_flag(toy_csv, tmp_path):
    assert run(["embed", toy_csv, "--out", tmp_path, "--epochs", 5, "--landmark-cap", "none"]) == 0
    assert json.loads((tmp_path / "toy.meta.json").read_text())["config"]["landmark_cap"] is None


def test_bench_single_and_repeats(toy_csv, tmp_path):
    assert run(["bench", toy_csv, "--out", tmp_path, "--epochs", 10, "--repeats", 3]) == 0
    rows = list(csv.DictReader(open(tmp_path / "results.csv")))
    assert len(rows) == 1 and rows[0]["m"] == "45" and rows[0]["r"] == "0.5"
    meta = json.loads((tmp_path / "results.json").read_text())
    assert meta["repeats"] == 3 and "median" in meta["timing"]


def test_bench_empty_list_succeeds(tmp_path):
    assert run(["bench", "--out", tmp_path]) == 0
    assert json.loads((tmp_path / "results.json").read_text())["rows"] == []


def test_sweep_and_ablate(toy_csv, tmp_path):
    assert run(["sweep", toy_csv, "--out", tmp_path, "--ratios", "0.2,0.5", "--epochs", 10]) == 0
    rows = list(csv.DictReader(open(tmp_path / "toy.sweep.csv")))
    assert [r["r"] for r in rows] == ["0.2", "0.5"]
    assert run(["sweep", toy_csv, "--ratios", "0.5,0.2"]) == 2
    assert run(["ablate", toy_csv, "--out", tmp_path, "--epochs", 8]) == 0
    assert len(list(csv.DictReader(open(tmp_path / "toy.ablation.csv")))) == 4
    assert (tmp_path / "toy.trace.csv").exists()


def test_check_equivalence(tmp_path):
    assert run(["check-equivalence", "--n", 300, "--k", 10, "--out", tmp_path]) == 0
    rep = json.loads((tmp_path / "equivalence.json").read_text())
    assert rep["ok"] and rep["edge_symmetric_difference"] == 0
    assert run(["check-equivalence", "--k", 1, "--out", tmp_path]) == 2


def test_threads_env_and_flag(toy_csv, tmp_path, monkeypatch):
    monkeypatch.setenv("FASTUMAP_THREADS", "1")
    assert run(["embed", toy_csv, "--out", tmp_path, "--epochs", 5]) == 0
    monkeypatch.setenv("FASTUMAP_THREADS", "lots")
    assert run(["embed", toy_csv, "--out", tmp_path, "--epochs", 5]) == 2
    monkeypatch.delenv("FASTUMAP_THREADS")
    assert run(["embed", toy_csv, "--out", tmp_path, "--epochs", 5, "--threads", 1, "--parallel"]) == 0


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "fastumap", "--version"], capture_output=True, text=True, check=True)
    assert __version__ in out.stdout
