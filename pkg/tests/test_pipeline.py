import numpy as np
import pytest

from fastumap.dataset_io import load_dataset, preprocess
from fastumap.evaluation import knn_accuracy
from fastumap.pipeline import FastUMAPConfig, run_fastumap

from conftest import blobs, dataset_path


def test_config_validation():
    with pytest.raises(ValueError):
        FastUMAPConfig(n_landmarks=10, landmark_ratio=0.5)
    with pytest.raises(ValueError):
        FastUMAPConfig(init="pca")
    with pytest.raises(ValueError):
        FastUMAPConfig(force_mode="mixed")
    with pytest.raises(ValueError):
        FastUMAPConfig(n_neighbors=1)
    with pytest.raises(ValueError):
        FastUMAPConfig(n_landmarks=500).resolve_landmarks(100)


def test_resolution_rules():
    cfg = FastUMAPConfig()
    assert cfg.resolve_landmarks(14500) == 10150  # library: no cap
    assert FastUMAPConfig(landmark_cap=5000).resolve_landmarks(14500) == 5000
    assert FastUMAPConfig(landmark_ratio=0.05).resolve_landmarks(2000) == 100
    assert cfg.resolve_epochs(9000) == 500 and cfg.resolve_epochs(20000) == 200
    assert cfg.replace(epochs=7).resolve_epochs(10) == 7


def test_three_blobs_quality():
    X, y = blobs(60, 5, 3, seed=0, scale=6.0)
    emb = run_fastumap(X, FastUMAPConfig(n_neighbors=10))
    assert emb.Z.shape == (60, 2) and np.all(np.isfinite(emb.Z))
    assert knn_accuracy(emb.Z, y).knn_accuracy >= 90.0


def test_meta_and_timings():
    X, _ = blobs(300, 4, 4, seed=1)
    emb = run_fastumap(X, FastUMAPConfig(epochs=30))
    t = emb.meta["timings"]
    assert min(t.graph_s, t.spectral_s, t.sgd_s) >= 0
    assert t.total_s >= t.graph_s + t.spectral_s + t.sgd_s - 1e-6
    assert (t.n, t.m, t.k, t.epochs) == (300, 150, 15, 30)
    assert emb.meta["landmarks"].m == 150
    assert emb.meta["config"]["seed"] == 42


def test_deterministic_pipeline():
    X, _ = blobs(200, 4, 3, seed=2)
    cfg = FastUMAPConfig(epochs=40)
    assert run_fastumap(X, cfg).Z.tobytes() == run_fastumap(X, cfg).Z.tobytes()
    assert not np.array_equal(run_fastumap(X, cfg).Z, run_fastumap(X, cfg.replace(seed=43)).Z)


def test_random_init_and_homo_paths():
    X, _ = blobs(150, 3, 3, seed=3)
    a = run_fastumap(X, FastUMAPConfig(init="random", force_mode="homo", epochs=20))
    assert a.meta["spectral"] is None
    assert np.abs(a.Z_init).max() <= 10.0
    assert np.all(np.isfinite(a.Z))


def test_snapshots_forwarded():
    X, _ = blobs(120, 3, 3, seed=4)
    emb = run_fastumap(X, FastUMAPConfig(epochs=20), snapshot_epochs=(5, 20))
    assert sorted(emb.snapshots) == [5, 20]


@pytest.mark.skipif(not dataset_path("wine").exists(), reason="wine.csv not prepared")
def test_wine_embedding():
    dm = preprocess(load_dataset(dataset_path("wine")))
    emb = run_fastumap(dm, FastUMAPConfig(landmark_cap=5000))
    assert emb.Z.shape == (178, 2) and np.all(np.isfinite(emb.Z))
    assert emb.meta["m"] == 89
