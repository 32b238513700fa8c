"""Measurement protocol: kNN accuracy, stage timings, sweeps and ablations.

Accuracy is the 5-fold cross-validated accuracy of an unweighted k=5
majority-vote classifier in the 2-D embedding. Timings exclude the shared
preprocessing step.
"""
from __future__ import annotations

import csv
import json
import statistics
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist
from sklearn.model_selection import KFold, StratifiedKFold

from .dataset_io import PreprocessConfig, load_dataset, preprocess
from .graph import (
    NeighborTable,
    build_bipartite_graph,
    build_edge_list,
    calibrate_rows,
    calibration_report,
    compute_memberships,
    fuzzy_union,
)
from .landmarks import DEFAULT_CAP, LandmarkSet
from .pipeline import FastUMAPConfig, StageTimings, run_fastumap

CLASSIFIER_NOTE = "unweighted majority vote; ties by smallest summed distance, then smallest label"

RESULT_COLUMNS = (
    "dataset", "n", "d", "m", "r", "k", "epochs", "seed",
    "knn_acc", "graph_s", "spectral_s", "sgd_s", "total_s",
)

BENCHMARK_CONFIG = FastUMAPConfig(landmark_cap=DEFAULT_CAP)


@dataclass(frozen=True)
class QualityReport:
    knn_accuracy: float
    per_fold: tuple
    k: int = 5
    folds: int = 5
    seed: int = 42
    stratified: bool = True
    classifier: str = CLASSIFIER_NOTE


def _neighbors(test, train, k, chunk=512):
    """k nearest rows of ``train`` for each row of ``test``, ordered by (distance, index)."""
    out_i = np.empty((test.shape[0], k), dtype=np.int64)
    out_d = np.empty((test.shape[0], k))
    for s in range(0, test.shape[0], chunk):
        D = cdist(test[s:s + chunk], train)
        if k < D.shape[1]:
            cand = np.argpartition(D, k - 1, axis=1)[:, :k]
        else:
            cand = np.tile(np.arange(D.shape[1]), (D.shape[0], 1))
        cd = np.take_along_axis(D, cand, axis=1)
        kth = cd.max(axis=1)
        for r in range(D.shape[0]):
            # a distance tie straddling the k-th slot: settle it by index
            if np.count_nonzero(D[r] <= kth[r]) > k:
                cand[r] = np.argsort(D[r], kind="stable")[:k]
            else:
                cand[r] = cand[r][np.lexsort((cand[r], D[r, cand[r]]))]
        out_i[s:s + chunk] = cand
        out_d[s:s + chunk] = np.take_along_axis(D, cand, axis=1)
    return out_i, out_d


def _vote(nb_labels, nb_dist, n_classes):
    onehot = nb_labels[:, :, None] == np.arange(n_classes)
    votes = onehot.sum(axis=1)
    summed = (onehot * nb_dist[:, :, None]).sum(axis=1)
    summed = np.where(votes == votes.max(axis=1, keepdims=True), summed, np.inf)
    # argmin picks the first (smallest) label among exact ties
    return np.argmin(summed, axis=1)


def knn_accuracy(Z, labels, k: int = 5, folds: int = 5, seed: int = 42) -> QualityReport:
    """Cross-validated kNN classification accuracy (percent) of an embedding.

    Folds are stratified by label with a seeded shuffle. When some class has
    fewer than ``folds`` members the split falls back to a plain shuffled
    k-fold and a warning is issued.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if labels is None:
        raise ValueError("labels are required for kNN accuracy")
    y = np.asarray(labels)
    n = Z.shape[0]
    if y.shape[0] != n:
        raise ValueError("labels and embedding differ in length")
    if n < k + 1:
        raise ValueError(f"need n >= k + 1 = {k + 1} samples, got {n}")
    classes, y = np.unique(y, return_inverse=True)
    stratified = np.bincount(y).min() >= folds
    if stratified:
        splitter = StratifiedKFold(folds, shuffle=True, random_state=seed)
    else:
        warnings.warn(f"a class has fewer than {folds} members; using unstratified folds", stacklevel=2)
        splitter = KFold(folds, shuffle=True, random_state=seed)
    per_fold = []
    for train, test in splitter.split(Z, y):
        if train.size < k:
            raise ValueError("training fold smaller than k")
        idx, dist = _neighbors(Z[test], Z[train], k)
        pred = _vote(y[train][idx], dist, classes.size)
        per_fold.append(100.0 * float(np.mean(pred == y[test])))
    return QualityReport(float(np.mean(per_fold)), tuple(per_fold), k, folds, seed, bool(stratified))


def _median_timings(runs: Sequence[StageTimings]) -> StageTimings:
    first = runs[0]
    med = {f: statistics.median(getattr(t, f) for t in runs) for f in ("graph_s", "spectral_s", "sgd_s", "total_s")}
    return StageTimings(n=first.n, m=first.m, k=first.k, epochs=first.epochs, **med)


def warmup():
    """Trigger JIT compilation (or cache loading) on a tiny problem."""
    X = np.random.default_rng(0).normal(size=(64, 3))
    run_fastumap(X, FastUMAPConfig(epochs=2))


def timed_run(X, config: FastUMAPConfig = FastUMAPConfig(), repeats: int = 1, snapshot_epochs=()):
    """Run the pipeline ``repeats`` times and report per-stage median timings.

    Returns ``(embedding, timings)``; the embedding is that of the last run,
    which in deterministic mode is identical to every other run.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    runs, emb = [], None
    for _ in range(repeats):
        emb = run_fastumap(X, config, snapshot_epochs=snapshot_epochs)
        runs.append(emb.meta["timings"])
    return emb, _median_timings(runs)


@dataclass
class SweepResult:
    points: list  # (r, m, knn_accuracy, total_s)
    seed: int = 42
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        rs = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(rs, rs[1:])):
            raise ValueError("r values must be strictly increasing")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "m", "knn_acc", "total_s", "seed"])
            for r, m, acc, t in self.points:
                w.writerow([repr(float(r)), m, repr(acc), repr(t), self.seed])


def _values(X):
    return np.ascontiguousarray(getattr(X, "values", X), dtype=np.float64)


def r_sweep(X, labels, rs, config: FastUMAPConfig = FastUMAPConfig(), out=None) -> SweepResult:
    """One full pipeline run per landmark ratio, all with the same seed."""
    rs = [float(r) for r in rs]
    if any(not 0.0 < r <= 1.0 for r in rs):
        raise ValueError("landmark ratios must lie in (0, 1]")
    X = _values(X)
    points = []
    for r in rs:
        cfg = config.replace(n_landmarks=None, landmark_ratio=r)
        emb, t = timed_run(X, cfg)
        acc = knn_accuracy(emb.Z, labels, seed=config.seed).knn_accuracy
        points.append((r, emb.meta["m"], acc, t.total_s))
    res = SweepResult(points, config.seed, config.to_dict())
    if out is not None:
        res.write_csv(out)
    return res


@dataclass
class AblationResult:
    cells: list  # dicts: init, force, knn_acc, total_s, trace_acc
    trace: list  # (init, epoch, knn_acc) for the hetero runs
    trace_epoch: int
    epochs: int

    def cell(self, init, force) -> dict:
        for c in self.cells:
            if c["init"] == init and c["force"] == force:
                return c
        raise KeyError((init, force))

    def write_csv(self, path, trace_path=None):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["init", "force", "knn_acc", "trace_acc", "total_s"])
            w.writeheader()
            for c in self.cells:
                w.writerow({f: c[f] for f in w.fieldnames})
        if trace_path is not None:
            with open(trace_path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["init", "epoch", "knn_acc"])
                w.writerows(self.trace)


TRACE_FRACTIONS = (0.0, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0)


def ablation_grid(X, labels, config: FastUMAPConfig = FastUMAPConfig(), trace_fraction=0.25, out=None, trace_out=None):
    """{spectral, random} init x {hetero, homo} forces, all sharing one seed.

    The hetero runs also record an accuracy-versus-epoch trace; every cell
    reports its accuracy after ``trace_fraction`` of the epoch budget.
    """
    X = _values(X)
    E = config.resolve_epochs(X.shape[0])
    at = int(round(trace_fraction * E))
    marks = sorted({int(round(f * E)) for f in TRACE_FRACTIONS} | {at})
    cells, trace = [], []
    for init in ("spectral", "random"):
        for force in ("hetero", "homo"):
            cfg = config.replace(init=init, force_mode=force)
            emb, t = timed_run(X, cfg, snapshot_epochs=marks)
            seed = config.seed
            cells.append({
                "init": init,
                "force": force,
                "knn_acc": knn_accuracy(emb.Z, labels, seed=seed).knn_accuracy,
                "trace_acc": knn_accuracy(emb.snapshots[at], labels, seed=seed).knn_accuracy,
                "total_s": t.total_s,
            })
            if force == "hetero":
                for ep in marks:
                    trace.append((init, ep, knn_accuracy(emb.snapshots[ep], labels, seed=seed).knn_accuracy))
    res = AblationResult(cells, trace, at, E)
    if out is not None:
        res.write_csv(out, trace_out)
    return res


@dataclass(frozen=True)
class EquivalenceReport:
    n: int
    k: int
    seed: int
    edge_symmetric_difference: int = 0
    max_weight_delta: float = 0.0
    max_rho_delta: float = 0.0
    n_edges: int = 0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.edge_symmetric_difference == 0 and self.max_weight_delta <= 1e-6

    def as_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def _edge_matrix(edges, n):
    return sp.csr_matrix((edges.weight, (edges.head, edges.tail)), shape=(n, n))


def reference_fuzzy_graph(X, k: int):
    """Full-kNN fuzzy graph over all samples, built from scratch with cdist.

    Neighbours exclude the sample itself and are ordered by (distance, index);
    the rows are calibrated by the same smooth-kNN routine and symmetrised by
    fuzzy union. Returns ``(S, rho)``.
    """
    X = _values(X)
    n = X.shape[0]
    D = cdist(X, X)
    np.fill_diagonal(D, np.inf)
    idx = np.argsort(D, axis=1, kind="stable")[:, :k]
    dist = np.take_along_axis(D, idx, axis=1)
    calib = calibrate_rows(dist, k)
    A = compute_memberships(NeighborTable(idx, dist), calib, n).B
    return fuzzy_union(A), calib[0]


def equivalence_check(X, k: int = 10, seed: int = 42) -> EquivalenceReport:
    """Compare the m = n landmark graph against the full-kNN reference graph.

    With every sample a landmark, kernel parameters tied across roles and
    fuzzy-union symmetrisation, the two graphs must coincide. Configuration
    problems (such as k = 1) are reported in ``error`` rather than raised.
    """
    X = _values(X)
    n = X.shape[0]
    try:
        if k < 2:
            raise ValueError("k must be >= 2: the log2(k) row-sum target is degenerate for k=1")
        if n > 2000:
            raise ValueError("equivalence check is meant for n <= 2000")
        # m = n makes the landmark draw the identity; the seed is recorded only
        landmarks = LandmarkSet(np.arange(n), n)
        graph, _ = build_bipartite_graph(X, landmarks, k)
        fast = _edge_matrix(build_edge_list(graph, landmarks, "union"), n)
        ref, ref_rho = reference_fuzzy_graph(X, k)
    except ValueError as exc:
        return EquivalenceReport(n, k, seed, error=f"configuration error: {exc}")
    fast_pat = fast.copy()
    fast_pat.data[:] = 1
    ref_pat = ref.copy()
    ref_pat.data[:] = 1
    symdiff = int(abs(fast_pat - ref_pat).sum())
    delta = abs(fast - ref)
    max_dw = float(delta.max()) if delta.nnz else 0.0
    max_drho = float(np.max(np.abs(graph.rho - ref_rho)))
    return EquivalenceReport(n, k, seed, symdiff, max_dw, max_drho, int(ref.nnz))


def _as_entry(item):
    if isinstance(item, dict):
        return dict(item)
    p = Path(item)
    return {"name": p.stem, "path": str(p)}


def load_manifest(path):
    """Read a JSON manifest: a list of {name, path, format?, label_col?} entries.

    Relative paths are resolved against the manifest's directory.
    """
    path = Path(path)
    entries = json.loads(path.read_text())
    if isinstance(entries, dict):
        entries = entries.get("datasets", [])
    out = []
    for e in entries:
        e = _as_entry(e)
        if not Path(e["path"]).is_absolute():
            e["path"] = str(path.parent / e["path"])
        out.append(e)
    return out


def benchmark_suite(datasets, config: FastUMAPConfig = BENCHMARK_CONFIG, out_dir=None, repeats: int = 1,
                    prep: PreprocessConfig = PreprocessConfig()):
    """Timed runs plus kNN accuracy for every dataset; one result row each.

    ``datasets`` holds paths or manifest entries. Missing files are skipped
    with a warning. When ``out_dir`` is given, ``results.csv`` and
    ``results.json`` are written there.
    """
    rows = []
    for item in datasets:
        entry = _as_entry(item)
        path = Path(entry["path"])
        if not path.exists():
            warnings.warn(f"skipping {entry.get('name', path.stem)}: {path} not found", stacklevel=2)
            continue
        ds = load_dataset(path, entry.get("format"), entry.get("label_col"), name=entry.get("name"))
        X = preprocess(ds, prep)
        emb, t = timed_run(X, config, repeats)
        acc = knn_accuracy(emb.Z, ds.labels, seed=config.seed).knn_accuracy if ds.labels is not None else float("nan")
        calib = calibration_report(emb.meta["graph"])
        rows.append({
            "dataset": ds.name,
            "n": X.n,
            "d": X.d,
            "m": t.m,
            "r": round(t.m / X.n, 2),
            "k": t.k,
            "epochs": t.epochs,
            "seed": config.seed,
            "knn_acc": acc,
            "graph_s": t.graph_s,
            "spectral_s": t.spectral_s,
            "sgd_s": t.sgd_s,
            "total_s": t.total_s,
            "calib_rows_within_tol": calib["rows_within_tol"],
            "calib_rows_flagged": calib["flagged"],
        })
    if out_dir is not None:
        write_results(rows, out_dir, config, repeats)
    return rows


def write_results(rows, out_dir, config: FastUMAPConfig, repeats: int = 1):
    from . import __version__

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    extra = [c for c in (rows[0].keys() if rows else []) if c not in RESULT_COLUMNS]
    with open(out / "results.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(RESULT_COLUMNS) + extra)
        w.writeheader()
        w.writerows(rows)
    meta = {
        "version": __version__,
        "config": config.to_dict(),
        "seed": config.seed,
        "repeats": repeats,
        "timing": "median of warm runs" if repeats > 1 else "single run",
        "knn": {"k": 5, "folds": 5, "classifier": CLASSIFIER_NOTE},
        "rows": rows,
    }
    (out / "results.json").write_text(json.dumps(meta, indent=2))
