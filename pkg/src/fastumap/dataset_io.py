"""Dataset loading and the shared preprocessing applied before every run.

Preprocessing is min-max normalisation per column, then (conditionally) a
PCA projection. It runs outside every timed region.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np


class DatasetError(ValueError):
    """Raised for unreadable or malformed dataset files."""


@dataclass(frozen=True)
class RawDataset:
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = "dataset"
    label_names: Optional[tuple] = None

    def __post_init__(self):
        X = self.features
        if X.ndim != 2 or X.shape[0] < 2 or X.shape[1] < 1:
            raise DatasetError(f"{self.name}: need an n x D matrix with n >= 2, D >= 1; got {X.shape}")
        if not np.all(np.isfinite(X)):
            i, j = np.argwhere(~np.isfinite(X))[0]
            raise DatasetError(f"{self.name}: non-finite value at row {i}, column {j}")
        if self.labels is not None and len(self.labels) != X.shape[0]:
            raise DatasetError(f"{self.name}: {len(self.labels)} labels for {X.shape[0]} rows")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def D(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class DataMatrix:
    values: np.ndarray
    name: str = "dataset"
    pca_applied: bool = False
    d_orig: Optional[int] = None

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PreprocessConfig:
    pca_target: int = 50
    trigger_dim: int = 50
    trigger_n: int = 5000
    seed: int = 42

    def __post_init__(self):
        for field in ("pca_target", "trigger_dim", "trigger_n"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def _encode_labels(raw):
    """Factor-encode labels to 0..C-1 in sorted order of the distinct values."""
    values = list(raw)
    try:
        keys = [float(v) for v in values]
    except ValueError:
        keys = values
    uniq = sorted(set(keys))
    lookup = {v: i for i, v in enumerate(uniq)}
    return np.array([lookup[v] for v in keys], dtype=np.int64), tuple(str(u) for u in uniq)


def _load_csv(path, label_col, unlabeled, name):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if unlabeled:
            lab_idx = None
        else:
            col = label_col or "label"
            if col not in header:
                raise DatasetError(f"{path}: label column {col!r} not in header {header}")
            lab_idx = header.index(col)
        feat_idx = [j for j in range(len(header)) if j != lab_idx]
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
            vals = []
            for j in feat_idx:
                try:
                    v = float(row[j])
                except ValueError:
                    raise DatasetError(
                        f"{path}: non-numeric value {row[j]!r} at line {lineno}, column {header[j]!r}"
                    ) from None
                if not np.isfinite(v):
                    raise DatasetError(f"{path}: non-finite value at line {lineno}, column {header[j]!r}")
                vals.append(v)
            rows.append(vals)
            if lab_idx is not None:
                labels.append(row[lab_idx].strip())
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(feat_idx))
    if lab_idx is None:
        return RawDataset(X, None, name)
    y, names = _encode_labels(labels)
    return RawDataset(X, y, name, names)


def _load_binary(path, name):
    path = Path(path)
    sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        raise DatasetError(f"{path}: missing sidecar {sidecar.name}")
    meta = json.loads(sidecar.read_text())
    rows, cols = int(meta["rows"]), int(meta["cols"])
    X = np.fromfile(path, dtype="<f4")
    if X.size != rows * cols:
        raise DatasetError(f"{path}: {X.size} floats, sidecar says {rows} x {cols}")
    X = X.reshape(rows, cols).astype(np.float64)
    labels = names = None
    if meta.get("labels"):
        lab_path = Path(meta["labels"])
        if not lab_path.is_absolute():
            lab_path = path.parent / lab_path
        raw = [ln.strip() for ln in lab_path.read_text().splitlines() if ln.strip()]
        labels, names = _encode_labels(raw)
    return RawDataset(X, labels, name, names)


def load_dataset(path, format=None, label_col=None, unlabeled=False, name=None) -> RawDataset:
    """Load a headered CSV or a little-endian float32 ``.f32`` matrix.

    The binary format needs a JSON sidecar next to it (same stem, ``.json``)
    holding ``{"rows": n, "cols": d}`` and optionally ``"labels"``, a path to
    a text file with one label per line.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if format is None:
        format = "binary-matrix" if path.suffix == ".f32" else "csv"
    name = name or path.stem
    if format == "csv":
        return _load_csv(path, label_col, unlabeled, name)
    if format in ("binary-matrix", "f32", "binary"):
        return _load_binary(path, name)
    raise DatasetError(f"unknown format {format!r}")


def save_binary(path, X, labels=None):
    """Write ``X`` in the ``.f32`` format read by :func:`load_dataset`."""
    path = Path(path)
    np.ascontiguousarray(X, dtype="<f4").tofile(path)
    meta = {"rows": int(X.shape[0]), "cols": int(X.shape[1])}
    if labels is not None:
        lab_path = path.with_suffix(".labels.txt")
        lab_path.write_text("".join(f"{v}\n" for v in labels))
        meta["labels"] = lab_path.name
    path.with_suffix(".json").write_text(json.dumps(meta))


def minmax_normalize(X):
    """Map every column affinely onto [0, 1]; constant columns become 0."""
    X = np.asarray(X, dtype=np.float64)
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    safe = np.where(span > 0, span, 1.0)
    out = (X - lo) / safe
    out[:, span == 0] = 0.0
    return out


def pca_reduce(X, target, return_components=False):
    """Project onto the leading ``min(target, D)`` principal components.

    Uses a symmetric eigendecomposition of the covariance matrix. Each
    component is sign-fixed so its largest-magnitude loading is positive.
    When ``D <= target`` the data is returned as is.

    Returns
    -------
    Y : ndarray of shape (n, min(target, D))
    components : ndarray of shape (D, min(target, D)), only if requested
    """
    X = np.asarray(X, dtype=np.float64)
    n, D = X.shape
    if n < 2:
        raise ValueError("PCA needs at least two samples")
    if target < 1:
        raise ValueError("target must be >= 1")
    if D <= target:
        return (X.copy(), np.eye(D)) if return_components else X.copy()
    Xc = X - X.mean(axis=0)
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:target]
    comps = evecs[:, order]
    pivot = np.argmax(np.abs(comps), axis=0)
    signs = np.sign(comps[pivot, np.arange(comps.shape[1])])
    signs[signs == 0] = 1.0
    comps = comps * signs
    Y = Xc @ comps
    return (Y, comps) if return_components else Y


def preprocess(ds: RawDataset, cfg: PreprocessConfig = PreprocessConfig()) -> DataMatrix:
    Xn = minmax_normalize(ds.features)
    triggered = ds.D > cfg.trigger_dim or ds.n > cfg.trigger_n
    # a trigger fired by n alone is a no-op when D is already small
    if triggered and ds.D > cfg.trigger_dim and ds.D > cfg.pca_target:
        return DataMatrix(pca_reduce(Xn, cfg.pca_target), ds.name, True, ds.D)
    return DataMatrix(Xn, ds.name, False, ds.D)
