"""Materialise the benchmark datasets that ship inside PyPI packages as CSV.

The datasets are read straight out of downloaded distribution archives (no
install), then written to ``data/<name>.csv`` with a trailing ``label``
column plus a ``data/manifest.json`` usable by ``fastumap bench``.

    python scripts/prepare_datasets.py [--out data]

Sources
-------
wine      scikit-learn's bundled copy of UCI Wine (178 x 13)
breast    MASS ``biopsy`` via ``pydataset`` (UCI Breast Cancer Wisconsin
          original, 699 x 9; 16 missing ``V6`` cells filled with the column
          median)
mfeat     UCI Multiple Features via ``mvlearn`` (2000 x 649, six views)
spambase  KEEL copy of UCI Spambase via ``keel-ds`` (4597 x 57)
"""
import argparse
import csv
import io
import json
import subprocess
import sys
import tarfile
import tempfile
import zipfile
from pathlib import Path

import numpy as np

MFEAT_VIEWS = ["fou", "fac", "kar", "pix", "zer", "mor"]


def _download(package, dest):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "-q", package, "-d", str(dest)],
        check=True,
    )
    stem = package.replace("-", "_").lower()
    for p in sorted(Path(dest).iterdir()):
        if p.name.replace("-", "_").lower().startswith(stem):
            return p
    raise FileNotFoundError(package)


def _write(out, name, X, y):
    path = out / f"{name}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{j}" for j in range(X.shape[1])] + ["label"])
        for row, lab in zip(X, y):
            w.writerow([repr(float(v)) for v in row] + [lab])
    print(f"{name}: {X.shape[0]} x {X.shape[1]} -> {path}")
    return {"name": name, "path": path.name, "format": "csv", "label_col": "label"}


def wine():
    from sklearn.datasets import load_wine

    d = load_wine()
    return d.data, d.target


def breast(tmp):
    sdist = _download("pydataset", tmp)
    with tarfile.open(sdist) as outer:
        member = next(m for m in outer.getmembers() if m.name.endswith("resources.tar.gz"))
        inner = tarfile.open(fileobj=io.BytesIO(outer.extractfile(member).read()))
        raw = inner.extractfile("resources/rdata/csv/MASS/biopsy.csv").read().decode()
    rows = list(csv.reader(io.StringIO(raw)))[1:]
    X = np.array([[np.nan if v == "NA" else float(v) for v in r[2:11]] for r in rows])
    med = np.nanmedian(X, axis=0)
    X = np.where(np.isnan(X), med, X)
    y = [r[11] for r in rows]
    return X, y


def mfeat(tmp):
    whl = zipfile.ZipFile(_download("mvlearn", tmp))
    blocks, labels = [], None
    for view in MFEAT_VIEWS:
        raw = whl.read(f"mvlearn/datasets/UCImultifeature/mfeat-{view}.csv").decode()
        arr = np.loadtxt(io.StringIO(raw), delimiter=",", skiprows=1)
        blocks.append(arr[:, :-1])
        lab = arr[:, -1].astype(int)
        assert labels is None or np.array_equal(labels, lab)
        labels = lab
    return np.hstack(blocks), labels


def spambase(tmp):
    whl = zipfile.ZipFile(_download("keel-ds", tmp))
    raw = whl.read("keel_ds/data/balanced/raw/spambase.dat").decode()
    arr = np.loadtxt(io.StringIO(raw), delimiter=",")
    return arr[:, :-1], arr[:, -1].astype(int)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    with tempfile.TemporaryDirectory() as tmp:
        manifest.append(_write(out, "wine", *wine()))
        manifest.append(_write(out, "breast", *breast(tmp)))
        manifest.append(_write(out, "mfeat", *mfeat(tmp)))
        manifest.append(_write(out, "spambase", *spambase(tmp)))
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
