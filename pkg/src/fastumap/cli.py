"""Command-line front end: ``fastumap {embed,bench,sweep,ablate,check-equivalence}``.

Settings come from built-in defaults, then an optional ``--config`` file
(JSON or YAML, keys named like :class:`FastUMAPConfig` fields), then the
command-line flags; later sources win.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._threads import THREADS_ENV, set_threads
from .dataset_io import DatasetError, PreprocessConfig, load_dataset, preprocess
from .evaluation import (
    BENCHMARK_CONFIG,
    ablation_grid,
    benchmark_suite,
    equivalence_check,
    knn_accuracy,
    load_manifest,
    r_sweep,
    timed_run,
)
from .graph import calibration_report
from .landmarks import DEFAULT_CAP
from .pipeline import FastUMAPConfig

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

# flag dest -> FastUMAPConfig field
_FIELD_FLAGS = {
    "landmarks": "n_landmarks",
    "landmark_ratio": "landmark_ratio",
    "landmark_cap": "landmark_cap",
    "n_neighbors": "n_neighbors",
    "init": "init",
    "eig_tol": "eig_tol",
    "eig_max_iter": "eig_max_iter",
    "epochs": "epochs",
    "lr": "learning_rate",
    "neg_rate": "negative_rate",
    "min_dist_data": "min_dist_data",
    "min_dist_landmark": "min_dist_landmark",
    "spread": "spread",
    "force_mode": "force_mode",
    "deterministic": "deterministic",
    "seed": "seed",
}
_PREP_KEYS = ("pca_target", "trigger_dim", "trigger_n")


class ConfigError(ValueError):
    pass


_NO_CAP = -1


def _cap(text):
    # None already means "flag not given", so "no cap" needs its own marker
    if text.lower() in ("none", "0", "off"):
        return _NO_CAP
    return int(text)


def _add_pipeline_flags(p):
    p.add_argument("--config", help="JSON or YAML file of config values (flags take precedence)")
    lm = p.add_mutually_exclusive_group()
    lm.add_argument("--landmarks", type=int, help="landmark count m")
    lm.add_argument("--landmark-ratio", type=float, help="landmark ratio r = m/n")
    p.add_argument("--landmark-cap", type=_cap, help=f"cap on the default budget ('none' disables; default {DEFAULT_CAP})")
    p.add_argument("--n-neighbors", type=int, help="k nearest landmarks per sample (default 15)")
    p.add_argument("--init", choices=["spectral", "random"])
    p.add_argument("--eig-tol", type=float)
    p.add_argument("--eig-max-iter", type=int)
    p.add_argument("--epochs", type=int, help="default: 500, or 200 when n >= 10000")
    p.add_argument("--lr", type=float, help="initial learning rate")
    p.add_argument("--neg-rate", type=int, help="negative samples per positive event")
    p.add_argument("--min-dist-data", type=float)
    p.add_argument("--min-dist-landmark", type=float)
    p.add_argument("--spread", type=float)
    p.add_argument("--force-mode", choices=["hetero", "homo"])
    det = p.add_mutually_exclusive_group()
    det.add_argument("--deterministic", dest="deterministic", action="store_true", default=None)
    det.add_argument("--parallel", dest="deterministic", action="store_false")
    p.add_argument("--seed", type=int)
    p.add_argument("--pca-target", type=int)
    p.add_argument("--threads", type=int, help=f"worker threads (env {THREADS_ENV})")


def _add_data_flags(p, positional="dataset"):
    p.add_argument(positional, help="CSV or .f32 dataset file")
    p.add_argument("--format", choices=["csv", "binary-matrix"])
    p.add_argument("--label-col", help="label column name in CSV input (default 'label')")
    p.add_argument("--out", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fastumap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embed one dataset; write coordinates and meta JSON")
    _add_data_flags(p)
    p.add_argument("--unlabeled", action="store_true", help="input has no label column")
    p.add_argument("--eval", action="store_true", help="also record kNN accuracy in the meta file")
    _add_pipeline_flags(p)

    p = sub.add_parser("bench", help="timed runs + kNN accuracy over several datasets")
    p.add_argument("datasets", nargs="*", help="dataset files")
    p.add_argument("--manifest", help="JSON list of {name, path, format, label_col}")
    p.add_argument("--repeats", type=int, default=1, help="runs per dataset; >1 reports warm medians")
    p.add_argument("--out", default=".", help="output directory")
    _add_pipeline_flags(p)

    p = sub.add_parser("sweep", help="accuracy and runtime across landmark ratios")
    _add_data_flags(p)
    p.add_argument("--ratios", default="0.05,0.1,0.3,0.5,0.7", help="comma-separated ratios in (0, 1]")
    _add_pipeline_flags(p)

    p = sub.add_parser("ablate", help="{spectral, random} x {hetero, homo} grid with epoch trace")
    _add_data_flags(p)
    p.add_argument("--trace-fraction", type=float, default=0.25)
    _add_pipeline_flags(p)

    p = sub.add_parser("check-equivalence", help="m = n graph against the full-kNN reference")
    p.add_argument("dataset", nargs="?", help="dataset file (default: synthetic Gaussian blobs)")
    p.add_argument("--n", type=int, default=300, help="synthetic sample count")
    p.add_argument("--dim", type=int, default=8, help="synthetic dimension")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--format", choices=["csv", "binary-matrix"])
    p.add_argument("--label-col")
    p.add_argument("--out", default=".", help="output directory")
    return parser


def _read_config_file(path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml

        data = yaml.safe_load(text) or {}
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return data


def resolve_config(args, base: FastUMAPConfig = FastUMAPConfig(landmark_cap=DEFAULT_CAP)):
    """Merge defaults, the config file and flags into (FastUMAPConfig, PreprocessConfig)."""
    values = base.to_dict()
    prep = {}
    if getattr(args, "config", None):
        try:
            data = _read_config_file(args.config)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        for key, val in data.items():
            if key in values:
                values[key] = val
            elif key in _PREP_KEYS:
                prep[key] = val
            else:
                raise ConfigError(f"unknown config key {key!r}")
    for dest, fld in _FIELD_FLAGS.items():
        val = getattr(args, dest, None)
        if val is None:
            continue
        values[fld] = None if (fld == "landmark_cap" and val == _NO_CAP) else val
        # a landmark flag replaces whichever landmark setting the file made
        if fld == "n_landmarks":
            values["landmark_ratio"] = None
        elif fld == "landmark_ratio":
            values["n_landmarks"] = None
    if getattr(args, "pca_target", None) is not None:
        prep["pca_target"] = args.pca_target
    prep.setdefault("seed", values["seed"])
    try:
        return FastUMAPConfig(**values), PreprocessConfig(**prep)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _load(args):
    ds = load_dataset(args.dataset, args.format, args.label_col, unlabeled=getattr(args, "unlabeled", False))
    return ds


def _meta(args, cfg, prep, **extra):
    meta = {
        "version": __version__,
        "command": args.command,
        "config": cfg.to_dict(),
        "preprocess": prep.__dict__ if prep is not None else None,
        "seed": cfg.seed,
    }
    meta.update(extra)
    return meta


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, default=_jsonable))


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "as_dict"):
        return o.as_dict()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def write_coordinates(path, Z):
    """``index,x,y`` rows with round-trip precision."""
    with open(path, "w", newline="") as fh:
        fh.write("index,x,y\n")
        for i, (x, y) in enumerate(Z[:, :2]):
            fh.write(f"{i},{float(x)!r},{float(y)!r}\n")


def cmd_embed(args, cfg, prep) -> int:
    ds = _load(args)
    X = preprocess(ds, prep)
    emb, t = timed_run(X, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    coords = out / f"{ds.name}.coords.csv"
    write_coordinates(coords, emb.Z)
    extra = {
        "dataset": str(args.dataset),
        "n": X.n,
        "d": X.d,
        "m": emb.meta["m"],
        "pca_applied": X.pca_applied,
        "timings": t.as_dict(),
        "calibration": calibration_report(emb.meta["graph"]),
        "role_counts": emb.meta["role_counts"],
    }
    if emb.meta["spectral"] is not None:
        extra["spectral"] = emb.meta["spectral"].info
    if args.eval and ds.labels is not None:
        extra["knn_accuracy"] = knn_accuracy(emb.Z, ds.labels, seed=cfg.seed).__dict__
    _write_json(out / f"{ds.name}.meta.json", _meta(args, cfg, prep, **extra))
    print(f"wrote {coords} ({X.n} rows) in {t.total_s:.3f}s")
    return EXIT_OK


def cmd_bench(args, cfg, prep) -> int:
    entries = list(args.datasets)
    if args.manifest:
        entries += load_manifest(args.manifest)
    if args.repeats < 1:
        raise ConfigError("--repeats must be >= 1")
    rows = benchmark_suite(entries, cfg, args.out, args.repeats, prep)
    for r in rows:
        print(f"{r['dataset']:>12} n={r['n']} d={r['d']} m={r['m']} acc={r['knn_acc']:.2f} total={r['total_s']:.3f}s")
    return EXIT_OK


def cmd_sweep(args, cfg, prep) -> int:
    try:
        ratios = [float(r) for r in args.ratios.split(",") if r.strip()]
    except ValueError:
        raise ConfigError(f"bad --ratios {args.ratios!r}") from None
    if sorted(set(ratios)) != ratios or any(not 0 < r <= 1 for r in ratios):
        raise ConfigError("--ratios must be strictly increasing values in (0, 1]")
    ds = _load(args)
    if ds.labels is None:
        raise ConfigError("sweep needs labels")
    X = preprocess(ds, prep)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = r_sweep(X, ds.labels, ratios, cfg, out / f"{ds.name}.sweep.csv")
    _write_json(out / f"{ds.name}.sweep.meta.json", _meta(args, cfg, prep, dataset=str(args.dataset), points=res.points))
    for r, m, acc, t in res.points:
        print(f"r={r:<5} m={m:<6} acc={acc:.2f} total={t:.3f}s")
    return EXIT_OK


def cmd_ablate(args, cfg, prep) -> int:
    ds = _load(args)
    if ds.labels is None:
        raise ConfigError("ablate needs labels")
    X = preprocess(ds, prep)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res = ablation_grid(X, ds.labels, cfg, args.trace_fraction, out / f"{ds.name}.ablation.csv", out / f"{ds.name}.trace.csv")
    _write_json(out / f"{ds.name}.ablation.meta.json",
                _meta(args, cfg, prep, dataset=str(args.dataset), cells=res.cells, trace_epoch=res.trace_epoch))
    for c in res.cells:
        print(f"{c['init']:>8} {c['force']:>6} acc={c['knn_acc']:.2f} at-{res.trace_epoch}={c['trace_acc']:.2f} total={c['total_s']:.3f}s")
    return EXIT_OK


def synthetic_blobs(n, dim, seed, centers=5):
    rng = np.random.default_rng(seed)
    c = rng.normal(scale=4.0, size=(centers, dim))
    return c[rng.integers(0, centers, n)] + rng.normal(size=(n, dim))


def cmd_check_equivalence(args) -> int:
    if args.dataset:
        ds = load_dataset(args.dataset, args.format, args.label_col, unlabeled=args.label_col is None)
        X = preprocess(ds, PreprocessConfig(seed=args.seed)).values
    else:
        X = synthetic_blobs(args.n, args.dim, args.seed)
    rep = equivalence_check(X, args.k, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    body = rep.as_dict()
    body.update(version=__version__, dataset=args.dataset or "synthetic-blobs")
    _write_json(out / "equivalence.json", body)
    with open(out / "equivalence.csv", "w") as fh:
        fh.write("n,k,seed,edge_symmetric_difference,max_weight_delta,max_rho_delta,ok\n")
        fh.write(f"{rep.n},{rep.k},{rep.seed},{rep.edge_symmetric_difference},{rep.max_weight_delta!r},{rep.max_rho_delta!r},{rep.ok}\n")
    if rep.error:
        print(rep.error, file=sys.stderr)
        return EXIT_CONFIG
    print(f"n={rep.n} k={rep.k}: {rep.edge_symmetric_difference} differing edges, max weight delta {rep.max_weight_delta:.3g}")
    return EXIT_OK if rep.ok else EXIT_RUNTIME


_COMMANDS = {"embed": cmd_embed, "bench": cmd_bench, "sweep": cmd_sweep, "ablate": cmd_ablate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        set_threads(getattr(args, "threads", None))
        if args.command == "check-equivalence":
            return cmd_check_equivalence(args)
        base = BENCHMARK_CONFIG if args.command == "bench" else FastUMAPConfig(landmark_cap=DEFAULT_CAP)
        cfg, prep = resolve_config(args, base)
        return _COMMANDS[args.command](args, cfg, prep)
    except ConfigError as exc:
        print(f"fastumap: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"fastumap: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as exc:
        # raised while validating inputs against the data (e.g. m > n)
        print(f"fastumap: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"fastumap: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
