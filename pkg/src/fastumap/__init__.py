"""Landmark-based UMAP-style embedding with a Nystrom spectral warm start."""
from . import _threads  # noqa: F401  (threading-layer order)
from .dataset_io import DataMatrix, DatasetError, PreprocessConfig, RawDataset, load_dataset, preprocess
from .evaluation import (
    QualityReport,
    SweepResult,
    ablation_grid,
    benchmark_suite,
    equivalence_check,
    knn_accuracy,
    r_sweep,
    timed_run,
)
from .graph import BipartiteGraph, build_bipartite_graph, build_edge_list, calibrate_smooth_knn
from .landmarks import LandmarkSet, default_landmark_budget, sample_landmarks
from .layout import Embedding, KernelParams, OptimizationError, OptimizerConfig, optimize
from .pipeline import FastUMAPConfig, StageTimings, run_fastumap
from .spectral import EigensolverConfig, EigensolverError, spectral_init

__version__ = "0.1.0"

__all__ = [
    "BipartiteGraph",
    "DataMatrix",
    "DatasetError",
    "EigensolverConfig",
    "EigensolverError",
    "Embedding",
    "FastUMAPConfig",
    "KernelParams",
    "LandmarkSet",
    "OptimizationError",
    "OptimizerConfig",
    "PreprocessConfig",
    "QualityReport",
    "RawDataset",
    "StageTimings",
    "SweepResult",
    "ablation_grid",
    "benchmark_suite",
    "build_bipartite_graph",
    "build_edge_list",
    "calibrate_smooth_knn",
    "default_landmark_budget",
    "equivalence_check",
    "knn_accuracy",
    "load_dataset",
    "optimize",
    "preprocess",
    "r_sweep",
    "run_fastumap",
    "sample_landmarks",
    "spectral_init",
    "timed_run",
]
