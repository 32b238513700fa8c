"""End-to-end pipeline: landmarks -> bipartite graph -> warm start -> SGD."""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._seeds import derive_seed
from .graph import SMOOTH_K_TOLERANCE, build_bipartite_graph, build_edge_list
from .landmarks import budget_from_ratio, default_landmark_budget, sample_landmarks
from .layout import Embedding, KernelParams, OptimizerConfig, default_epochs, optimize
from .spectral import EigensolverConfig, random_init, scale_init, spectral_init


@dataclass(frozen=True)
class FastUMAPConfig:
    # landmarks: at most one of n_landmarks / landmark_ratio
    n_landmarks: Optional[int] = None
    landmark_ratio: Optional[float] = None
    landmark_cap: Optional[int] = None
    # graph
    n_neighbors: int = 15
    edge_mode: str = "duplicate"
    calibration_tol: float = SMOOTH_K_TOLERANCE
    calibration_max_iter: int = 64
    # warm start
    init: str = "spectral"
    init_radius: float = 10.0
    init_jitter: float = 1e-4
    eig_tol: float = 1e-9
    eig_max_iter: int = 20000
    eig_method: str = "auto"
    # forces
    force_mode: str = "hetero"
    min_dist_data: float = 0.1
    min_dist_landmark: float = 0.2
    spread: float = 1.0
    # SGD
    epochs: Optional[int] = None
    learning_rate: float = 1.0
    negative_rate: int = 5
    clip: float = 4.0
    repulsion_eps: float = 1e-3
    move_tail: bool = True
    deterministic: bool = True
    seed: int = 42

    def __post_init__(self):
        if self.n_landmarks is not None and self.landmark_ratio is not None:
            raise ValueError("n_landmarks and landmark_ratio are mutually exclusive")
        if self.init not in ("spectral", "random"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.force_mode not in ("hetero", "homo"):
            raise ValueError(f"unknown force mode {self.force_mode!r}")
        if self.edge_mode not in ("duplicate", "union"):
            raise ValueError(f"unknown edge mode {self.edge_mode!r}")
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be >= 2")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def replace(self, **changes) -> "FastUMAPConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def resolve_landmarks(self, n: int) -> int:
        if self.n_landmarks is not None:
            if not 1 <= self.n_landmarks <= n:
                raise ValueError(f"n_landmarks={self.n_landmarks} outside [1, {n}]")
            return self.n_landmarks
        if self.landmark_ratio is not None:
            return budget_from_ratio(n, self.landmark_ratio)
        return default_landmark_budget(n, cap=self.landmark_cap)

    def resolve_epochs(self, n: int) -> int:
        return self.epochs if self.epochs is not None else default_epochs(n)

    def kernel_params(self) -> KernelParams:
        return KernelParams.from_curves(self.min_dist_data, self.min_dist_landmark, self.spread, self.force_mode)


@dataclass(frozen=True)
class StageTimings:
    graph_s: float
    spectral_s: float
    sgd_s: float
    total_s: float
    n: int = 0
    m: int = 0
    k: int = 0
    epochs: int = 0

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def run_fastumap(X, config: FastUMAPConfig = FastUMAPConfig(), snapshot_epochs=()) -> Embedding:
    """Embed ``X`` (an n x d array or :class:`DataMatrix`) into two dimensions.

    The returned embedding's ``meta`` carries the stage timings, the landmark
    indices, the bipartite graph, the warm start (basis ``U`` and the raw
    projection) and calibration statistics.
    """
    X = np.ascontiguousarray(getattr(X, "values", X), dtype=np.float64)
    n = X.shape[0]
    cfg = config
    kp = cfg.kernel_params()
    t0 = time.perf_counter()

    m = cfg.resolve_landmarks(n)
    landmarks = sample_landmarks(n, m, derive_seed(cfg.seed, "landmarks"))
    graph, neighbors = build_bipartite_graph(X, landmarks, cfg.n_neighbors, cfg.calibration_tol, cfg.calibration_max_iter)
    edges = build_edge_list(graph, landmarks, cfg.edge_mode)
    t1 = time.perf_counter()

    spectral = None
    if cfg.init == "spectral":
        eig = EigensolverConfig(cfg.eig_max_iter, cfg.eig_tol, derive_seed(cfg.seed, "eigensolver"), cfg.eig_method)
        spectral = spectral_init(graph, eig, derive_seed(cfg.seed, "components"))
        Z0 = scale_init(spectral.projection, cfg.init_radius, cfg.init_jitter, derive_seed(cfg.seed, "init"))
    else:
        Z0 = random_init(n, cfg.init_radius, derive_seed(cfg.seed, "init"))
    t2 = time.perf_counter()

    E = cfg.resolve_epochs(n)
    opt = OptimizerConfig(
        epochs=E,
        initial_lr=cfg.learning_rate,
        negative_rate=cfg.negative_rate,
        clip=cfg.clip,
        eps=cfg.repulsion_eps,
        seed=derive_seed(cfg.seed, "sgd"),
        deterministic=cfg.deterministic,
        move_tail=cfg.move_tail,
    )
    emb = optimize(Z0, edges, kp, opt, snapshot_epochs=snapshot_epochs)
    t3 = time.perf_counter()

    timings = StageTimings(t1 - t0, t2 - t1, t3 - t2, t3 - t0, n, m, cfg.n_neighbors, E)
    emb.meta.update(
        config=cfg.to_dict(),
        timings=timings,
        landmarks=landmarks,
        graph=graph,
        neighbors=neighbors,
        edges=edges,
        spectral=spectral,
        n=n,
        m=m,
    )
    return emb
