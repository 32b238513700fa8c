"""Edge-sampled SGD layout with role-dependent low-dimensional kernels.

The low-dimensional similarity is ``phi(d) = 1 / (1 + a d^(2b))``. Each
directed edge carries the role of its head vertex, and the head's role picks
which ``(a, b)`` pair drives both the attractive step along the edge and the
repulsive steps against the negatives drawn for that event.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numba
import numpy as np
from scipy.optimize import least_squares

from .graph import ROLE_DATA, ROLE_LANDMARK, DirectedEdgeList


class OptimizationError(FloatingPointError):
    pass


@dataclass(frozen=True)
class KernelParams:
    a_x: float
    b_x: float
    a_y: float
    b_y: float

    def __post_init__(self):
        if min(self.a_x, self.b_x, self.a_y, self.b_y) <= 0:
            raise ValueError("kernel parameters must be positive")

    @property
    def homogeneous(self) -> bool:
        return (self.a_x, self.b_x) == (self.a_y, self.b_y)

    def arrays(self):
        return np.array([self.a_x, self.a_y]), np.array([self.b_x, self.b_y])

    @classmethod
    def from_curves(cls, min_dist_data=0.1, min_dist_landmark=0.2, spread=1.0, mode="hetero"):
        a_x, b_x = fit_kernel_params(min_dist_data, spread)
        if mode == "homo":
            return cls(a_x, b_x, a_x, b_x)
        if mode != "hetero":
            raise ValueError(f"unknown force mode {mode!r}")
        a_y, b_y = fit_kernel_params(min_dist_landmark, spread)
        return cls(a_x, b_x, a_y, b_y)


@dataclass(frozen=True)
class OptimizerConfig:
    epochs: int = 500
    initial_lr: float = 1.0
    negative_rate: int = 5
    clip: float = 4.0
    eps: float = 1e-3
    seed: int = 0
    negative_distribution: str = "uniform"
    deterministic: bool = True
    move_tail: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.negative_rate < 0:
            raise ValueError("negative_rate must be >= 0")
        if self.initial_lr <= 0 or self.clip <= 0 or self.eps < 0:
            raise ValueError("initial_lr and clip must be positive, eps non-negative")
        if self.negative_distribution != "uniform":
            raise ValueError("only uniform negative sampling is supported")


def default_epochs(n: int) -> int:
    return 200 if n >= 10000 else 500


@dataclass
class Embedding:
    Z: np.ndarray
    Z_init: np.ndarray
    meta: dict = field(default_factory=dict)
    snapshots: dict = field(default_factory=dict)


def fit_kernel_params(min_dist: float, spread: float):
    """Least-squares fit of ``1/(1 + a d^(2b))`` to an offset exponential.

    Target: 1 for ``d <= min_dist``, ``exp(-(d - min_dist)/spread)`` beyond,
    sampled on 300 evenly spaced points of ``(0, 3 spread]``.
    """
    if spread <= 0 or min_dist < 0 or min_dist >= 10 * spread:
        raise ValueError("need spread > 0 and 0 <= min_dist < 10 * spread")
    d = np.linspace(0.0, 3.0 * spread, 301)[1:]
    target = np.where(d <= min_dist, 1.0, np.exp(-(d - min_dist) / spread))

    def resid(p):
        return 1.0 / (1.0 + p[0] * d ** (2.0 * p[1])) - target

    fit = least_squares(resid, x0=[1.0, 1.0], bounds=([1e-8, 1e-8], [np.inf, np.inf]), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if not fit.success:
        raise RuntimeError(f"kernel fit did not converge: {fit.message}")
    return float(fit.x[0]), float(fit.x[1])


def phi(d, a, b):
    d = np.asarray(d, dtype=np.float64)
    return 1.0 / (1.0 + a * d ** (2.0 * b))


@numba.njit(cache=True, inline="always")
def _attract_coeff(d2, a, b):
    if d2 <= 0.0:
        return 0.0
    pb = math.pow(d2, b)
    # d2^(b-1) = d2^b / d2 saves a second pow on the hot path
    return -2.0 * a * b * (pb / d2) / (1.0 + a * pb)


@numba.njit(cache=True, inline="always")
def _repel_coeff(d2, a, b, eps):
    if d2 <= 0.0:
        return 0.0
    return 2.0 * b / ((eps + d2) * (1.0 + a * math.pow(d2, b)))


def _clipped(g, clip):
    return g if clip is None else np.clip(g, -clip, clip)


def attractive_gradient(zu, zv, a, b, clip=None):
    """Descent direction of ``-log phi(||zu - zv||)`` with respect to ``zu``."""
    delta = np.asarray(zu, dtype=np.float64) - np.asarray(zv, dtype=np.float64)
    return _clipped(_attract_coeff(float(delta @ delta), a, b) * delta, clip)


def repulsive_gradient(zu, zneg, a, b, eps=1e-3, clip=None):
    """Descent direction of ``-log(1 - phi(||zu - zneg||))`` with respect to ``zu``.

    ``eps`` is added to the squared distance in the denominator; ``eps=0``
    gives the exact derivative.
    """
    delta = np.asarray(zu, dtype=np.float64) - np.asarray(zneg, dtype=np.float64)
    return _clipped(_repel_coeff(float(delta @ delta), a, b, eps) * delta, clip)


@dataclass(frozen=True)
class SamplingSchedule:
    epochs_per_sample: np.ndarray
    counts: np.ndarray


def epochs_per_sample(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    out = np.full(w.shape, np.inf)
    pos = w > 0
    if pos.any():
        with np.errstate(over="ignore"):
            # subnormal weights overflow to inf and simply never fire
            out[pos] = w.max() / w[pos]
    return out


def build_sampling_schedule(edges, epochs: int) -> SamplingSchedule:
    """Event ``j`` of edge ``e`` fires in epoch ``floor(j * w_max / w_e)``.

    The number of events is therefore ``ceil(E * w_e / w_max)``; max-weight
    edges fire every epoch, zero-weight edges never.
    """
    w = getattr(edges, "weight", edges)
    eps = epochs_per_sample(w)
    counts = np.zeros(eps.shape, dtype=np.int64)
    fin = np.isfinite(eps)
    c = np.ceil(epochs / eps[fin]).astype(np.int64)
    # settle float boundary cases with the exact predicate the kernel uses
    c -= ((c - 1) * eps[fin] >= epochs).astype(np.int64)
    c += (c * eps[fin] < epochs).astype(np.int64)
    counts[fin] = c
    return SamplingSchedule(eps, counts)


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


@numba.njit(cache=True, inline="always")
def _splitmix(x):
    x = (x ^ (x >> _S30)) * _MIX1
    x = (x ^ (x >> _S27)) * _MIX2
    return x ^ (x >> _S31)


@numba.njit(cache=True, inline="always")
def _draw(seed, epoch, e, j, n_edges, gamma, n):
    key = (np.uint64(epoch) * np.uint64(n_edges) + np.uint64(e)) * np.uint64(gamma + 1) + np.uint64(j)
    x = _splitmix(np.uint64(seed) * _GOLDEN + key)
    return np.int64(x % np.uint64(n))


@numba.njit(cache=True, inline="always")
def _clip(g, c):
    if g > c:
        return c
    if g < -c:
        return -c
    return g


@numba.njit(cache=True, inline="always")
def _attract_pair(Z, u, v, a, b, lr, clip, move_tail):
    d2 = 0.0
    for c in range(Z.shape[1]):
        t = Z[u, c] - Z[v, c]
        d2 += t * t
    coeff = _attract_coeff(d2, a, b)
    for c in range(Z.shape[1]):
        g = _clip(coeff * (Z[u, c] - Z[v, c]), clip)
        Z[u, c] += lr * g
        if move_tail:
            Z[v, c] -= lr * g


@numba.njit(cache=True, inline="always")
def _repel_pair(Z, u, w, a, b, lr, clip, eps):
    d2 = 0.0
    for c in range(Z.shape[1]):
        t = Z[u, c] - Z[w, c]
        d2 += t * t
    coeff = _repel_coeff(d2, a, b, eps)
    for c in range(Z.shape[1]):
        Z[u, c] += lr * _clip(coeff * (Z[u, c] - Z[w, c]), clip)


@numba.njit(cache=True, inline="always")
def _event(Z, e, head, tail, role, a, b, gamma, lr, clip, eps, epoch, seed, move_tail, counts):
    u = head[e]
    r = role[e]
    ar = a[r]
    br = b[r]
    _attract_pair(Z, u, tail[e], ar, br, lr, clip, move_tail)
    counts[r, 0] += 1
    n = Z.shape[0]
    for j in range(gamma):
        w = _draw(seed, epoch, e, j, head.shape[0], gamma, n)
        if w == u:
            continue
        _repel_pair(Z, u, w, ar, br, lr, clip, eps)
        counts[r, 1] += 1


@numba.njit(cache=True)
def _epoch_seq(Z, head, tail, role, order, eps_ps, done, a, b, gamma, lr, clip, eps, epoch, seed, move_tail, counts):
    limit = epoch + 1.0
    for t in range(order.shape[0]):
        e = order[t]
        # written as "not <" so that 0 * inf (zero-weight edge) is skipped too
        if not done[e] * eps_ps[e] < limit:
            continue
        done[e] += 1
        _event(Z, e, head, tail, role, a, b, gamma, lr, clip, eps, epoch, seed, move_tail, counts)


@numba.njit(parallel=True, cache=True)
def _epoch_par(Z, head, tail, role, order, eps_ps, done, a, b, gamma, lr, clip, eps, epoch, seed, move_tail, counts):
    # unsynchronised coordinate writes: results are reproducible only in distribution
    limit = epoch + 1.0
    for t in numba.prange(order.shape[0]):
        e = order[t]
        # written as "not <" so that 0 * inf (zero-weight edge) is skipped too
        if not done[e] * eps_ps[e] < limit:
            continue
        done[e] += 1
        _event(Z, e, head, tail, role, a, b, gamma, lr, clip, eps, epoch, seed, move_tail, counts)


def optimize(
    Z_init,
    edges: DirectedEdgeList,
    kp: KernelParams,
    cfg: OptimizerConfig = OptimizerConfig(),
    snapshot_epochs: Iterable[int] = (),
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> Embedding:
    """Refine a layout by edge-sampled SGD with negative sampling.

    Parameters
    ----------
    Z_init : ndarray of shape (n, 2)
        Starting coordinates; not modified.
    edges : DirectedEdgeList
        Positive edges; each fires ``ceil(E * w / w_max)`` times, evenly
        spread over the epochs.
    kp : KernelParams
        ``(a_x, b_x)`` for heads in the data role, ``(a_y, b_y)`` for heads
        in the landmark role.
    cfg : OptimizerConfig
    snapshot_epochs : iterable of int
        Record a copy of the layout after each of these many completed
        epochs (``0`` records the start).
    callback : callable, optional
        Called as ``callback(epochs_done, Z)`` after every epoch.

    Returns
    -------
    Embedding
        ``meta["role_counts"]`` holds attractive/repulsive update counts per
        head role (rows: data, landmark); exact in deterministic mode only.
    """
    Z = np.array(Z_init, dtype=np.float64, copy=True, order="C")
    if Z.ndim != 2 or not np.all(np.isfinite(Z)):
        raise ValueError("Z_init must be a finite 2-D array")
    if len(edges) == 0:
        raise ValueError("edge list is empty")
    n = Z.shape[0]
    head = np.ascontiguousarray(edges.head, dtype=np.int64)
    tail = np.ascontiguousarray(edges.tail, dtype=np.int64)
    if head.max() >= n or tail.max() >= n or min(head.min(), tail.min()) < 0:
        raise ValueError("edge endpoint out of range")
    role = np.ascontiguousarray(edges.role, dtype=np.int64)
    sched = build_sampling_schedule(edges.weight, cfg.epochs)
    eps_ps = sched.epochs_per_sample
    done = np.zeros(head.size, dtype=np.float64)
    a, b = kp.arrays()
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(head.size).astype(np.int64)
    neg_seed = int(rng.integers(0, 2**63 - 1))
    counts = np.zeros((2, 2), dtype=np.int64)
    step = _epoch_seq if cfg.deterministic else _epoch_par
    wanted = set(int(s) for s in snapshot_epochs)
    snapshots = {0: Z.copy()} if 0 in wanted else {}
    E = cfg.epochs
    for epoch in range(E):
        lr = cfg.initial_lr * (1.0 - epoch / E)
        step(Z, head, tail, role, order, eps_ps, done, a, b, cfg.negative_rate, lr, cfg.clip, cfg.eps, epoch, neg_seed, cfg.move_tail, counts)
        if not np.all(np.isfinite(Z)):
            bad = int(np.flatnonzero(~np.isfinite(Z).all(axis=1))[0])
            touching = np.flatnonzero((head == bad) | (tail == bad))[:5]
            raise OptimizationError(f"non-finite coordinates at epoch {epoch} (vertex {bad}, edges {touching.tolist()})")
        if epoch + 1 in wanted:
            snapshots[epoch + 1] = Z.copy()
        if callback is not None:
            callback(epoch + 1, Z)
    meta = {
        "epochs": E,
        "role_counts": counts.tolist(),
        "kernel": {"a_x": kp.a_x, "b_x": kp.b_x, "a_y": kp.a_y, "b_y": kp.b_y},
        "seed": cfg.seed,
        "deterministic": cfg.deterministic,
    }
    return Embedding(Z, np.array(Z_init, dtype=np.float64), meta, snapshots)


__all__ = [
    "ROLE_DATA",
    "ROLE_LANDMARK",
    "Embedding",
    "KernelParams",
    "OptimizationError",
    "OptimizerConfig",
    "SamplingSchedule",
    "attractive_gradient",
    "build_sampling_schedule",
    "default_epochs",
    "epochs_per_sample",
    "fit_kernel_params",
    "optimize",
    "phi",
    "repulsive_gradient",
]
