"""Sample-to-landmark fuzzy graph and the directed optimisation edge list.

Every sample is linked to its ``k`` nearest landmarks with an adaptive
membership ``exp(-max(d - rho, 0) / sigma)``, where ``rho`` is the distance
to the nearest landmark and ``sigma`` is calibrated so each row sums to
``log2(k)``. Because landmarks are themselves samples, each nonzero
membership ``B[i, p]`` becomes two directed edges on the sample index set.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numba
import numpy as np
import scipy.sparse as sp

from .landmarks import LandmarkSet

SMOOTH_K_TOLERANCE = 1e-5
MIN_K_DIST_SCALE = 1e-3
BRACKET_SCALE = 1e3
ROW_SUM_TOLERANCE = 1e-3

ROLE_DATA = 0
ROLE_LANDMARK = 1


@dataclass(frozen=True)
class NeighborTable:
    """``indices[i]`` are landmark slots sorted by distance (ties: lower slot first)."""

    indices: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.indices.shape[1]


@dataclass(frozen=True)
class BipartiteGraph:
    B: sp.csr_matrix
    k: int
    rho: np.ndarray
    sigma: np.ndarray
    degenerate: np.ndarray

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.B.sum(axis=1)).ravel()


@dataclass(frozen=True)
class DirectedEdgeList:
    head: np.ndarray
    tail: np.ndarray
    weight: np.ndarray
    role: np.ndarray  # ROLE_DATA / ROLE_LANDMARK, the role of the head

    def __len__(self):
        return self.head.size

    def with_roles(self, role) -> "DirectedEdgeList":
        return DirectedEdgeList(self.head, self.tail, self.weight, np.asarray(role, dtype=np.int8))


class Calibration(NamedTuple):
    rho: float
    sigma: float
    degenerate: bool


@numba.njit(parallel=True, cache=True)
def _knn_exact(X, lm_idx, slot_of, k):
    n, dim = X.shape
    m = lm_idx.shape[0]
    out_i = np.empty((n, k), dtype=np.int64)
    out_d = np.empty((n, k), dtype=np.float64)
    for i in numba.prange(n):
        best_d = np.full(k, np.inf)
        best_i = np.full(k, -1, dtype=np.int64)
        own = slot_of[i]
        for p in range(m):
            if p == own:
                continue
            q = lm_idx[p]
            acc = 0.0
            for j in range(dim):
                t = X[i, j] - X[q, j]
                acc += t * t
            if acc >= best_d[k - 1]:
                continue
            # scanning p in ascending order keeps equal distances in slot order
            pos = k - 1
            while pos > 0 and acc < best_d[pos - 1]:
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = acc
            best_i[pos] = p
        for j in range(k):
            out_i[i, j] = best_i[j]
            out_d[i, j] = np.sqrt(best_d[j])
    return out_i, out_d


def knn_to_landmarks(X, landmarks: LandmarkSet, k: int) -> NeighborTable:
    """Exact Euclidean k nearest landmarks for every sample (brute force).

    A sample never counts itself as a neighbour when it is also a landmark.
    """
    X = np.ascontiguousarray(getattr(X, "values", X), dtype=np.float64)
    if k <= 0:
        raise ValueError("k must be positive")
    if X.shape[0] != landmarks.n:
        raise ValueError("landmark set was drawn for a different n")
    if k > landmarks.m - 1:
        raise ValueError(f"k={k} too large for m={landmarks.m} landmarks (self-pairs are excluded)")
    idx, dist = _knn_exact(X, landmarks.indices, landmarks.slot_of_sample(), k)
    return NeighborTable(idx, dist)


@numba.njit(cache=True, error_model="numpy")
def _row_sum(dists, rho, sigma):
    s = 0.0
    for j in range(dists.shape[0]):
        t = dists[j] - rho
        if t > 0.0:
            s += np.exp(-t / sigma)
        else:
            s += 1.0
    return s


@numba.njit(cache=True, error_model="numpy")
def _calibrate_row(dists, target, tol, max_iter):
    k = dists.shape[0]
    rho = dists[0]
    mean_d = 0.0
    mean_gap = 0.0
    for j in range(k):
        mean_d += dists[j]
        mean_gap += dists[j] - rho
    mean_d /= k
    mean_gap /= k
    sigma_min = max(MIN_K_DIST_SCALE * mean_d, 1e-300)
    if mean_gap <= 0.0:
        return rho, sigma_min, True
    lo = 0.0
    hi = BRACKET_SCALE * mean_gap
    mid = 0.5 * hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        psum = _row_sum(dists, rho, mid)
        if abs(psum - target) < tol:
            break
        if psum > target:
            hi = mid
        else:
            lo = mid
    degenerate = False
    if mid < sigma_min:
        mid = sigma_min
        degenerate = True
    if abs(_row_sum(dists, rho, mid) - target) > ROW_SUM_TOLERANCE:
        degenerate = True
    return rho, mid, degenerate


@numba.njit(parallel=True, cache=True, error_model="numpy")
def _calibrate_all(distances, target, tol, max_iter):
    n = distances.shape[0]
    rho = np.empty(n)
    sigma = np.empty(n)
    flag = np.zeros(n, dtype=np.bool_)
    for i in numba.prange(n):
        r, s, f = _calibrate_row(distances[i], target, tol, max_iter)
        rho[i] = r
        sigma[i] = s
        flag[i] = f
    return rho, sigma, flag


def _check_k(k):
    if k < 2:
        raise ValueError("k must be >= 2: the log2(k) row-sum target is degenerate for k=1")


def calibrate_smooth_knn(row_distances, k=None, tol=SMOOTH_K_TOLERANCE, max_iter=64) -> Calibration:
    """Bisection for the bandwidth of one row.

    ``rho`` is the nearest distance and ``sigma`` solves
    ``sum_p exp(-max(d_p - rho, 0) / sigma) = log2(k)`` to within ``tol``.
    When the target cannot be reached (too many distances tie with ``rho``)
    sigma is clamped to ``1e-3 * mean(d)`` and the row is flagged degenerate.
    """
    d = np.ascontiguousarray(row_distances, dtype=np.float64)
    k = d.size if k is None else k
    _check_k(k)
    if d.size != k:
        raise ValueError("expected k distances")
    if np.any(np.diff(d) < 0) or d[0] < 0:
        raise ValueError("distances must be non-negative and sorted ascending")
    rho, sigma, flag = _calibrate_row(d, np.log2(k), tol, max_iter)
    return Calibration(float(rho), float(sigma), bool(flag))


def calibrate_rows(distances, k=None, tol=SMOOTH_K_TOLERANCE, max_iter=64):
    """Vectorised :func:`calibrate_smooth_knn`; returns ``(rho, sigma, degenerate)``."""
    D = np.ascontiguousarray(distances, dtype=np.float64)
    k = D.shape[1] if k is None else k
    _check_k(k)
    return _calibrate_all(D, np.log2(k), tol, max_iter)


def membership_weights(distances, rho, sigma):
    gap = np.maximum(distances - rho[:, None], 0.0)
    return np.exp(-gap / sigma[:, None])


def compute_memberships(nt: NeighborTable, calib, m: int) -> BipartiteGraph:
    """Assemble the sparse n x m membership matrix from a calibrated table.

    ``calib`` is the ``(rho, sigma, degenerate)`` triple of :func:`calibrate_rows`.
    """
    rho, sigma, degenerate = calib
    n, k = nt.indices.shape
    w = membership_weights(nt.distances, rho, sigma)
    indptr = np.arange(0, n * k + 1, k, dtype=np.int64)
    B = sp.csr_matrix((w.ravel(), nt.indices.ravel(), indptr), shape=(n, m))
    B.eliminate_zeros()
    B.sort_indices()
    return BipartiteGraph(B, k, np.asarray(rho), np.asarray(sigma), np.asarray(degenerate, dtype=bool))


def build_bipartite_graph(X, landmarks: LandmarkSet, k: int, tol=SMOOTH_K_TOLERANCE, max_iter=64):
    nt = knn_to_landmarks(X, landmarks, k)
    calib = calibrate_rows(nt.distances, k, tol, max_iter)
    return compute_memberships(nt, calib, landmarks.m), nt


def to_sample_matrix(graph: BipartiteGraph, landmarks: LandmarkSet) -> sp.csr_matrix:
    """Re-index the columns of B from landmark slots to sample indices (n x n)."""
    coo = graph.B.tocoo()
    A = sp.csr_matrix((coo.data, (coo.row, landmarks.indices[coo.col])), shape=(graph.n, graph.n))
    A.sort_indices()
    return A


def fuzzy_union(A: sp.spmatrix) -> sp.csr_matrix:
    """Probabilistic t-conorm symmetrisation ``A + A^T - A * A^T``."""
    A = sp.csr_matrix(A)
    At = A.T.tocsr()
    S = (A + At - A.multiply(At)).tocsr()
    S.eliminate_zeros()
    S.sort_indices()
    return S


def build_edge_list(graph: BipartiteGraph, landmarks: LandmarkSet, mode: str = "duplicate") -> DirectedEdgeList:
    """Expand the memberships into directed optimisation edges.

    ``mode="duplicate"``: each nonzero ``B[i, p]`` yields ``(i, pi(p))`` in the
    data role and ``(pi(p), i)`` in the landmark role, both with weight
    ``B[i, p]``. ``mode="union"``: the sample-indexed matrix is symmetrised by
    fuzzy union first and every nonzero becomes one data-role edge (used for
    the m = n equivalence check).
    """
    if mode == "duplicate":
        coo = graph.B.tocoo()
        i = coo.row.astype(np.int64)
        j = landmarks.indices[coo.col].astype(np.int64)
        w = coo.data.astype(np.float64)
        keep = (i != j) & (w > 0)
        i, j, w = i[keep], j[keep], w[keep]
        head = np.concatenate([i, j])
        tail = np.concatenate([j, i])
        role = np.concatenate([np.full(i.size, ROLE_DATA, np.int8), np.full(i.size, ROLE_LANDMARK, np.int8)])
        return DirectedEdgeList(head, tail, np.concatenate([w, w]), role)
    if mode == "union":
        S = fuzzy_union(to_sample_matrix(graph, landmarks)).tocoo()
        keep = (S.row != S.col) & (S.data > 0)
        return DirectedEdgeList(
            S.row[keep].astype(np.int64),
            S.col[keep].astype(np.int64),
            S.data[keep].astype(np.float64),
            np.full(int(keep.sum()), ROLE_DATA, np.int8),
        )
    raise ValueError(f"unknown edge mode {mode!r}")


def calibration_report(graph: BipartiteGraph, tol: float = ROW_SUM_TOLERANCE) -> dict:
    sums = graph.row_sums()
    ok = np.abs(sums - np.log2(graph.k)) <= tol
    return {
        "rows": int(sums.size),
        "rows_within_tol": int(ok.sum()),
        "fraction_within_tol": float(ok.mean()),
        "flagged": int(graph.degenerate.sum()),
        "unflagged_violations": int((~ok & ~graph.degenerate).sum()),
    }
