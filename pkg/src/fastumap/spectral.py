"""Reduced spectral warm start on the landmark side.

``W = B^T D_x^{-1} B`` is the landmark affinity obtained by a two-step walk
landmark -> sample -> landmark; ``M = D_l^{-1/2} W D_l^{-1/2}`` is its
normalised form. The eigenvector of ``M`` for eigenvalue 1 is known in closed
form (``D_l^{1/2} 1``), so it is projected out exactly and the next two
eigenvectors are found by a thick-restart Lanczos iteration that only touches
``M`` through sparse products with ``B``. Every sample then receives the
membership-weighted average of its landmarks' spectral coordinates.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

DENSE_MAX_M = 512


class EigensolverError(RuntimeError):
    def __init__(self, message, best_residual):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


@dataclass(frozen=True)
class LandmarkAffinity:
    W: sp.csr_matrix
    Dx: np.ndarray
    Dl: np.ndarray
    B: Optional[sp.csr_matrix] = None

    @property
    def m(self) -> int:
        return self.W.shape[0]

    def trivial_vector(self) -> np.ndarray:
        v = np.sqrt(self.Dl)
        return v / np.linalg.norm(v)

    def operator(self) -> Callable[[np.ndarray], np.ndarray]:
        """Return ``v -> M v`` (works on vectors and column blocks)."""
        if np.any(self.Dl <= 0):
            p = int(np.flatnonzero(self.Dl <= 0)[0])
            raise ValueError(f"landmark slot {p} has zero degree; restrict to a connected component first")
        s = 1.0 / np.sqrt(self.Dl)
        if self.B is not None:
            B, Bt, inv_dx = self.B, self.B.T.tocsr(), 1.0 / self.Dx

            def mv(v):
                sv = (s * v.T).T
                t = B @ sv
                t = (inv_dx * t.T).T
                return (s * (Bt @ t).T).T

        else:
            W = self.W

            def mv(v):
                return (s * (W @ ((s * v.T).T)).T).T

        return mv

    def dense_operator(self) -> np.ndarray:
        s = 1.0 / np.sqrt(self.Dl)
        Wd = self.W.toarray()
        M = s[:, None] * Wd * s[None, :]
        return 0.5 * (M + M.T)


@dataclass(frozen=True)
class EigensolverConfig:
    max_iter: int = 20000  # cap on operator applications
    residual_tol: float = 1e-9
    seed: int = 0
    method: str = "auto"  # auto | lanczos | dense
    max_basis: int = 64

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.method not in ("auto", "lanczos", "dense"):
            raise ValueError(f"unknown eigensolver method {self.method!r}")


@dataclass(frozen=True)
class SpectralBasis:
    U: np.ndarray
    eigenvalues: np.ndarray
    residuals: np.ndarray
    n_matvec: int = 0
    method: str = "dense"


@dataclass
class SpectralInit:
    U: np.ndarray
    eigenvalues: np.ndarray
    projection: np.ndarray
    n_components: int
    info: dict = field(default_factory=dict)


def landmark_affinity(graph) -> LandmarkAffinity:
    """Form ``W = B^T diag(B 1)^{-1} B`` with sparse products."""
    B = sp.csr_matrix(getattr(graph, "B", graph), dtype=np.float64)
    Dx = np.asarray(B.sum(axis=1)).ravel()
    if np.any(Dx <= 0):
        i = int(np.flatnonzero(Dx <= 0)[0])
        raise ValueError(f"sample {i} has no landmark memberships")
    W = (B.T @ sp.diags(1.0 / Dx) @ B).tocsr()
    W = 0.5 * (W + W.T)
    W.sort_indices()
    Dl = np.asarray(W.sum(axis=1)).ravel()
    return LandmarkAffinity(W.tocsr(), Dx, Dl, B)


def _fix_signs(U):
    U = np.array(U, copy=True)
    for j in range(U.shape[1]):
        p = int(np.argmax(np.abs(U[:, j])))
        if U[p, j] < 0:
            U[:, j] = -U[:, j]
    return U


def _orthogonalize(w, basis, locked):
    for _ in range(2):
        if locked is not None:
            w = w - locked @ (locked.T @ w)
        if basis.shape[1]:
            w = w - basis @ (basis.T @ w)
    return w


def lanczos_top(matvec, dim, nev, tol, max_iter, seed=0, max_basis=64, locked=None):
    """Largest ``nev`` eigenpairs of a symmetric operator by thick-restart Lanczos.

    Full reorthogonalisation is used throughout, and the Rayleigh quotient
    matrix is formed explicitly from stored operator products, so restarts
    simply keep the leading Ritz vectors and continue the Krylov expansion
    from the last residual direction.

    Parameters
    ----------
    matvec : callable
        ``v -> A v`` for a symmetric ``A``; also applied to (dim, j) blocks.
    dim : int
        Operator dimension.
    nev : int
        Number of algebraically largest eigenpairs wanted.
    tol : float
        Required 2-norm residual ``||A u - lambda u||`` of every returned pair.
    max_iter : int
        Budget of operator applications.
    locked : ndarray of shape (dim, l), optional
        Orthonormal vectors to deflate (the search runs in their complement).

    Returns
    -------
    vals, vecs, residuals, n_matvec
    """
    n_locked = 0 if locked is None else locked.shape[1]
    free = dim - n_locked
    if nev > free:
        raise ValueError("not enough dimensions left after deflation")
    p = min(free, max(max_basis, 2 * nev + 8))
    keep = min(p - 1, nev + max(4, (p - nev) // 3)) if p > nev else nev
    rng = np.random.default_rng(seed)
    V = np.empty((dim, p))
    AV = np.empty((dim, p))
    v = _orthogonalize(rng.standard_normal(dim), V[:, :0], locked)
    v /= np.linalg.norm(v)
    j = 0
    n_mv = 0
    best = np.inf
    while True:
        while j < p:
            V[:, j] = v
            w = matvec(v)
            n_mv += 1
            AV[:, j] = w
            j += 1
            if j >= free:
                break
            w = _orthogonalize(w, V[:, :j], locked)
            nrm = np.linalg.norm(w)
            if nrm < 1e-12:
                # invariant subspace: continue with a fresh random direction
                w = _orthogonalize(rng.standard_normal(dim), V[:, :j], locked)
                nrm = np.linalg.norm(w)
            v = w / nrm
        H = V[:, :j].T @ AV[:, :j]
        H = 0.5 * (H + H.T)
        theta, S = np.linalg.eigh(H)
        order = np.argsort(theta)[::-1]
        theta, S = theta[order], S[:, order]
        Y = V[:, :j] @ S[:, :nev]
        AY = matvec(Y)
        n_mv += nev
        res = np.linalg.norm(AY - Y * theta[:nev], axis=0)
        best = min(best, float(res.max()))
        if np.all(res <= tol) or j >= free:
            if not np.all(res <= tol):
                raise EigensolverError("Krylov space exhausted before convergence", best)
            return theta[:nev], Y, res, n_mv
        if n_mv >= max_iter:
            raise EigensolverError(f"no convergence within {max_iter} operator applications", best)
        # restart: keep leading Ritz vectors, resume from the last direction
        nk = min(keep, j - 1)
        V[:, :nk] = V[:, :j] @ S[:, :nk]
        AV[:, :nk] = AV[:, :j] @ S[:, :nk]
        j = nk
        w = _orthogonalize(v, V[:, :j], locked)
        v = w / np.linalg.norm(w)


def top_nontrivial_eigenvectors(aff: LandmarkAffinity, cfg: EigensolverConfig = EigensolverConfig(), n_components: int = 2) -> SpectralBasis:
    """Leading eigenpairs of ``M`` after removing the trivial pair.

    The returned columns are orthonormal, orthogonal to ``D_l^{1/2} 1`` and
    sign-fixed so the largest-magnitude entry of each is positive.
    """
    m = aff.m
    if m - 1 < n_components:
        raise ValueError(f"need at least {n_components + 1} landmarks, got {m}")
    v0 = aff.trivial_vector()[:, None]
    method = cfg.method
    if method == "auto":
        method = "dense" if m <= DENSE_MAX_M else "lanczos"
    mv = aff.operator()
    if method == "dense":
        M = aff.dense_operator()
        P = np.eye(m) - v0 @ v0.T
        evals, evecs = np.linalg.eigh(P @ M @ P)
        order = np.argsort(evals)[::-1][:n_components]
        vals, U = evals[order], evecs[:, order]
        U = U - v0 @ (v0.T @ U)
        U, _ = np.linalg.qr(U)
        vals = np.einsum("ij,ij->j", U, mv(U))
        n_mv = 0
    else:
        vals, U, _, n_mv = lanczos_top(
            mv, m, n_components, cfg.residual_tol, cfg.max_iter, cfg.seed, cfg.max_basis, locked=v0
        )
    U = _fix_signs(U)
    res = np.linalg.norm(mv(U) - U * vals, axis=0)
    if np.any(res > cfg.residual_tol) and method == "lanczos":
        raise EigensolverError("residual above tolerance", float(res.max()))
    return SpectralBasis(U, np.asarray(vals), res, n_mv, method)


def nystrom_project(graph, U) -> np.ndarray:
    """``diag(B 1)^{-1} B U``: each sample averages its landmarks' coordinates."""
    B = sp.csr_matrix(getattr(graph, "B", graph))
    Dx = np.asarray(B.sum(axis=1)).ravel()
    return np.asarray(B @ U) / Dx[:, None]


def scale_init(Z, radius: float = 10.0, jitter: float = 1e-4, seed: int = 0) -> np.ndarray:
    """Rescale so the largest absolute coordinate equals ``radius``, then add jitter."""
    Z = np.asarray(Z, dtype=np.float64)
    if not np.all(np.isfinite(Z)):
        raise ValueError("initial layout contains non-finite values")
    rng = np.random.default_rng(seed)
    noise = rng.normal(scale=jitter, size=Z.shape) if jitter > 0 else np.zeros_like(Z)
    peak = np.abs(Z).max()
    if peak == 0 or np.all(Z == Z[0]):
        warnings.warn("degenerate initial layout (all rows identical); using jitter only", RuntimeWarning)
        return noise
    return Z * (radius / peak) + noise


def random_init(n: int, radius: float = 10.0, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-radius, radius, size=(n, 2))


def spectral_init(graph, cfg: EigensolverConfig = EigensolverConfig(), seed: int = 0) -> SpectralInit:
    """Full warm-start stage: affinity, eigenvectors, projection.

    When the landmark graph is disconnected the largest component is embedded
    spectrally; the landmarks of every other component are parked around a
    seeded random offset inside the box spanned by that basis.
    """
    aff = landmark_affinity(graph)
    adj = aff.W.copy()
    adj.data = np.ones_like(adj.data)
    n_comp, labels = connected_components(adj, directed=False)
    info = {"n_components": int(n_comp)}
    if n_comp == 1:
        basis = top_nontrivial_eigenvectors(aff, cfg)
        U = basis.U
    else:
        sizes = np.bincount(labels)
        big = int(np.argmax(sizes))
        cols = np.flatnonzero(labels == big)
        Bsub = aff.B[:, cols]
        rows = np.flatnonzero(np.diff(Bsub.indptr) > 0)
        basis = top_nontrivial_eigenvectors(landmark_affinity(Bsub[rows]), cfg)
        U = np.empty((aff.m, basis.U.shape[1]))
        U[cols] = basis.U
        span = float(np.abs(basis.U).max())
        rng = np.random.default_rng(seed)
        attached = 0
        for c in range(n_comp):
            if c == big:
                continue
            members = np.flatnonzero(labels == c)
            centre = rng.uniform(-span, span, size=U.shape[1])
            U[members] = centre + rng.normal(scale=1e-3 * span, size=(members.size, U.shape[1]))
            attached += int(aff.Dl[members].sum() > 0)
        if attached:
            warnings.warn(
                f"landmark graph has {n_comp} components; only the largest ({cols.size} landmarks) "
                "was embedded spectrally",
                RuntimeWarning,
            )
    info.update(n_matvec=basis.n_matvec, method=basis.method, residuals=basis.residuals.tolist())
    return SpectralInit(U, basis.eigenvalues, nystrom_project(aff.B, U), int(n_comp), info)
