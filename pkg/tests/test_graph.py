import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fastumap.graph import (
    ROLE_DATA,
    ROLE_LANDMARK,
    NeighborTable,
    build_bipartite_graph,
    build_edge_list,
    calibrate_rows,
    calibrate_smooth_knn,
    calibration_report,
    compute_memberships,
    knn_to_landmarks,
)
from fastumap.landmarks import LandmarkSet, sample_landmarks

# root of 1 + exp(-1/s) + exp(-2/s) = log2(3), from scipy brentq with xtol 1e-15
SIGMA_K3 = 1.1331928143895704


def brute_knn(X, L, k):
    """Exhaustive oracle: all n*m distances, lexsort by (distance, slot)."""
    D = np.sqrt(((X[:, None, :] - X[L.indices][None, :, :]) ** 2).sum(-1))
    slot = L.slot_of_sample()
    for i in range(X.shape[0]):
        if slot[i] >= 0:
            D[i, slot[i]] = np.inf
    idx = np.array([np.lexsort((np.arange(L.m), row))[:k] for row in D])
    return idx, np.take_along_axis(D, idx, axis=1)


def test_hand_example_1d():
    X = np.array([[0.0], [1.0], [3.0]])
    L = LandmarkSet(np.array([0, 2]), 3)
    nt = knn_to_landmarks(X, L, 1)
    assert nt.indices[1, 0] == 0 and nt.distances[1, 0] == 1.0
    # k=2 needs m-1 >= 2 for landmark rows; use a 3-landmark version
    L3 = LandmarkSet(np.array([0, 1, 2]), 3)
    Xq = np.array([[0.0], [3.0], [1.0]])
    nt = knn_to_landmarks(Xq, L3, 2)
    np.testing.assert_array_equal(nt.indices[2], [0, 1])
    np.testing.assert_array_equal(nt.distances[2], [1.0, 2.0])


def test_self_exclusion_when_all_are_landmarks(rng):
    X = rng.normal(size=(50, 3))
    nt = knn_to_landmarks(X, LandmarkSet(np.arange(50), 50), 1)
    D = np.linalg.norm(X[:, None] - X[None], axis=-1)
    np.fill_diagonal(D, np.inf)
    np.testing.assert_array_equal(nt.indices[:, 0], D.argmin(axis=1))


def test_knn_matches_exhaustive_oracle(rng):
    X = rng.random((100, 5))
    L = sample_landmarks(100, 20, 3)
    nt = knn_to_landmarks(X, L, 5)
    idx, dist = brute_knn(X, L, 5)
    np.testing.assert_array_equal(nt.indices, idx)
    np.testing.assert_allclose(nt.distances, dist, rtol=1e-14)


def test_knn_ties_by_lower_slot():
    X = np.array([[0.0], [1.0], [-1.0], [2.0], [-2.0]])
    L = LandmarkSet(np.array([1, 2, 3, 4]), 5)
    nt = knn_to_landmarks(X, L, 3)
    np.testing.assert_array_equal(nt.indices[0], [0, 1, 2])


def test_knn_errors(rng):
    X = rng.random((10, 2))
    L = sample_landmarks(10, 4, 0)
    with pytest.raises(ValueError):
        knn_to_landmarks(X, L, 0)
    with pytest.raises(ValueError):
        knn_to_landmarks(X, L, 4)
    with pytest.raises(ValueError):
        knn_to_landmarks(X[:9], L, 2)


def test_sigma_golden_k3():
    c = calibrate_smooth_knn([1.0, 2.0, 3.0])
    assert c.rho == 1.0 and not c.degenerate
    s = 1 + math.exp(-1 / c.sigma) + math.exp(-2 / c.sigma)
    assert abs(s - math.log2(3)) < 1e-5
    tight = calibrate_smooth_knn([1.0, 2.0, 3.0], tol=1e-13)
    assert tight.sigma == pytest.approx(SIGMA_K3, rel=1e-9)


def test_k3_memberships_from_golden():
    nt = NeighborTable(np.array([[0, 1, 2]]), np.array([[1.0, 2.0, 3.0]]))
    g = compute_memberships(nt, calibrate_rows(nt.distances, tol=1e-13), 3)
    w = g.B.toarray()[0]
    np.testing.assert_allclose(w, [1.0, math.exp(-1 / SIGMA_K3), math.exp(-2 / SIGMA_K3)], rtol=1e-9)
    assert w.sum() == pytest.approx(math.log2(3), abs=1e-9)


def test_all_equal_row_is_degenerate():
    c = calibrate_smooth_knn([2.0, 2.0, 2.0, 2.0])
    assert c.rho == 2.0 and c.degenerate
    assert c.sigma == pytest.approx(2e-3)
    nt = NeighborTable(np.array([[0, 1, 2, 3]]), np.full((1, 4), 2.0))
    g = compute_memberships(nt, calibrate_rows(nt.distances), 4)
    np.testing.assert_array_equal(g.B.toarray()[0], 1.0)
    assert g.degenerate[0]


def test_calibration_rejects_small_k_and_unsorted():
    with pytest.raises(ValueError):
        calibrate_smooth_knn([1.0])
    with pytest.raises(ValueError):
        calibrate_smooth_knn([2.0, 1.0])
    with pytest.raises(ValueError):
        calibrate_rows(np.ones((3, 1)))


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0.0, 100.0), min_size=3, max_size=20).map(sorted),
    st.floats(1e-3, 1e3),
)
def test_scale_invariance_of_weights(d, lam):
    d = np.asarray(d)
    c1 = calibrate_smooth_knn(d, tol=1e-12)
    c2 = calibrate_smooth_knn(lam * d, tol=1e-12)
    if c1.degenerate or c2.degenerate:
        return
    assert c2.sigma == pytest.approx(lam * c1.sigma, rel=1e-6)
    w1 = np.exp(-np.maximum(d - c1.rho, 0) / c1.sigma)
    w2 = np.exp(-np.maximum(lam * d - c2.rho, 0) / c2.sigma)
    np.testing.assert_allclose(w1, w2, atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12))
def test_row_sums_and_max_entry(seed, k):
    r = np.random.default_rng(seed)
    X = r.normal(size=(60, 4))
    L = sample_landmarks(60, 30, seed)
    g, _ = build_bipartite_graph(X, L, k)
    sums = g.row_sums()
    ok = np.abs(sums - math.log2(k)) <= 1e-3
    assert np.all(ok | g.degenerate)
    np.testing.assert_array_equal(g.B.max(axis=1).toarray().ravel(), 1.0)
    assert np.all(np.diff(g.B.indptr) <= k)
    # self-exclusion: landmark rows never link their own slot
    slot = L.slot_of_sample()
    rows = np.flatnonzero(slot >= 0)
    assert np.all(g.B[rows, slot[rows]].A.ravel() == 0)


def test_metric_scale_invariance_of_B(rng):
    X = rng.normal(size=(80, 3))
    L = sample_landmarks(80, 40, 1)
    g1, _ = build_bipartite_graph(X, L, 10, tol=1e-12)
    g2, _ = build_bipartite_graph(7.5 * X, L, 10, tol=1e-12)
    assert abs(g1.B - g2.B).max() <= 1e-8


def test_duplication_rule_single_entry():
    B = sp.csr_matrix(([0.5], ([3], [0])), shape=(8, 1))
    from fastumap.graph import BipartiteGraph

    g = BipartiteGraph(B, 1, np.zeros(8), np.ones(8), np.zeros(8, bool))
    e = build_edge_list(g, LandmarkSet(np.array([7]), 8))
    got = sorted(zip(e.head.tolist(), e.tail.tolist(), e.weight.tolist(), e.role.tolist()))
    assert got == [(3, 7, 0.5, ROLE_DATA), (7, 3, 0.5, ROLE_LANDMARK)]


def test_symmetric_pair_gives_four_edges():
    from fastumap.graph import BipartiteGraph

    B = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    g = BipartiteGraph(B, 1, np.zeros(2), np.ones(2), np.zeros(2, bool))
    e = build_edge_list(g, LandmarkSet(np.arange(2), 2))
    assert len(e) == 4
    assert sorted(e.role.tolist()) == [0, 0, 1, 1]


def test_m_equals_n_edge_count(rng):
    X = rng.normal(size=(40, 3))
    L = LandmarkSet(np.arange(40), 40)
    g, _ = build_bipartite_graph(X, L, 5)
    assert len(build_edge_list(g, L)) == 2 * 40 * 5


def test_edge_list_bijection(rng):
    X = rng.normal(size=(70, 3))
    L = sample_landmarks(70, 25, 2)
    g, _ = build_bipartite_graph(X, L, 6)
    e = build_edge_list(g, L)
    assert len(e) == 2 * g.B.nnz
    assert np.all(e.head != e.tail)
    half = len(e) // 2
    data = sorted(zip(np.minimum(e.head, e.tail)[:half], np.maximum(e.head, e.tail)[:half], e.weight[:half]))
    lm = sorted(zip(np.minimum(e.head, e.tail)[half:], np.maximum(e.head, e.tail)[half:], e.weight[half:]))
    assert data == lm
    coo = g.B.tocoo()
    pairs = sorted(zip(np.minimum(coo.row, L.indices[coo.col]), np.maximum(coo.row, L.indices[coo.col]), coo.data))
    assert data == pairs


def test_union_mode_symmetric(rng):
    X = rng.normal(size=(50, 3))
    L = LandmarkSet(np.arange(50), 50)
    g, _ = build_bipartite_graph(X, L, 5)
    e = build_edge_list(g, L, "union")
    S = sp.csr_matrix((e.weight, (e.head, e.tail)), shape=(50, 50))
    assert abs(S - S.T).max() == 0
    assert np.all(e.weight <= 1.0)
    with pytest.raises(ValueError):
        build_edge_list(g, L, "bogus")


def test_calibration_report(rng):
    X = rng.normal(size=(60, 3))
    g, _ = build_bipartite_graph(X, sample_landmarks(60, 30, 0), 8)
    rep = calibration_report(g)
    assert rep["rows"] == 60 and rep["unflagged_violations"] == 0
