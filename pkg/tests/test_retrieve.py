import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import unit_rows
from streamrag.cluster import Clustering, KMeansConfig, kmeans
from streamrag.embed import QueryVec
from streamrag.errors import BadAlpha, BadProbeCount, MismatchedClustering
from streamrag.hhindex import Snapshot
from streamrag.retrieve import (
    GateParams,
    ProbeTable,
    clustered_retrieve,
    naive_retrieve,
    p_hh,
    select_clusters,
)


def snap_of(X, prefix="d"):
    ids = tuple(f"{prefix}{i:04d}" for i in range(len(X)))
    return Snapshot(ids, X, np.zeros(len(X)), np.arange(len(X)))


def oracle_top(snapshot, q, K, allowed=None):
    """Independent full sort by float cosine, ties by id."""
    qn = q / np.linalg.norm(q)
    rows = [
        (float(np.dot(v, qn)), d)
        for d, v in zip(snapshot.ids, snapshot.vecs)
        if allowed is None or d in allowed
    ]
    rows.sort(key=lambda t: (-t[0], t[1]))
    return [d for _, d in rows[:K]]


def fixed_clustering(snapshot, labels, m):
    C = np.stack([snapshot.vecs[labels == j].mean(axis=0) for j in range(m)])
    return Clustering(snapshot.ids, C, np.asarray(labels), 0.0)


# -- gate -----------------------------------------------------------------------------

def test_p_hh_examples():
    assert p_hh(0.5, GateParams(10, 5)) == 0.5
    assert p_hh(1.0, GateParams(1, 0)) == pytest.approx(0.73106, abs=1e-5)
    assert p_hh(-1.0, GateParams(1, 0)) == pytest.approx(0.26894, abs=1e-5)


def test_bad_alpha():
    with pytest.raises(BadAlpha):
        GateParams(0, 1)
    with pytest.raises(BadAlpha):
        GateParams(-1.0, 0)


@settings(max_examples=100, deadline=None)
@given(
    c1=st.floats(-1, 1),
    c2=st.floats(-1, 1),
    alpha=st.floats(1e-3, 20),
    beta=st.floats(-10, 10),
)
def test_gate_monotone(c1, c2, alpha, beta):
    lo, hi = sorted((c1, c2))
    g = GateParams(alpha, beta)
    assert p_hh(lo, g) <= p_hh(hi, g)
    assert 0.0 <= p_hh(lo, g) <= 1.0


# -- cluster selection --------------------------------------------------------------

def test_select_clusters_examples():
    C = np.eye(5)
    cl = Clustering(tuple("abcde"), C, np.arange(5), 0.0)
    assert select_clusters(C[3], cl, 1) == [3]
    one = Clustering(("a",), C[:1], np.zeros(1, dtype=int), 0.0)
    assert select_clusters(C[2], one, 1) == [0]
    with pytest.raises(BadProbeCount):
        select_clusters(C[0], cl, 0)
    with pytest.raises(BadProbeCount):
        select_clusters(C[0], cl, 6)


def test_select_all_is_sorted_permutation(rng):
    C = rng.standard_normal((9, 6))
    cl = Clustering(tuple(str(i) for i in range(9)), C, np.arange(9), 0.0)
    q = unit_rows(rng, 1, 6)[0]
    got = select_clusters(q, cl, 9)
    cos = (C @ q) / np.linalg.norm(C, axis=1)
    assert got == sorted(range(9), key=lambda j: (-cos[j], j))


# -- clustered ----------------------------------------------------------------------

def test_single_cluster_equals_naive(rng):
    X = unit_rows(rng, 80, 8)
    snap = snap_of(X)
    cl = kmeans(snap, KMeansConfig(1))
    q = unit_rows(rng, 1, 8)[0]
    a = clustered_retrieve(q, snap, cl, 1, 10)
    b = naive_retrieve(q, snap, 10)
    assert a.doc_ids == b.doc_ids
    assert [h.cos for h in a.hits] == [h.cos for h in b.hits]


def test_large_K_returns_all_candidates_sorted(rng):
    X = unit_rows(rng, 30, 8)
    snap = snap_of(X)
    cl = kmeans(snap, KMeansConfig(3, seed=1))
    res = clustered_retrieve(X[0], snap, cl, 1, 1000)
    probed = res.clusters_probed[0]
    assert len(res.hits) == int(cl.sizes[probed])
    cos = [h.cos for h in res.hits]
    assert cos == sorted(cos, reverse=True)
    assert res.candidates_scanned == len(res.hits) + cl.m


def test_balanced_probe_oracle(rng):
    X = unit_rows(rng, 100, 8)
    snap = snap_of(X)
    labels = np.arange(100) % 10
    cl = fixed_clustering(snap, labels, 10)
    q = unit_rows(rng, 1, 8)[0]
    res = clustered_retrieve(q, snap, cl, 2, 5)
    allowed = {d for d, lab in zip(snap.ids, labels) if lab in res.clusters_probed}
    assert len(allowed) == 20
    assert res.doc_ids == oracle_top(snap, q, 5, allowed)
    assert res.candidates_scanned == 30


def test_mismatched_clustering(rng):
    X = unit_rows(rng, 10, 4)
    snap = snap_of(X)
    other = kmeans(snap_of(X, "x"), KMeansConfig(2))
    with pytest.raises(MismatchedClustering):
        clustered_retrieve(X[0], snap, other, 1, 3)
    table = ProbeTable(snap, kmeans(snap, KMeansConfig(2)))
    with pytest.raises(MismatchedClustering):
        clustered_retrieve(X[0], snap, kmeans(snap, KMeansConfig(2)), 1, 3, table=table)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 80), m=st.integers(1, 8), K=st.integers(0, 90))
def test_full_probe_equals_naive(seed, n, m, K):
    rng = np.random.default_rng(seed)
    m = min(m, n)
    snap = snap_of(unit_rows(rng, n, 6))
    cl = kmeans(snap, KMeansConfig(m, seed=seed))
    q = unit_rows(rng, 1, 6)[0]
    a = clustered_retrieve(q, snap, cl, m, K)
    b = naive_retrieve(q, snap, K)
    assert a.doc_ids == b.doc_ids
    # recall bound for a partial probe
    k_probe = max(1, m // 2)
    part = clustered_retrieve(q, snap, cl, k_probe, K)
    allowed = {d for d, lab in zip(cl.doc_ids, cl.labels) if lab in part.clusters_probed}
    assert set(part.doc_ids) <= allowed
    assert part.doc_ids == oracle_top(snap, q, K, allowed)
    assert part.candidates_scanned == len(allowed) + m


def test_ranking_invariance_across_gates(rng):
    snap = snap_of(unit_rows(rng, 200, 8))
    cl = kmeans(snap, KMeansConfig(6, seed=0))
    for q in unit_rows(rng, 10, 8):
        orders, gates = [], []
        for g in (GateParams(1, 0), GateParams(10, 5), GateParams(100, -3)):
            res = clustered_retrieve(q, snap, cl, 2, 15, g)
            orders.append(res.doc_ids)
            gates.append([h.p_hh for h in res.hits])
            assert all(a >= b for a, b in zip(gates[-1], gates[-1][1:]))
        assert orders[0] == orders[1] == orders[2]
        assert gates[0] != gates[1]


# -- naive --------------------------------------------------------------------------

def test_naive_examples(rng):
    X = unit_rows(rng, 1, 4)
    snap = snap_of(X)
    assert naive_retrieve(X[0], snap, 1).doc_ids == ["d0000"]
    assert naive_retrieve(X[0], snap, 0).hits == ()
    empty = Snapshot((), np.zeros((0, 4)), np.zeros(0), np.zeros(0, dtype=int))
    res = naive_retrieve(X[0], empty, 5)
    assert res.hits == () and res.candidates_scanned == 0


def test_naive_matches_sort_oracle(rng):
    snap = snap_of(unit_rows(rng, 500, 16))
    for q in unit_rows(rng, 5, 16):
        res = naive_retrieve(QueryVec("q", q), snap, 25)
        assert res.doc_ids == oracle_top(snap, q, 25)
        assert res.candidates_scanned == 500 and res.query_id == "q"


def test_ties_broken_by_doc_id():
    v = np.array([1.0, 0.0])
    X = np.stack([v, v, v])
    snap = Snapshot(("c", "a", "b"), X, np.zeros(3), np.arange(3))
    assert naive_retrieve(v, snap, 2).doc_ids == ["a", "b"]


def test_result_json_ranks(rng):
    snap = snap_of(unit_rows(rng, 10, 4))
    doc = naive_retrieve(QueryVec("q", snap.vecs[0]), snap, 3).to_json()
    assert [r["rank"] for r in doc["results"]] == [1, 2, 3]
    assert doc["results"][0]["doc_id"] == "d0000"
