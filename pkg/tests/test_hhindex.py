import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import docs_from, e0_profile, scored_docs, unit_rows
from streamrag.corpus import chunk_stream
from streamrag.embed import EmbeddedDoc, QueryVec
from streamrag.errors import DimMismatch, EmptyCorpus, NotInitialized, ZeroCapacity
from streamrag.hhindex import (
    HHIndex,
    IndexMeta,
    RetrievalProfile,
    Snapshot,
    build_from_stream,
    memory_ratio,
    profile_score,
    read_index,
    write_index,
)


def scores_of(index):
    return sorted(round(float(s), 9) for s in index.snapshot().scores)


def brute_top(docs, query, n):
    """Oracle: score every doc with a plain dot product, sort, cut."""
    scored = [(float(np.dot(d.vec, query)), d.doc_id) for d in docs]
    scored.sort(key=lambda t: (-t[0], t[1]))
    return {doc_id for _, doc_id in scored[:n]}


# -- profile_score --------------------------------------------------------------

def test_profile_score_identity():
    q = np.array([0.6, 0.8])
    prof = RetrievalProfile((QueryVec("q", q),))
    assert profile_score(prof, q) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("aggregation, expected", [("max", 1.0), ("mean", 0.5)])
def test_profile_score_aggregation(aggregation, expected):
    v = np.array([1.0, 0.0])
    prof = RetrievalProfile((QueryVec("a", np.array([0.0, 1.0])), QueryVec("b", v)), aggregation)
    assert profile_score(prof, v) == expected


def test_profile_score_dim_mismatch():
    with pytest.raises(DimMismatch):
        profile_score(e0_profile(8), np.array([1.0, 0.0]))


def test_profile_mixed_dims_rejected():
    with pytest.raises(DimMismatch):
        RetrievalProfile((QueryVec("a", np.array([1.0, 0.0])), QueryVec("b", np.array([1.0, 0.0, 0.0]))))


# -- init / offer ----------------------------------------------------------------

def test_zero_capacity():
    with pytest.raises(ZeroCapacity):
        HHIndex(0, e0_profile())


def test_init_short_stream():
    idx = HHIndex(3, e0_profile())
    rest = list(idx.init_fill([scored_docs([0.2, 0.4])]))
    assert len(idx) == 2 and rest == []


def test_init_unconditional_fill_and_leftover():
    docs = scored_docs([0.1, 0.9, 0.3, 0.2])
    idx = HHIndex(2, e0_profile())
    rest = list(idx.init_fill([docs]))
    assert scores_of(idx) == [0.1, 0.9]
    assert [[d.doc_id for d in c] for c in rest] == [[docs[2].doc_id, docs[3].doc_id]]


def test_offer_before_init():
    with pytest.raises(NotInitialized):
        HHIndex(2, e0_profile()).offer_chunk(scored_docs([0.5]))


def _initialized(mode):
    idx = HHIndex(2, e0_profile(), mode)
    idx.init_fill([scored_docs([0.1, 0.5])])
    return idx


def _fresh(scores, start):
    docs = scored_docs([0.0] * start + list(scores))
    return docs[start:]


def test_chunk_max_hand_trace():
    # chunk max 0.9 replaces min 0.1; 0.3 is never considered
    idx = _initialized("chunk_max")
    idx.offer_chunk(_fresh([0.3, 0.9], 2))
    assert scores_of(idx) == [0.5, 0.9]


def test_chunk_max_single_replacement_per_chunk():
    idx = _initialized("chunk_max")
    idx.offer_chunk(_fresh([0.7, 0.9], 2))
    # per_doc would keep {0.7, 0.9}; one replacement per chunk keeps 0.5
    assert scores_of(idx) == [0.5, 0.9]


def test_per_doc_matches_brute_force_top2():
    idx = _initialized("per_doc")
    idx.offer_chunk(_fresh([0.3, 0.9], 2))
    assert scores_of(idx) == [0.5, 0.9]
    idx.offer_chunk(_fresh([0.6], 4))
    assert scores_of(idx) == [0.6, 0.9]


@pytest.mark.parametrize("mode", ["chunk_max", "per_doc"])
def test_guard_blocks_weaker_docs(mode):
    idx = _initialized(mode)
    before = idx.snapshot().ids
    assert idx.offer_chunk(_fresh([0.05], 2)) == 0
    assert idx.snapshot().ids == before


def test_duplicate_doc_not_inserted_twice():
    docs = scored_docs([0.1, 0.5, 0.9])
    idx = HHIndex(2, e0_profile())
    idx.init_fill([docs[:2]])
    idx.offer_chunk([docs[2]])
    idx.offer_chunk([docs[2]])
    snap = idx.snapshot()
    assert sorted(snap.ids) == sorted([docs[1].doc_id, docs[2].doc_id])
    assert len(set(snap.ids)) == len(snap.ids)


# -- snapshot ---------------------------------------------------------------------

def test_snapshot_descending():
    docs = scored_docs([0.5, 0.9])
    idx = build_from_stream(e0_profile(), [docs], 2)
    assert list(idx.snapshot().ids) == [docs[1].doc_id, docs[0].doc_id]


def test_snapshot_empty():
    snap = HHIndex(2, e0_profile()).snapshot()
    assert len(snap) == 0 and snap.entries == ()


def test_snapshot_tie_break_by_id():
    v = np.zeros(8)
    v[0], v[1] = 0.7, np.sqrt(1 - 0.49)
    docs = [EmbeddedDoc("b", v), EmbeddedDoc("a", v)]
    snap = build_from_stream(e0_profile(), [docs], 2).snapshot()
    assert list(snap.ids) == ["a", "b"]


def test_tie_eviction_prefers_larger_id():
    v = np.zeros(8)
    v[0], v[1] = 0.7, np.sqrt(1 - 0.49)
    idx = build_from_stream(e0_profile(), [[EmbeddedDoc("b", v)], [EmbeddedDoc("a", v)]], 1)
    assert list(idx.snapshot().ids) == ["a"]


def test_snapshot_immutable_after_updates():
    idx = _initialized("per_doc")
    snap = idx.snapshot()
    ids = snap.ids
    idx.offer_chunk(_fresh([0.95], 2))
    assert snap.ids == ids
    with pytest.raises(ValueError):
        snap.vecs[0, 0] = 3.0


def test_entries_scores_match_profile(rng):
    X = unit_rows(rng, 50, 8)
    prof = e0_profile()
    snap = build_from_stream(prof, chunk_stream(docs_from(X), 7), 10).snapshot()
    for e in snap.entries:
        assert e.score == profile_score(prof, e.doc.vec)
    assert len({e.arrival_seq for e in snap.entries}) == len(snap)


# -- memory ratio ----------------------------------------------------------------

@pytest.mark.parametrize("cap, size, pct", [(1600, 16000, 10.0), (500, 500, 100.0), (375, 10000, 3.75)])
def test_memory_ratio(cap, size, pct):
    assert memory_ratio(cap, size) == pytest.approx(pct, abs=1e-12)


def test_memory_ratio_empty():
    with pytest.raises(EmptyCorpus):
        memory_ratio(1, 0)


# -- stream properties ------------------------------------------------------------

def test_capacity_at_least_stream_keeps_everything(rng):
    docs = docs_from(unit_rows(rng, 30, 8))
    snap = build_from_stream(e0_profile(), chunk_stream(docs, 4), 100).snapshot()
    assert set(snap.ids) == {d.doc_id for d in docs}


def test_per_doc_oracle(rng):
    docs = docs_from(unit_rows(rng, 2000, 16))
    q = np.zeros(16)
    q[0] = 1.0
    idx = build_from_stream(e0_profile(16), chunk_stream(docs, 64), 150)
    assert set(idx.snapshot().ids) == brute_top(docs, q, 150)


@settings(max_examples=60, deadline=None)
@given(
    n_docs=st.integers(0, 120),
    capacity=st.integers(1, 40),
    chunk=st.integers(1, 25),
    seed=st.integers(0, 2**32 - 1),
    mode=st.sampled_from(["per_doc", "chunk_max"]),
)
def test_stream_invariants(n_docs, capacity, chunk, seed, mode):
    rng = np.random.default_rng(seed)
    docs = docs_from(unit_rows(rng, n_docs, 8))
    prof = e0_profile()
    idx = HHIndex(capacity, prof, mode)
    chunks = chunk_stream(docs, chunk)
    mins = []
    for c in idx.init_fill(chunks):
        assert len(idx) <= capacity
        mins.append(idx.min_score)
        idx.offer_chunk(c)
        assert len(idx) <= capacity
    mins.append(idx.min_score)
    assert all(a <= b for a, b in zip(mins, mins[1:]))
    assert len(idx) == min(capacity, n_docs)

    per_doc = build_from_stream(prof, chunks, capacity, "per_doc")
    chunk_max = build_from_stream(prof, chunks, capacity, "chunk_max")
    if n_docs:
        assert per_doc.min_score >= chunk_max.min_score
        q = np.zeros(8)
        q[0] = 1.0
        assert set(per_doc.snapshot().ids) == brute_top(docs, q, capacity)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c1=st.integers(1, 50), c2=st.integers(1, 50))
def test_per_doc_chunking_invariance(seed, c1, c2):
    rng = np.random.default_rng(seed)
    docs = docs_from(unit_rows(rng, 200, 8))
    prof = e0_profile()
    a = build_from_stream(prof, chunk_stream(docs, c1), 25).snapshot()
    b = build_from_stream(prof, chunk_stream(docs, c2), 25).snapshot()
    assert a.ids == b.ids
    assert np.array_equal(a.scores, b.scores)


def test_determinism_byte_for_byte(tmp_path, rng):
    docs = docs_from(unit_rows(rng, 300, 8))
    prof = e0_profile()
    meta = IndexMeta(40, "chunk_max", ("q",), "max")
    for name in ("a", "b"):
        snap = build_from_stream(prof, chunk_stream(docs, 9), 40, "chunk_max").snapshot()
        write_index(snap, meta, tmp_path / f"{name}.sakv")
    assert (tmp_path / "a.sakv").read_bytes() == (tmp_path / "b.sakv").read_bytes()


def test_index_file_roundtrip(tmp_path, rng):
    docs = docs_from(unit_rows(rng, 100, 8))
    snap = build_from_stream(e0_profile(), chunk_stream(docs, 9), 20).snapshot()
    meta = IndexMeta(20, "per_doc", ("q",), "max")
    write_index(snap, meta, tmp_path / "i.sakv")
    back, meta2 = read_index(tmp_path / "i.sakv")
    assert meta2 == meta
    assert back.ids == snap.ids
    assert np.array_equal(back.scores, snap.scores)
    assert np.array_equal(back.arrival, snap.arrival)
    assert np.allclose(back.vecs, snap.vecs, atol=1e-6)


def test_from_docs_keeps_all(rng):
    docs = docs_from(unit_rows(rng, 10, 8))
    snap = Snapshot.from_docs(docs, e0_profile())
    assert len(snap) == 10
    assert np.all(np.diff(snap.scores) <= 0)


# -- unguarded replacement ------------------------------------------------------------

@pytest.mark.parametrize("mode", ["chunk_max", "per_doc"])
def test_unguarded_always_evicts_minimum(mode):
    idx = HHIndex(2, e0_profile(), mode, guarded=False)
    idx.init_fill([scored_docs([0.1, 0.5])])
    assert idx.offer_chunk(_fresh([0.05], 2)) == 1
    assert scores_of(idx) == [0.05, 0.5]


def test_unguarded_chunk_max_keeps_chunk_best():
    idx = HHIndex(2, e0_profile(), "chunk_max", guarded=False)
    idx.init_fill([scored_docs([0.1, 0.5])])
    idx.offer_chunk(_fresh([0.3, 0.2], 2))
    assert scores_of(idx) == [0.3, 0.5]


def test_guard_dominates_unguarded(rng):
    docs = docs_from(unit_rows(rng, 500, 8))
    prof = e0_profile()
    for mode in ("chunk_max", "per_doc"):
        g = build_from_stream(prof, chunk_stream(docs, 10), 30, mode)
        u = build_from_stream(prof, chunk_stream(docs, 10), 30, mode, guarded=False)
        assert len(u) == 30
        assert g.min_score >= u.min_score
