"""Query-time retrieval: sigmoid gate, cluster probing and the full-scan baseline.

Documents are ranked by cosine (descending, doc_id ascending on ties). The
sigmoid gate is strictly monotone for ``alpha > 0``, so ranking by cosine is
the same as ranking by gate probability but does not suffer from the gate
saturating to 1.0 in floating point for large ``alpha``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .cluster import Clustering, _centroid_cos
from .embed import QueryVec
from .errors import BadAlpha, BadProbeCount, DimMismatch, MismatchedClustering, NoCentroids
from .hhindex import Snapshot


@dataclass(frozen=True)
class GateParams:
    alpha: float = 10.0
    beta: float = 5.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise BadAlpha(f"alpha must be > 0, got {self.alpha}")


def p_hh(cos, params: GateParams = GateParams()):
    """Gate probability ``sigmoid(alpha * cos - beta)``; accepts scalars or arrays."""
    if not params.alpha > 0:
        raise BadAlpha(f"alpha must be > 0, got {params.alpha}")
    out = expit(params.alpha * np.asarray(cos, dtype=np.float64) - params.beta)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Hit:
    doc_id: str
    cos: float
    p_hh: float
    cluster: int | None = None


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    hits: tuple[Hit, ...]
    candidates_scanned: int
    clusters_probed: tuple[int, ...] = ()
    elapsed: float = 0.0  # seconds, scoring only

    @property
    def doc_ids(self) -> list[str]:
        return [h.doc_id for h in self.hits]

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "results": [
                {"rank": i + 1, "doc_id": h.doc_id, "cos": h.cos, "p_hh": h.p_hh, "cluster": h.cluster}
                for i, h in enumerate(self.hits)
            ],
            "candidates_scanned": self.candidates_scanned,
            "clusters_probed": list(self.clusters_probed),
            "elapsed_us": self.elapsed * 1e6,
        }


def _query_parts(q) -> tuple[str, np.ndarray]:
    if isinstance(q, QueryVec):
        return q.query_id, q.vec
    vec = np.asarray(q, dtype=np.float64)
    return "", vec


def _row_cos(vecs: np.ndarray, q: np.ndarray) -> np.ndarray:
    # einsum gives the same value for a row no matter which slice it sits in;
    # BLAS gemv does not, and naive/clustered results must agree exactly
    qn = np.linalg.norm(q)
    return np.clip(np.einsum("ij,j->i", vecs, q / qn), -1.0, 1.0)


def _top_k(cos: np.ndarray, ids: Sequence[str], K: int) -> list[int]:
    """Positions of the K best rows under (cos desc, doc_id asc)."""
    n = len(cos)
    if K <= 0 or n == 0:
        return []
    if K < n:
        kth = np.partition(-cos, K - 1)[K - 1]
        pool = np.flatnonzero(-cos <= kth)
    else:
        pool = np.arange(n)
    ranked = sorted(pool.tolist(), key=lambda i: (-cos[i], ids[i]))
    return ranked[:K]


class ProbeTable:
    """Snapshot vectors regrouped so each cluster's members are contiguous."""

    def __init__(self, snapshot: Snapshot, clustering: Clustering):
        if len(clustering.doc_ids) != len(snapshot) or set(clustering.doc_ids) != set(snapshot.ids):
            raise MismatchedClustering("clustering does not cover the snapshot's documents")
        if clustering.m == 0:
            raise NoCentroids("clustering has no centroids")
        if clustering.centroids.shape[1] != snapshot.dim:
            raise DimMismatch("centroid dim differs from snapshot dim")
        rows = np.array([snapshot.id_to_row[d] for d in clustering.doc_ids], dtype=np.int64)
        order = np.argsort(clustering.labels, kind="stable")
        self.snapshot = snapshot
        self.clustering = clustering
        self.rows = rows[order]
        self.labels = clustering.labels[order]
        self.vecs = np.ascontiguousarray(snapshot.vecs[self.rows])
        self.ids = [snapshot.ids[r] for r in self.rows]
        counts = np.bincount(clustering.labels, minlength=clustering.m)
        self.offsets = np.concatenate(([0], np.cumsum(counts)))

    @property
    def m(self) -> int:
        return self.clustering.m


def select_clusters(q, clustering: Clustering, k_probe: int) -> list[int]:
    m = clustering.m
    if not 1 <= k_probe <= m:
        raise BadProbeCount(f"k_probe must be in [1, {m}], got {k_probe}")
    _, vec = _query_parts(q)
    cos = _centroid_cos(vec[None, :], clustering.centroids)[0]
    order = np.argsort(-cos, kind="stable")
    return [int(j) for j in order[:k_probe]]


def clustered_retrieve(
    q,
    snapshot: Snapshot,
    clustering: Clustering,
    k_probe: int,
    K: int,
    params: GateParams = GateParams(),
    table: ProbeTable | None = None,
) -> RetrievalResult:
    """Rank only the members of the ``k_probe`` clusters nearest the query.

    Pass a prebuilt ``table`` when issuing many queries against the same
    snapshot; building it is not part of the timed section.
    """
    if table is None:
        table = ProbeTable(snapshot, clustering)
    elif table.snapshot is not snapshot or table.clustering is not clustering:
        raise MismatchedClustering("probe table was built for a different snapshot/clustering")
    qid, vec = _query_parts(q)
    if vec.shape[0] != snapshot.dim:
        raise DimMismatch(f"query dim {vec.shape[0]} != snapshot dim {snapshot.dim}")

    t0 = time.perf_counter()
    probed = select_clusters(vec, clustering, k_probe)
    spans = [(table.offsets[j], table.offsets[j + 1]) for j in probed]
    if spans:
        pos = np.concatenate([np.arange(a, b) for a, b in spans])
    else:
        pos = np.zeros(0, dtype=np.int64)
    cos = _row_cos(table.vecs[pos], vec) if len(pos) else np.zeros(0)
    ids = [table.ids[p] for p in pos]
    top = _top_k(cos, ids, K)
    gate = p_hh(cos[top], params) if top else np.zeros(0)
    hits = tuple(
        Hit(ids[i], float(cos[i]), float(g), int(table.labels[pos[i]])) for i, g in zip(top, np.atleast_1d(gate))
    )
    elapsed = time.perf_counter() - t0
    return RetrievalResult(qid, hits, len(pos) + clustering.m, tuple(probed), elapsed)


def naive_retrieve(
    q,
    snapshot: Snapshot,
    K: int,
    params: GateParams = GateParams(),
    clustering: Clustering | None = None,
) -> RetrievalResult:
    """Full scan of every snapshot document."""
    qid, vec = _query_parts(q)
    if len(snapshot) == 0:
        return RetrievalResult(qid, (), 0)
    if vec.shape[0] != snapshot.dim:
        raise DimMismatch(f"query dim {vec.shape[0]} != snapshot dim {snapshot.dim}")
    t0 = time.perf_counter()
    cos = _row_cos(snapshot.vecs, vec)
    top = _top_k(cos, snapshot.ids, K)
    gate = np.atleast_1d(p_hh(cos[top], params)) if top else np.zeros(0)
    elapsed = time.perf_counter() - t0
    assignment = clustering.assignment if clustering is not None else {}
    hits = tuple(
        Hit(snapshot.ids[i], float(cos[i]), float(g), assignment.get(snapshot.ids[i]))
        for i, g in zip(top, gate)
    )
    return RetrievalResult(qid, hits, len(snapshot), (), elapsed)
