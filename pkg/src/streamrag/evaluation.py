"""Evaluation harness: P/R/F1, ablation modes, cluster sweeps, silhouette and latency benchmarks.

"Accuracy" in sweep and ablation tables means precision@K.
"""

from __future__ import annotations

import csv
import json
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence


from .cluster import Clustering, KMeansConfig, kmeans, silhouette
from .config import RunConfig
from .corpus import Document, QrelSet, chunk_stream
from .embed import EmbeddedDoc, EmbeddingConfig, QueryVec, embed_documents, embed_query
from .errors import DegenerateQrels, InputError
from .hhindex import RetrievalProfile, Snapshot, build_from_stream, memory_ratio
from .retrieve import GateParams, ProbeTable, RetrievalResult, clustered_retrieve, naive_retrieve
from .synthetic import gen_queries, gen_vector_snapshot

SCHEMA = "sakr-metrics/1"
ACCURACY_DEFINITION = "precision@K"

MODES = ("SAKR", "streaming_only", "clustering_only", "naive")
# display labels used in ablation tables
MODE_LABELS = {
    "SAKR": "SAKR",
    "streaming_only": "SAKR - Clustering",
    "clustering_only": "SAKR-streaming",
    "naive": "Naive RAG",
}
_STREAMING = {"SAKR": True, "streaming_only": True, "clustering_only": False, "naive": False}
_CLUSTERED = {"SAKR": True, "streaming_only": False, "clustering_only": True, "naive": False}


def f1_score(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def precision_recall_f1(retrieved: Sequence[str], qrels: QrelSet, K: int) -> tuple[float, float, float]:
    if K < 1:
        raise InputError("K must be >= 1")
    if len(retrieved) > K:
        raise InputError(f"{len(retrieved)} retrieved docs exceeds K={K}")
    hits = sum(1 for d in retrieved if d in qrels.relevant)
    if not qrels.relevant:
        if retrieved:
            raise DegenerateQrels(f"query {qrels.query_id!r} has no relevant documents")
        return 1.0, 1.0, 1.0
    p = hits / len(retrieved) if retrieved else 0.0
    r = hits / len(qrels.relevant)
    return p, r, f1_score(p, r)


@dataclass
class MetricsReport:
    mode: str
    query_id: str
    K: int
    precision: float
    recall: float
    f1: float
    memory_ratio_pct: float
    corpus_size: int
    index_size: int
    m: int | None = None
    k_probe: int | None = None
    silhouette: float | None = None
    candidates_scanned_mean: float = 0.0
    latency_mean_us: float = 0.0
    latency_median_us: float = 0.0
    cluster_build_s: float | None = None

    @property
    def label(self) -> str:
        return MODE_LABELS[self.mode]

    def to_json(self) -> dict:
        d = asdict(self)
        timing = {k: d.pop(k) for k in ("latency_mean_us", "latency_median_us", "cluster_build_s")}
        d["label"] = self.label
        d["accuracy"] = self.precision
        d["timing"] = timing
        return d


class Experiment:
    """Embeds a corpus once and caches snapshots and clusterings across runs."""

    def __init__(self, corpus: Sequence[Document] | Sequence[EmbeddedDoc], config: RunConfig):
        self.config = config
        self.emb_cfg = EmbeddingConfig(config.embedding.dim, config.embedding.seed, config.embedding.lowercase)
        corpus = list(corpus)
        if corpus and isinstance(corpus[0], EmbeddedDoc):
            self.docs = corpus
        else:
            self.docs = embed_documents(corpus, self.emb_cfg)
        if not self.docs:
            raise InputError("empty corpus")
        self._snapshots: dict = {}
        self._clusterings: dict = {}
        self._tables: dict = {}

    @property
    def corpus_size(self) -> int:
        return len(self.docs)

    def query_vec(self, query) -> QueryVec:
        if isinstance(query, QueryVec):
            return query
        qid, text = query
        return embed_query(qid, text, self.emb_cfg)

    def profile(self, queries: Iterable[QueryVec]) -> RetrievalProfile:
        return RetrievalProfile(tuple(queries), self.config.stream.aggregation)

    def snapshot(self, streaming: bool, profile: RetrievalProfile) -> Snapshot:
        key = (streaming, tuple(profile.query_ids))
        if key not in self._snapshots:
            if streaming:
                s = self.config.stream
                capacity = self.config.capacity_for(self.corpus_size)
                chunks = chunk_stream(self.docs, s.chunk_size)
                snap = build_from_stream(profile, chunks, capacity, s.mode, s.guarded).snapshot()
            else:
                snap = Snapshot.from_docs(self.docs, profile)
            self._snapshots[key] = snap
        return self._snapshots[key]

    def clustering(self, snap: Snapshot, m: int) -> tuple[Clustering, ProbeTable, float]:
        key = (id(snap), m)
        if key not in self._clusterings:
            c = self.config.cluster
            t0 = time.perf_counter()
            cl = kmeans(snap, KMeansConfig(m, c.seed, c.max_iters, c.tol))
            table = ProbeTable(snap, cl)
            self._clusterings[key] = (cl, table, time.perf_counter() - t0)
        return self._clusterings[key]

    def silhouette_of(self, snap: Snapshot, cl: Clustering) -> float | None:
        if cl.m < 2 or len(snap) > self.config.eval.silhouette_max_points:
            return None
        return silhouette(snap, cl)

    def retrieve(self, mode: str, query, K: int, m: int | None = None, k_probe: int | None = None):
        """Run one query through ``mode``; returns (result, snapshot, clustering info)."""
        if mode not in MODES:
            raise InputError(f"unknown mode {mode!r}; expected one of {MODES}")
        qv = self.query_vec(query)
        snap = self.snapshot(_STREAMING[mode], self.profile([qv]))
        params = GateParams(self.config.retrieve.alpha, self.config.retrieve.beta)
        if not _CLUSTERED[mode]:
            return naive_retrieve(qv, snap, K, params), snap, None
        m = self.config.m_for(len(snap)) if m is None else min(m, len(snap))
        k_probe = min(self.config.retrieve.k_probe if k_probe is None else k_probe, m)
        cl, table, build_s = self.clustering(snap, m)
        res = clustered_retrieve(qv, snap, cl, k_probe, K, params, table=table)
        return res, snap, (cl, k_probe, build_s)

    def run(self, mode: str, qrels: QrelSet, query, K: int | None = None, m: int | None = None,
            k_probe: int | None = None, with_silhouette: bool = True) -> MetricsReport:
        K = self.config.retrieve.K if K is None else K
        res, snap, cinfo = self.retrieve(mode, query, K, m, k_probe)
        p, r, f = precision_recall_f1(res.doc_ids, qrels, max(K, 1))
        if _STREAMING[mode]:
            ratio = memory_ratio(self.config.capacity_for(self.corpus_size), self.corpus_size)
        else:
            ratio = 100.0
        report = MetricsReport(
            mode=mode,
            query_id=res.query_id,
            K=K,
            precision=p,
            recall=r,
            f1=f,
            memory_ratio_pct=ratio,
            corpus_size=self.corpus_size,
            index_size=len(snap),
            candidates_scanned_mean=float(res.candidates_scanned),
            latency_mean_us=res.elapsed * 1e6,
            latency_median_us=res.elapsed * 1e6,
        )
        if cinfo is not None:
            cl, kp, build_s = cinfo
            report.m = cl.m
            report.k_probe = kp
            report.cluster_build_s = build_s
            if with_silhouette:
                report.silhouette = self.silhouette_of(snap, cl)
        return report


def run_mode(mode: str, corpus, qrels: QrelSet, query, config: RunConfig) -> MetricsReport:
    return Experiment(corpus, config).run(mode, qrels, query)


def run_grid(exp: Experiment, qrels: QrelSet, query, modes: Sequence[str] = MODES,
             k_values: Sequence[int] | None = None) -> list[MetricsReport]:
    k_values = list(k_values or exp.config.k_values())
    return [exp.run(mode, qrels, query, K=k) for mode in modes for k in k_values]


@dataclass
class SweepRow:
    m: int
    accuracy: float
    silhouette: float | None
    median_latency_us: float
    candidates_scanned: float


def sweep_clusters(m_values: Sequence[int], corpus, qrels: QrelSet, query, config: RunConfig) -> list[SweepRow]:
    """One SAKR run per cluster count, sharing the streamed snapshot and seeds.

    ``k_probe`` is clipped to ``m`` for small ``m``.
    """
    exp = corpus if isinstance(corpus, Experiment) else Experiment(corpus, config)
    rows = []
    for m in m_values:
        rep = exp.run("SAKR", qrels, query, m=int(m))
        rows.append(SweepRow(rep.m, rep.precision, rep.silhouette, rep.latency_median_us, rep.candidates_scanned_mean))
    return rows


def silhouette_compare(corpus, config: RunConfig, query, m: int | None = None) -> tuple[float, float]:
    """Silhouette of clustering the full corpus vs. the stream-retained subset.

    Both arms use the same ``m`` (resolved against the retained subset when
    not given) and the same k-means seed.
    """
    exp = corpus if isinstance(corpus, Experiment) else Experiment(corpus, config)
    prof = exp.profile([exp.query_vec(query)])
    full = exp.snapshot(False, prof)
    kept = exp.snapshot(True, prof)
    if m is None:
        m = config.m_for(len(kept))
    before = silhouette(full, exp.clustering(full, m)[0])
    after = silhouette(kept, exp.clustering(kept, m)[0])
    return before, after


@dataclass
class BenchRow:
    size: int
    method: str
    m: int
    k_probe: int
    n_queries: int
    median_elapsed_us: float | None
    candidates_scanned: float | None
    build_s: float
    build_per_query_us: float | None
    work_bound_violations: int = 0


def bench_latency(sizes: Sequence[int], n_queries: int, config: RunConfig) -> list[BenchRow]:
    """Clustered vs full-scan query cost over synthetic retained snapshots.

    Clustering build time is reported separately and amortized over the
    query count.
    """
    if list(sizes) != sorted(sizes):
        raise InputError("bench sizes must be sorted ascending")
    b = config.bench
    params = GateParams(config.retrieve.alpha, config.retrieve.beta)
    K = config.retrieve.K
    rows: list[BenchRow] = []
    for size in sizes:
        m = config.m_for(size)
        k_probe = min(config.retrieve.k_probe, m)
        centers = b.centers or m
        snap, C = gen_vector_snapshot(size, centers, config.embedding.dim, b.spread, b.seed)
        c = config.cluster
        t0 = time.perf_counter()
        cl = kmeans(snap, KMeansConfig(m, c.seed, c.max_iters, c.tol))
        table = ProbeTable(snap, cl)
        build_s = time.perf_counter() - t0
        Q = gen_queries(C, n_queries, b.spread, b.seed + 1)
        clustered: list[RetrievalResult] = []
        naive: list[RetrievalResult] = []
        violations = 0
        for qv in Q:
            res = clustered_retrieve(qv, snap, cl, k_probe, K, params, table=table)
            bound = m + int(cl.sizes[list(res.clusters_probed)].sum())
            if res.candidates_scanned > bound or (k_probe < m and res.candidates_scanned >= size):
                violations += 1
            clustered.append(res)
            naive.append(naive_retrieve(qv, snap, K, params))
        per_q = build_s * 1e6 / n_queries if n_queries else None
        for method, results in (("clustered", clustered), ("naive", naive)):
            rows.append(
                BenchRow(
                    size=size,
                    method=method,
                    m=m,
                    k_probe=k_probe,
                    n_queries=n_queries,
                    median_elapsed_us=statistics.median(r.elapsed * 1e6 for r in results) if results else None,
                    candidates_scanned=statistics.median(r.candidates_scanned for r in results) if results else None,
                    build_s=build_s if method == "clustered" else 0.0,
                    build_per_query_us=per_q if method == "clustered" else None,
                    work_bound_violations=violations if method == "clustered" else 0,
                )
            )
    return rows


# -- report files ---------------------------------------------------------------

def metrics_document(reports: Sequence[MetricsReport], config: RunConfig | None = None) -> dict:
    doc = {
        "schema": SCHEMA,
        "accuracy_definition": ACCURACY_DEFINITION,
        "reports": [r.to_json() for r in reports],
    }
    if config is not None:
        doc["config_hash"] = config.config_hash()
    return doc


def dumps_metrics(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def strip_timing(doc: dict) -> dict:
    """Copy of a metrics document without wall-clock fields."""
    out = dict(doc)
    out["reports"] = [{k: v for k, v in r.items() if k != "timing"} for r in doc["reports"]]
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_sweep_csv(rows: Sequence[SweepRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["m", "accuracy", "silhouette", "median_latency_us", "candidates_scanned"])
    for r in rows:
        w.writerow([r.m, _fmt(r.accuracy), _fmt(r.silhouette), _fmt(r.median_latency_us), _fmt(r.candidates_scanned)])


def grid_table(reports: Sequence[MetricsReport]) -> tuple[list[str], list[list]]:
    modes = [m for m in MODES if any(r.mode == m for r in reports)]
    ks = sorted({r.K for r in reports})
    # macro-average over queries
    cells: dict = {}
    for r in reports:
        cells.setdefault((r.mode, r.K), []).append(r.precision)
    acc = {key: sum(v) / len(v) for key, v in cells.items()}
    header = ["k"] + [f"accuracy_{m}" for m in modes]
    return header, [[k] + [acc.get((m, k)) for m in modes] for k in ks]


def write_grid_csv(reports: Sequence[MetricsReport], fh) -> None:
    header, rows = grid_table(reports)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])


def write_bench_csv(rows: Sequence[BenchRow], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    names = list(BenchRow.__dataclass_fields__)
    w.writerow(names)
    for r in rows:
        w.writerow([_fmt(getattr(r, n)) for n in names])
