"""Command-line entry point.

    streamrag [--config FILE] COMMAND [options] [--section.key VALUE ...]

Exit codes: 0 success, 1 internal error, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Callable, Sequence

from .cluster import KMeansConfig, kmeans, read_clustering, write_clustering
from .config import RunConfig, load_config
from .corpus import (
    chunk_stream,
    load_corpus,
    load_qrels,
    load_queries,
    write_corpus,
    write_qrels,
    write_queries,
)
from .embed import EmbeddingConfig, embed_documents, embed_query
from .errors import ArtifactMissing, ConfigError, InputError
from .evaluation import (
    Experiment,
    bench_latency,
    dumps_metrics,
    grid_table,
    metrics_document,
    run_grid,
    sweep_clusters,
    write_bench_csv,
    write_grid_csv,
    write_sweep_csv,
)
from .hhindex import IndexMeta, RetrievalProfile, build_from_stream, memory_ratio, read_index, write_index
from .retrieve import GateParams, ProbeTable, clustered_retrieve, naive_retrieve
from .synthetic import SyntheticSpec, gen_synthetic

log = logging.getLogger("streamrag")

INDEX_FILE = "index.sakv"
CLUSTERING_FILE = "clustering.jsonl"
MANIFEST_FILE = "manifest.json"


def write_atomic(path: str | Path, write: Callable, binary: bool = False) -> Path:
    """Write via ``write(fh)`` to a temp file in the target dir, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb" if binary else "w", **({} if binary else {"encoding": "utf-8", "newline": ""})) as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise
    return path


def _write_path_atomic(path: Path, writer: Callable[[Path], None]) -> Path:
    """Atomic variant for writers that insist on a path argument."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=path.suffix)
    os.close(fd)
    try:
        writer(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise
    return path


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _require(cfg: RunConfig, *keys: str) -> None:
    for key in keys:
        value = getattr(cfg.paths, key)
        if value is None:
            raise ConfigError(f"paths.{key} is required for this command")
        if not Path(value).is_file():
            raise InputError(f"paths.{key}: cannot read {value}")


def _emb_cfg(cfg: RunConfig) -> EmbeddingConfig:
    return EmbeddingConfig(cfg.embedding.dim, cfg.embedding.seed, cfg.embedding.lowercase)


def _gate(cfg: RunConfig) -> GateParams:
    return GateParams(cfg.retrieve.alpha, cfg.retrieve.beta)


def _profile_queries(cfg: RunConfig, args) -> list[tuple[str, str]]:
    if getattr(args, "profile_text", None) is not None:
        return [("profile", args.profile_text)]
    _require(cfg, "queries")
    queries = load_queries(cfg.paths.queries)
    if not queries:
        raise InputError(f"{cfg.paths.queries}: no queries")
    return queries


# -- commands -------------------------------------------------------------------

def cmd_gen(cfg: RunConfig, args) -> int:
    s = cfg.synthetic
    spec = SyntheticSpec(s.corpus_size, s.relevant_fraction, s.topics, s.noise, s.seed, s.facets)
    docs, qrels, query = gen_synthetic(spec)
    out = Path(cfg.paths.output_dir)
    _write_path_atomic(out / "corpus.jsonl", lambda p: write_corpus(docs, p))
    _write_path_atomic(out / "qrels.tsv", lambda p: write_qrels([qrels], p))
    _write_path_atomic(out / "queries.jsonl", lambda p: write_queries([query], p))
    print(f"wrote {len(docs)} docs ({len(qrels.relevant)} relevant) to {out}", file=sys.stderr)
    return 0


def cmd_build(cfg: RunConfig, args) -> int:
    _require(cfg, "corpus")
    t0 = time.perf_counter()
    docs = load_corpus(cfg.paths.corpus)
    if not docs:
        raise InputError(f"{cfg.paths.corpus}: empty corpus")
    emb = _emb_cfg(cfg)
    queries = _profile_queries(cfg, args)
    embedded = embed_documents(docs, emb)
    profile = RetrievalProfile(tuple(embed_query(q, t, emb) for q, t in queries), cfg.stream.aggregation)
    t_embed = time.perf_counter() - t0

    capacity = cfg.capacity_for(len(docs))
    t1 = time.perf_counter()
    s = cfg.stream
    index = build_from_stream(profile, chunk_stream(embedded, s.chunk_size), capacity, s.mode, s.guarded)
    snap = index.snapshot()
    t_stream = time.perf_counter() - t1

    m = cfg.m_for(len(snap))
    t2 = time.perf_counter()
    c = cfg.cluster
    clustering = kmeans(snap, KMeansConfig(m, c.seed, c.max_iters, c.tol))
    t_cluster = time.perf_counter() - t2

    out = Path(cfg.paths.output_dir)
    meta = IndexMeta(capacity, cfg.stream.mode, tuple(profile.query_ids), cfg.stream.aggregation)
    _write_path_atomic(out / INDEX_FILE, lambda p: write_index(snap, meta, p))
    _write_path_atomic(out / CLUSTERING_FILE, lambda p: write_clustering(clustering, p, {"seed": c.seed}))
    manifest = {
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "corpus_sha256": _sha256(cfg.paths.corpus),
        "counts": {
            "corpus": len(docs),
            "capacity": capacity,
            "index_size": len(snap),
            "m": clustering.m,
            "profile_queries": len(queries),
        },
        "memory_ratio_pct": memory_ratio(capacity, len(docs)),
        "kmeans": {"inertia": clustering.inertia, "iterations": clustering.n_iter, "converged": clustering.converged},
        "timings_s": {"embed": t_embed, "stream": t_stream, "cluster": t_cluster},
    }
    write_atomic(out / MANIFEST_FILE, lambda fh: fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n"))
    print(
        f"indexed {len(snap)}/{len(docs)} docs ({manifest['memory_ratio_pct']:.4g}% memory), "
        f"{clustering.m} clusters -> {out}",
        file=sys.stderr,
    )
    return 0


def cmd_query(cfg: RunConfig, args) -> int:
    out_dir = Path(cfg.paths.output_dir)
    index_path = out_dir / INDEX_FILE
    clustering_path = out_dir / CLUSTERING_FILE
    for p in (index_path, clustering_path):
        if not p.is_file():
            raise ArtifactMissing(f"missing build artifact {p}; run `streamrag build` first")
    if args.text is not None:
        queries = [(args.query_id, args.text)]
    else:
        _require(cfg, "queries")
        queries = load_queries(cfg.paths.queries)

    snap, _meta = read_index(index_path)
    clustering = read_clustering(clustering_path)
    if clustering.centroids.shape[1] != cfg.embedding.dim or snap.dim not in (0, cfg.embedding.dim):
        raise InputError("embedding.dim does not match the build artifacts")
    table = ProbeTable(snap, clustering)
    emb = _emb_cfg(cfg)
    r = cfg.retrieve
    k_probe = min(r.k_probe, clustering.m)

    def emit(fh):
        for qid, text in queries:
            qv = embed_query(qid, text, emb)
            if args.naive:
                res = naive_retrieve(qv, snap, r.K, _gate(cfg), clustering)
            else:
                res = clustered_retrieve(qv, snap, clustering, k_probe, r.K, _gate(cfg), table=table)
            fh.write(json.dumps(res.to_json()) + "\n")

    if args.out:
        write_atomic(args.out, emit)
    else:
        emit(sys.stdout)
    return 0


def _eval_inputs(cfg: RunConfig):
    _require(cfg, "corpus", "qrels", "queries")
    docs = load_corpus(cfg.paths.corpus)
    qrels = load_qrels(cfg.paths.qrels)
    queries = [q for q in load_queries(cfg.paths.queries) if q[0] in qrels]
    if not queries:
        raise InputError("no query in the queries file has relevance judgments")
    return docs, qrels, queries


def cmd_eval(cfg: RunConfig, args) -> int:
    docs, qrels, queries = _eval_inputs(cfg)
    exp = Experiment(docs, cfg)
    reports = []
    for qid, text in queries:
        reports.extend(run_grid(exp, qrels[qid], (qid, text), cfg.eval.modes, cfg.k_values()))
    out = Path(cfg.paths.output_dir)
    doc = metrics_document(reports, cfg)
    write_atomic(out / "metrics.json", lambda fh: fh.write(dumps_metrics(doc)))
    write_atomic(out / "grid.csv", lambda fh: write_grid_csv(reports, fh))
    if not args.no_plots:
        from .plotting import plot_grid

        header, rows = grid_table(reports)
        _write_path_atomic(out / "grid.png", lambda p: plot_grid(header, rows, p))
    print(f"{len(reports)} report cells -> {out / 'metrics.json'}", file=sys.stderr)
    return 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    docs, qrels, queries = _eval_inputs(cfg)
    qid, text = queries[0]
    rows = sweep_clusters([int(m) for m in cfg.sweep.m_values], Experiment(docs, cfg), qrels[qid], (qid, text), cfg)
    out = Path(cfg.paths.output_dir)
    write_atomic(out / "sweep.csv", lambda fh: write_sweep_csv(rows, fh))
    if not args.no_plots:
        from .plotting import plot_sweep

        _write_path_atomic(out / "sweep.png", lambda p: plot_sweep(rows, p))
    print(f"{len(rows)} sweep rows -> {out / 'sweep.csv'}", file=sys.stderr)
    return 0


def cmd_bench(cfg: RunConfig, args) -> int:
    rows = bench_latency([int(s) for s in cfg.bench.sizes], cfg.bench.n_queries, cfg)
    out = Path(cfg.paths.output_dir)
    write_atomic(out / "bench.csv", lambda fh: write_bench_csv(rows, fh))
    if not args.no_plots:
        from .plotting import plot_bench

        _write_path_atomic(out / "bench.png", lambda p: plot_bench(rows, p))
    print(f"{len(rows)} bench rows -> {out / 'bench.csv'}", file=sys.stderr)
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "build": cmd_build,
    "query": cmd_query,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamrag",
        description="Bounded-memory streaming retrieval index with clustered probing.",
        epilog="Any RunConfig key can be overridden as --section.key VALUE, e.g. --retrieve.K 50.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", parents=[common], help="write a synthetic corpus, qrels and query")
    p = sub.add_parser("build", parents=[common], help="stream the corpus into an index and cluster it")
    p.add_argument("--profile-text", help="retrieval profile text (instead of paths.queries)")
    p = sub.add_parser("query", parents=[common], help="answer queries against build artifacts")
    p.add_argument("--text", help="single query text")
    p.add_argument("--query-id", default="q")
    p.add_argument("--naive", action="store_true", help="full scan instead of cluster probing")
    p.add_argument("--out", help="result JSONL path (default stdout)")
    for name, help_ in (
        ("eval", "P/R/F1 for every ablation mode"),
        ("sweep", "accuracy against cluster count"),
        ("bench", "clustered vs full-scan latency"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    return parser


def _split_overrides(extra: Sequence[str], parser: argparse.ArgumentParser) -> list[tuple[str, str]]:
    items = []
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--") or "." not in tok:
            parser.error(f"unrecognized argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            value = next(it, None)
            if value is None:
                parser.error(f"override {tok} needs a value")
        items.append((key, value))
    return items


def _apply_threads() -> contextlib.AbstractContextManager:
    raw = os.environ.get("SAKR_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SAKR_THREADS must be an integer, got {raw!r}") from None
    if n <= 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    overrides = _split_overrides(extra, parser)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, overrides)
        with _apply_threads():
            return COMMANDS[args.command](cfg, args)
    except (InputError, FileNotFoundError, IsADirectoryError, UnicodeDecodeError) as exc:
        print(f"streamrag {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"streamrag {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
