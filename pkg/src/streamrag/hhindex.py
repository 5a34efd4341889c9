"""Fixed-capacity similarity heavy-hitter index.

The classic heavy-hitter buffer keeps the most *frequent* items of a stream in
``n`` slots and evicts the weakest one when a stronger item arrives. Here the
strength of a document is its cosine similarity to a retrieval profile, so
the buffer converges to the documents most likely to be retrieved.

Two update modes are supported:

``chunk_max``
    One replacement attempt per chunk, using only the chunk's best document.
``per_doc``
    Every document is offered in order; the result is the exact top-``n``
    of the whole stream, independent of chunking.

Entries are totally ordered by ``(score, doc_id)`` with smaller ids ranking
higher on equal scores; the eviction victim is always the lowest-ranked one.
"""

from __future__ import annotations

import heapq
import itertools
import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .embed import (
    EmbeddedDoc,
    QueryVec,
    cos_sim,
    read_vector_records,
    write_vector_records,
)
from .errors import DimMismatch, EmptyCorpus, InputError, NotInitialized, ZeroCapacity

MODES = ("chunk_max", "per_doc")
AGGREGATIONS = ("max", "mean")
FOOTER_MAGIC = b"SAKF"


@dataclass(frozen=True)
class RetrievalProfile:
    query_vecs: tuple[QueryVec, ...]
    aggregation: str = "max"

    def __post_init__(self):
        object.__setattr__(self, "query_vecs", tuple(self.query_vecs))
        if not self.query_vecs:
            raise InputError("retrieval profile needs at least one query vector")
        if self.aggregation not in AGGREGATIONS:
            raise InputError(f"unknown aggregation {self.aggregation!r}")
        dims = {q.vec.shape[0] for q in self.query_vecs}
        if len(dims) != 1:
            raise DimMismatch(f"profile query vectors have mixed dims {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.query_vecs[0].vec.shape[0]

    @property
    def query_ids(self) -> list[str]:
        return [q.query_id for q in self.query_vecs]


def profile_score(profile: RetrievalProfile, vec: np.ndarray) -> float:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (profile.dim,):
        raise DimMismatch(f"vector dim {vec.shape} != profile dim {profile.dim}")
    sims = [cos_sim(q.vec, vec) for q in profile.query_vecs]
    if profile.aggregation == "max":
        return max(sims)
    return sum(sims) / len(sims)


@dataclass(frozen=True, eq=False)
class IndexEntry:
    doc: EmbeddedDoc
    score: float
    arrival_seq: int

    @property
    def doc_id(self) -> str:
        return self.doc.doc_id


class _Ranked:
    """Heap wrapper: ``a < b`` means ``a`` is the better eviction victim."""

    __slots__ = ("entry",)

    def __init__(self, entry: IndexEntry):
        self.entry = entry

    def __lt__(self, other: "_Ranked") -> bool:
        a, b = self.entry, other.entry
        if a.score != b.score:
            return a.score < b.score
        return a.doc.doc_id > b.doc.doc_id


def _beats(new: IndexEntry, old: IndexEntry) -> bool:
    return _Ranked(old) < _Ranked(new)


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Immutable view of index contents, best entry first.

    Stores columnar arrays so retrieval and clustering can work on the
    vector matrix directly; ``entries`` rebuilds row objects on demand.
    """

    ids: tuple[str, ...]
    vecs: np.ndarray
    scores: np.ndarray
    arrival: np.ndarray
    id_to_row: dict = field(init=False, repr=False)

    def __post_init__(self):
        vecs = np.array(self.vecs, dtype=np.float64, copy=True)
        if vecs.ndim != 2 or vecs.shape[0] != len(self.ids):
            raise InputError("snapshot vectors must be a (len(ids), dim) matrix")
        scores = np.array(self.scores, dtype=np.float64, copy=True)
        arrival = np.array(self.arrival, dtype=np.int64, copy=True)
        for a in (vecs, scores, arrival):
            a.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "vecs", vecs)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "arrival", arrival)
        object.__setattr__(self, "id_to_row", {d: i for i, d in enumerate(self.ids)})
        if len(self.id_to_row) != len(self.ids):
            raise InputError("snapshot contains duplicate doc ids")

    @classmethod
    def from_entries(cls, entries: Iterable[IndexEntry], dim: int | None = None) -> "Snapshot":
        ordered = sorted(entries, key=lambda e: (-e.score, e.doc.doc_id))
        if ordered:
            vecs = np.stack([e.doc.vec for e in ordered])
        else:
            vecs = np.zeros((0, dim or 0))
        return cls(
            ids=tuple(e.doc.doc_id for e in ordered),
            vecs=vecs,
            scores=np.array([e.score for e in ordered], dtype=np.float64),
            arrival=np.array([e.arrival_seq for e in ordered], dtype=np.int64),
        )

    @classmethod
    def from_docs(cls, docs: Sequence[EmbeddedDoc], profile: RetrievalProfile) -> "Snapshot":
        """Snapshot of an unfiltered collection (everything retained)."""
        entries = [IndexEntry(d, profile_score(profile, d.vec), i) for i, d in enumerate(docs)]
        return cls.from_entries(entries, dim=profile.dim)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.vecs.shape[1]

    @cached_property
    def entries(self) -> tuple[IndexEntry, ...]:
        return tuple(
            IndexEntry(EmbeddedDoc(d, v), float(s), int(a))
            for d, v, s, a in zip(self.ids, self.vecs, self.scores, self.arrival)
        )

    @property
    def docs(self) -> list[EmbeddedDoc]:
        return [e.doc for e in self.entries]


def _chunk_docs(chunk) -> Sequence[EmbeddedDoc]:
    return chunk.docs if hasattr(chunk, "docs") else chunk


class HHIndex:
    """Single-writer heavy-hitter buffer of at most ``capacity`` documents.

    With ``guarded=False`` an offered document always evicts the current
    minimum, even when it scores lower; the retained set can then degrade.
    """

    def __init__(self, capacity: int, profile: RetrievalProfile, mode: str = "per_doc", guarded: bool = True):
        if capacity < 1:
            raise ZeroCapacity(f"index capacity must be >= 1, got {capacity}")
        if mode not in MODES:
            raise InputError(f"unknown index mode {mode!r}")
        self.capacity = capacity
        self.profile = profile
        self.mode = mode
        self.guarded = guarded
        self._heap: list[_Ranked] = []
        self._ids: set[str] = set()
        self._seq = itertools.count()
        self._initialized = False
        self.docs_seen = 0
        self.replacements = 0

    def __len__(self) -> int:
        return len(self._heap)

    @property
    def initialized(self) -> bool:
        return self._initialized

    @property
    def min_score(self) -> float | None:
        return self._heap[0].entry.score if self._heap else None

    def _make_entry(self, doc: EmbeddedDoc) -> IndexEntry:
        return IndexEntry(doc, profile_score(self.profile, doc.vec), next(self._seq))

    def _push(self, entry: IndexEntry) -> None:
        heapq.heappush(self._heap, _Ranked(entry))
        self._ids.add(entry.doc.doc_id)

    def _offer(self, entry: IndexEntry) -> bool:
        if entry.doc.doc_id in self._ids:
            return False
        if len(self._heap) < self.capacity:
            self._push(entry)
            return True
        if self.guarded and not _beats(entry, self._heap[0].entry):
            return False
        evicted = heapq.heapreplace(self._heap, _Ranked(entry))
        self._ids.discard(evicted.entry.doc.doc_id)
        self._ids.add(entry.doc.doc_id)
        self.replacements += 1
        return True

    def init_fill(self, stream: Iterable) -> Iterator[Sequence[EmbeddedDoc]]:
        """Fill the buffer with the first ``capacity`` documents unconditionally.

        Returns an iterator over the unconsumed remainder of ``stream``; a
        chunk straddling the fill boundary contributes its tail as a chunk.
        """
        if self._initialized or self._heap:
            raise InputError("init_fill requires an empty index")
        chunks = iter(stream)
        leftover: Sequence[EmbeddedDoc] = ()
        for chunk in chunks:
            docs = _chunk_docs(chunk)
            take = self.capacity - len(self._heap)
            for doc in docs[:take]:
                self.docs_seen += 1
                entry = self._make_entry(doc)
                if entry.doc.doc_id not in self._ids:
                    self._push(entry)
            if len(docs) > take:
                leftover = docs[take:]
                break
            if len(self._heap) >= self.capacity:
                break
        self._initialized = True
        if leftover:
            return itertools.chain([leftover], chunks)
        return chunks

    def offer_chunk(self, chunk) -> int:
        """Offer one chunk; returns the number of replacements made."""
        if not self._initialized:
            raise NotInitialized("offer_chunk called before init_fill")
        docs = _chunk_docs(chunk)
        if not docs:
            return 0
        self.docs_seen += len(docs)
        entries = [self._make_entry(d) for d in docs]
        if self.mode == "per_doc":
            return sum(self._offer(e) for e in entries)
        best = entries[0]
        for e in entries[1:]:
            if _beats(e, best):
                best = e
        return int(self._offer(best))

    def snapshot(self) -> Snapshot:
        return Snapshot.from_entries((r.entry for r in self._heap), dim=self.profile.dim)


def init_fill(index: HHIndex, stream: Iterable) -> Iterator[Sequence[EmbeddedDoc]]:
    return index.init_fill(stream)


def offer_chunk(index: HHIndex, chunk) -> HHIndex:
    index.offer_chunk(chunk)
    return index


def snapshot(index: HHIndex) -> Snapshot:
    return index.snapshot()


def build_from_stream(
    profile: RetrievalProfile,
    chunks: Iterable,
    capacity: int,
    mode: str = "per_doc",
    guarded: bool = True,
) -> HHIndex:
    index = HHIndex(capacity, profile, mode, guarded)
    for chunk in index.init_fill(chunks):
        index.offer_chunk(chunk)
    return index


def memory_ratio(index_capacity: int, corpus_size: int) -> float:
    """Index footprint as a percentage of storing the whole corpus."""
    if corpus_size < 1:
        raise EmptyCorpus("memory ratio undefined for an empty corpus")
    return 100.0 * index_capacity / corpus_size


# -- persistence ----------------------------------------------------------------

@dataclass(frozen=True)
class IndexMeta:
    capacity: int
    mode: str
    query_ids: tuple[str, ...]
    aggregation: str


def write_index(snap: Snapshot, meta: IndexMeta, path: str | Path) -> None:
    """Vector block in snapshot order, then a footer with metadata and scores."""
    with open(path, "wb") as fh:
        write_vector_records(fh, snap.ids, snap.vecs)
        header = json.dumps(
            {
                "capacity": meta.capacity,
                "mode": meta.mode,
                "query_ids": list(meta.query_ids),
                "aggregation": meta.aggregation,
                "count": len(snap),
            },
            sort_keys=True,
        ).encode("utf-8")
        fh.write(FOOTER_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(snap.scores.astype("<f8").tobytes())
        fh.write(snap.arrival.astype("<u8").tobytes())


def read_index(path: str | Path) -> tuple[Snapshot, IndexMeta]:
    with open(path, "rb") as fh:
        ids, vecs = read_vector_records(fh)
        if fh.read(4) != FOOTER_MAGIC:
            raise InputError(f"{path}: missing index footer")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        n = header["count"]
        if n != len(ids):
            raise InputError(f"{path}: footer count {n} != {len(ids)} records")
        scores = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(np.float64)
        arrival = np.frombuffer(fh.read(8 * n), dtype="<u8").astype(np.int64)
    if len(ids):
        norms = np.linalg.norm(vecs, axis=1, keepdims=True)
        vecs = vecs / norms
    meta = IndexMeta(header["capacity"], header["mode"], tuple(header["query_ids"]), header["aggregation"])
    return Snapshot(tuple(ids), vecs.reshape(len(ids), -1), scores, arrival), meta
