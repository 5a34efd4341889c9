"""Seeded synthetic corpora standing in for a hand-labeled news collection.

Text corpora use a two-level topic model. Each topic owns a core vocabulary
shared by all of its documents and several facet vocabularies (sub-themes);
a document draws words from its topic's core, from one facet, and, with
probability ``noise``, from a background vocabulary common to every topic.
Topic 0 is the query topic: the query is made of its core words, and its
documents are the relevant ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Document, QrelSet
from .errors import InputError
from .hhindex import Snapshot

CORE_WORDS = 12
FACET_WORDS = 10
BACKGROUND_WORDS = 80
QUERY_WORDS = 8
HEADLINE_LEN = 6
KEYWORD_COUNT = 4
ABSTRACT_LEN = 24


@dataclass(frozen=True)
class SyntheticSpec:
    corpus_size: int = 2000
    relevant_fraction: float = 0.1
    topics: int = 20
    noise: float = 0.2
    seed: int = 0
    facets: int = 4

    def __post_init__(self):
        if not 0 < self.relevant_fraction < 1:
            raise InputError("relevant_fraction must be in (0, 1)")
        if self.corpus_size < 2:
            raise InputError("corpus_size must be >= 2")
        if self.topics < 2:
            raise InputError("need at least 2 topics (one relevant, one or more irrelevant)")
        if not 0 <= self.noise < 1:
            raise InputError("noise must be in [0, 1)")
        if self.facets < 1:
            raise InputError("facets must be >= 1")

    @property
    def n_relevant(self) -> int:
        return round(self.relevant_fraction * self.corpus_size)


def _words(rng: np.random.Generator, topic: int, facet: int, n: int, noise: float) -> list[str]:
    out = []
    for _ in range(n):
        u = rng.random()
        if u < noise:
            out.append(f"bg{rng.integers(BACKGROUND_WORDS)}")
        elif u < noise + (1 - noise) / 2:
            out.append(f"t{topic}c{rng.integers(CORE_WORDS)}")
        else:
            out.append(f"t{topic}f{facet}w{rng.integers(FACET_WORDS)}")
    return out


def query_text(topic: int = 0) -> str:
    return " ".join(f"t{topic}c{i}" for i in range(QUERY_WORDS))


def gen_synthetic(spec: SyntheticSpec) -> tuple[list[Document], QrelSet, tuple[str, str]]:
    """Generate ``(corpus, qrels, (query_id, query_text))`` deterministically from the seed."""
    rng = np.random.default_rng(spec.seed)
    n_rel = spec.n_relevant
    topics = np.concatenate(
        [np.zeros(n_rel, dtype=np.int64), rng.integers(1, spec.topics, size=spec.corpus_size - n_rel)]
    )
    topics = topics[rng.permutation(spec.corpus_size)]
    width = len(str(spec.corpus_size))
    docs = []
    relevant = set()
    for i, t in enumerate(topics):
        t = int(t)
        facet = int(rng.integers(spec.facets))
        doc_id = f"d{i:0{width}d}"
        headline = " ".join(_words(rng, t, facet, HEADLINE_LEN, spec.noise))
        keywords = tuple(_words(rng, t, facet, KEYWORD_COUNT, spec.noise))
        abstract = " ".join(_words(rng, t, facet, ABSTRACT_LEN, spec.noise))
        docs.append(Document(doc_id, headline, keywords, abstract))
        if t == 0:
            relevant.add(doc_id)
    qrels = QrelSet("q0", frozenset(relevant), frozenset(d.doc_id for d in docs))
    return docs, qrels, ("q0", query_text(0))


def gen_vector_snapshot(
    size: int,
    centers: int,
    dim: int = 256,
    spread: float = 0.35,
    seed: int = 0,
) -> tuple[Snapshot, np.ndarray]:
    """Unit vectors scattered around ``centers`` random directions.

    Returns the snapshot and the center matrix (useful for drawing queries).
    Points are assigned to centers round-robin so groups are balanced.
    """
    rng = np.random.default_rng(seed)
    C = rng.standard_normal((centers, dim))
    C /= np.linalg.norm(C, axis=1, keepdims=True)
    owner = np.arange(size) % centers
    X = C[owner] + spread * rng.standard_normal((size, dim)) / np.sqrt(dim)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    width = len(str(size))
    ids = tuple(f"v{i:0{width}d}" for i in range(size))
    scores = np.clip(X @ C[0], -1.0, 1.0)
    order = np.lexsort((np.arange(size), -scores))
    snap = Snapshot(tuple(ids[i] for i in order), X[order], scores[order], order)
    return snap, C


def gen_queries(centers: np.ndarray, n: int, spread: float = 0.35, seed: int = 1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dim = centers.shape[1]
    pick = rng.integers(len(centers), size=n)
    Q = centers[pick] + spread * rng.standard_normal((n, dim)) / np.sqrt(dim)
    return Q / np.linalg.norm(Q, axis=1, keepdims=True)
