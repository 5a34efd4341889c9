"""Signed feature-hashing text embedder and the cosine kernel.

Tokens are hashed with keyed BLAKE2b so bucket assignment is identical on
every platform and Python build (the builtin ``hash`` is salted per process).
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .errors import DimMismatch, InputError, NonFiniteComponent, NotNormalizable, ZeroNorm

VECTOR_MAGIC = b"SAKV"
UNIT_TOL = 1e-6
LOAD_NORM_TOL = 1e-3
_TOKEN_SPLIT = re.compile(r"[^0-9A-Za-z]+")
_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class EmbeddingConfig:
    dim: int = 256
    hash_seed: int = 0
    lowercase: bool = True

    def __post_init__(self):
        if self.dim < 2:
            raise InputError(f"embedding dim must be >= 2, got {self.dim}")


def _unit_check(vec: np.ndarray) -> None:
    if not np.all(np.isfinite(vec)):
        raise NonFiniteComponent("vector has non-finite components")
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > UNIT_TOL:
        raise NotNormalizable(f"vector norm {norm!r} is not unit")


@dataclass(frozen=True, eq=False)
class EmbeddedDoc:
    doc_id: str
    vec: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vec, dtype=np.float64)
        if vec.ndim != 1:
            raise DimMismatch("embedding must be one-dimensional")
        _unit_check(vec)
        vec = vec.copy()
        vec.setflags(write=False)
        object.__setattr__(self, "vec", vec)

    @property
    def dim(self) -> int:
        return self.vec.shape[0]


@dataclass(frozen=True, eq=False)
class QueryVec:
    query_id: str
    vec: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vec, dtype=np.float64)
        if vec.ndim != 1:
            raise DimMismatch("query embedding must be one-dimensional")
        _unit_check(vec)
        vec = vec.copy()
        vec.setflags(write=False)
        object.__setattr__(self, "vec", vec)


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    if lowercase:
        text = text.lower()
    return [t for t in _TOKEN_SPLIT.split(text) if t]


@lru_cache(maxsize=1 << 20)
def _bucket_sign(token: str, dim: int, seed: int) -> tuple[int, float]:
    key = (seed & _U64).to_bytes(8, "little")
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
    h = int.from_bytes(digest, "little")
    sign = -1.0 if bin(h).count("1") & 1 else 1.0
    return h % dim, sign


def embed_text(text: str, cfg: EmbeddingConfig = EmbeddingConfig()) -> np.ndarray:
    """Embed ``text`` as a unit vector of signed hashed term frequencies.

    Text without tokens (or whose buckets cancel exactly) maps to the first
    basis vector so every document has a defined direction.
    """
    acc = np.zeros(cfg.dim, dtype=np.float64)
    for tok in tokenize(text, cfg.lowercase):
        b, s = _bucket_sign(tok, cfg.dim, cfg.hash_seed)
        acc[b] += s
    norm = np.linalg.norm(acc)
    if norm == 0.0:
        acc[0] = 1.0
        return acc
    return acc / norm


def embed_documents(docs: Iterable, cfg: EmbeddingConfig = EmbeddingConfig()) -> list[EmbeddedDoc]:
    return [EmbeddedDoc(d.doc_id, embed_text(d.combined_text, cfg)) for d in docs]


def embed_query(query_id: str, text: str, cfg: EmbeddingConfig = EmbeddingConfig()) -> QueryVec:
    return QueryVec(query_id, embed_text(text, cfg))


def cos_sim(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, normalizing defensively and clamping to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"dims differ: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < 1e-12 or nb < 1e-12:
        raise ZeroNorm("cosine undefined for a zero vector")
    # product form keeps the result symmetric in (a, b)
    val = float(np.dot(a, b)) / (float(na) * float(nb))
    return min(1.0, max(-1.0, val))


def cos_sim_matrix(queries: np.ndarray, vecs: np.ndarray) -> np.ndarray:
    """Batched cos_sim between rows of ``queries`` and rows of ``vecs``."""
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    vecs = np.atleast_2d(np.asarray(vecs, dtype=np.float64))
    if queries.shape[1] != vecs.shape[1]:
        raise DimMismatch(f"dims differ: {queries.shape[1]} vs {vecs.shape[1]}")
    qn = np.linalg.norm(queries, axis=1)
    vn = np.linalg.norm(vecs, axis=1)
    if np.any(qn < 1e-12) or np.any(vn < 1e-12):
        raise ZeroNorm("cosine undefined for a zero vector")
    out = (queries @ vecs.T) / np.outer(qn, vn)
    return np.clip(out, -1.0, 1.0)


# -- vector files ---------------------------------------------------------------

def _normalize_loaded(doc_id: str, vec: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(vec)):
        raise NonFiniteComponent(f"{where}: vector {doc_id!r} has non-finite components")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise NotNormalizable(f"{where}: vector {doc_id!r} has zero norm")
    if abs(norm - 1.0) > LOAD_NORM_TOL:
        raise NotNormalizable(f"{where}: vector {doc_id!r} has norm {norm:.6g}, not near unit")
    return vec / norm


def write_vector_records(fh: BinaryIO, ids: Sequence[str], vecs: np.ndarray) -> None:
    vecs = np.asarray(vecs)
    n, dim = (len(ids), vecs.shape[1] if vecs.ndim == 2 else 0)
    fh.write(VECTOR_MAGIC)
    fh.write(struct.pack("<IQ", dim, n))
    data = vecs.astype("<f4", copy=False)
    for doc_id, row in zip(ids, data):
        raw = doc_id.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)
        fh.write(row.tobytes())


def read_vector_records(fh: BinaryIO) -> tuple[list[str], np.ndarray]:
    """Read the vector block of a binary file, leaving ``fh`` positioned after it."""
    if fh.read(4) != VECTOR_MAGIC:
        raise InputError("not a vector file (bad magic)")
    header = fh.read(12)
    if len(header) != 12:
        raise InputError("truncated vector header")
    dim, count = struct.unpack("<IQ", header)
    ids: list[str] = []
    vecs = np.empty((count, dim), dtype=np.float64)
    for i in range(count):
        (idlen,) = struct.unpack("<H", fh.read(2))
        ids.append(fh.read(idlen).decode("utf-8"))
        raw = fh.read(4 * dim)
        if len(raw) != 4 * dim:
            raise InputError(f"truncated vector record {i}")
        vecs[i] = np.frombuffer(raw, dtype="<f4")
    return ids, vecs


def write_vectors(docs: Sequence[EmbeddedDoc], path: str | Path, format: str | None = None) -> None:
    path = Path(path)
    format = format or ("jsonl" if path.suffix == ".jsonl" else "binary")
    if format == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for d in docs:
                fh.write(json.dumps({"id": d.doc_id, "vec": d.vec.tolist()}) + "\n")
    else:
        mat = np.stack([d.vec for d in docs]) if docs else np.zeros((0, 0))
        with open(path, "wb") as fh:
            write_vector_records(fh, [d.doc_id for d in docs], mat)


def load_vectors(path: str | Path) -> list[EmbeddedDoc]:
    """Load precomputed embeddings from a JSONL or ``SAKV`` binary file."""
    path = Path(path)
    with open(path, "rb") as fh:
        is_binary = fh.read(4) == VECTOR_MAGIC
    out: list[EmbeddedDoc] = []
    if is_binary:
        with open(path, "rb") as fh:
            ids, vecs = read_vector_records(fh)
        for i, (doc_id, vec) in enumerate(zip(ids, vecs)):
            out.append(EmbeddedDoc(doc_id, _normalize_loaded(doc_id, vec, f"record {i}")))
        return out

    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
                doc_id = str(rec["id"])
                vec = np.asarray(rec["vec"], dtype=np.float64)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise InputError(f"line {lineno}: malformed vector record ({exc})") from None
            if vec.ndim != 1:
                raise InputError(f"line {lineno}: vec must be a flat array")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise DimMismatch(f"line {lineno}: dim {vec.shape[0]} != {dim}")
            out.append(EmbeddedDoc(doc_id, _normalize_loaded(doc_id, vec, f"line {lineno}")))
    return out
