"""Document corpora, relevance judgments and stream chunking."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    BadLabel,
    DuplicateId,
    MalformedLine,
    MalformedRecord,
    MissingId,
    ZeroChunkSize,
)

DEFAULT_CHUNK_SIZE = 64


def combine_fields(headline: str, keywords: Sequence[str], abstract: str) -> str:
    parts = [headline.strip(), " ".join(k.strip() for k in keywords if k.strip()), abstract.strip()]
    return " ".join(p for p in parts if p)


@dataclass(frozen=True)
class Document:
    doc_id: str
    headline: str = ""
    keywords: tuple[str, ...] = ()
    abstract: str = ""
    combined_text: str = field(init=False)

    def __post_init__(self):
        if not self.doc_id:
            raise MissingId("document without doc_id")
        object.__setattr__(self, "keywords", tuple(self.keywords))
        object.__setattr__(
            self, "combined_text", combine_fields(self.headline, self.keywords, self.abstract)
        )

    def to_json(self) -> dict:
        return {
            "id": self.doc_id,
            "headline": self.headline,
            "keywords": list(self.keywords),
            "abstract": self.abstract,
        }


@dataclass(frozen=True)
class QrelSet:
    query_id: str
    relevant: frozenset[str] = frozenset()
    judged: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.relevant <= self.judged:
            raise ValueError("relevant docs must be a subset of judged docs")

    def is_relevant(self, doc_id: str) -> bool:
        # unjudged docs count as label 0
        return doc_id in self.relevant


@dataclass(frozen=True)
class StreamChunk:
    seq_no: int
    docs: tuple


def _record_to_document(rec: dict, line: int) -> Document:
    if not isinstance(rec, dict):
        raise MalformedRecord("record is not an object", line)
    doc_id = rec.get("id", rec.get("doc_id"))
    if doc_id is None or doc_id == "":
        raise MissingId(f"line {line}: record without id")
    headline = rec.get("headline") or ""
    abstract = rec.get("abstract") or ""
    keywords = rec.get("keywords") or []
    if isinstance(keywords, str):
        keywords = [k for k in keywords.split(";")]
    if not isinstance(headline, str) or not isinstance(abstract, str):
        raise MalformedRecord("headline/abstract must be strings", line)
    if not isinstance(keywords, list) or not all(isinstance(k, str) for k in keywords):
        raise MalformedRecord("keywords must be a list of strings", line)
    doc = Document(str(doc_id), headline, tuple(k.strip() for k in keywords if k.strip()), abstract)
    if not doc.combined_text:
        raise MalformedRecord(f"record {doc_id!r} has no non-empty text field", line)
    return doc


def _iter_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                yield lineno, json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"invalid JSON: {exc.msg}", lineno) from None


def _iter_csv(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            # header is line 1
            yield reader.line_num, dict(row)


def load_corpus(path: str | Path, format: str | None = None) -> list[Document]:
    """Read a JSONL or CSV corpus into documents, preserving file order.

    CSV files use ``id``, ``headline``, ``keywords`` and ``abstract`` columns,
    with keywords separated by ``;``. The format is inferred from the file
    suffix when not given.
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format not in ("jsonl", "csv"):
        raise ValueError(f"unknown corpus format {format!r}")
    records = _iter_jsonl(path) if format == "jsonl" else _iter_csv(path)

    docs: list[Document] = []
    seen: dict[str, int] = {}
    for lineno, rec in records:
        doc = _record_to_document(rec, lineno)
        if doc.doc_id in seen:
            raise DuplicateId(
                f"line {lineno}: doc id {doc.doc_id!r} already defined on line {seen[doc.doc_id]}"
            )
        seen[doc.doc_id] = lineno
        docs.append(doc)
    return docs


def write_corpus(docs: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_json(), ensure_ascii=False) + "\n")


def load_qrels(path: str | Path) -> dict[str, QrelSet]:
    """Parse a ``query_id<TAB>doc_id<TAB>label`` file into per-query judgments."""
    relevant: dict[str, set[str]] = {}
    judged: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not parts[0] or not parts[1]:
                raise MalformedLine("expected query_id<TAB>doc_id<TAB>label", lineno)
            qid, did, label = parts
            if label.strip() not in ("0", "1"):
                raise BadLabel(f"label {label!r} not in {{0,1}}", lineno)
            judged.setdefault(qid, set()).add(did)
            rel = relevant.setdefault(qid, set())
            if label.strip() == "1":
                rel.add(did)
    return {
        qid: QrelSet(qid, frozenset(relevant[qid]), frozenset(judged[qid])) for qid in judged
    }


def write_qrels(qrels: Iterable[QrelSet], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in qrels:
            for did in sorted(q.judged):
                fh.write(f"{q.query_id}\t{did}\t{int(did in q.relevant)}\n")


def chunk_stream(docs: Sequence, chunk_size: int) -> list[StreamChunk]:
    if chunk_size < 1:
        raise ZeroChunkSize(f"chunk_size must be >= 1, got {chunk_size}")
    n_chunks = math.ceil(len(docs) / chunk_size)
    return [
        StreamChunk(i, tuple(docs[i * chunk_size : (i + 1) * chunk_size])) for i in range(n_chunks)
    ]


def load_queries(path: str | Path) -> list[tuple[str, str]]:
    """Read ``{"query_id": ..., "text": ...}`` lines as ``(query_id, text)`` pairs."""
    out = []
    seen = set()
    for lineno, rec in _iter_jsonl(Path(path)):
        if not isinstance(rec, dict) or "query_id" not in rec:
            raise MalformedRecord("query record needs query_id", lineno)
        qid = str(rec["query_id"])
        if qid in seen:
            raise DuplicateId(f"line {lineno}: query id {qid!r} repeated")
        seen.add(qid)
        text = rec.get("text") or ""
        if not isinstance(text, str):
            raise MalformedRecord("query text must be a string", lineno)
        out.append((qid, text))
    return out


def write_queries(queries: Iterable[tuple[str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for qid, text in queries:
            fh.write(json.dumps({"query_id": qid, "text": text}, ensure_ascii=False) + "\n")
