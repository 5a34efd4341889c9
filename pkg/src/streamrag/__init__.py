"""Bounded-memory streaming retrieval.

A stream of documents is filtered into a fixed-capacity index that keeps the
documents most similar to a retrieval profile, the retained vectors are
clustered with k-means, and queries are answered by scanning only the
clusters nearest to them.
"""

from .cluster import Clustering, KMeansConfig, assign, cos_distance, kmeans, silhouette
from .corpus import Document, QrelSet, StreamChunk, chunk_stream, load_corpus, load_qrels, load_queries
from .embed import EmbeddedDoc, EmbeddingConfig, QueryVec, cos_sim, embed_text, load_vectors, tokenize
from .hhindex import HHIndex, IndexEntry, RetrievalProfile, Snapshot, build_from_stream, memory_ratio, profile_score
from .retrieve import GateParams, RetrievalResult, clustered_retrieve, naive_retrieve, p_hh, select_clusters

__version__ = "0.1.0"

__all__ = [
    "Clustering", "KMeansConfig", "assign", "cos_distance", "kmeans", "silhouette",
    "Document", "QrelSet", "StreamChunk", "chunk_stream", "load_corpus", "load_qrels", "load_queries",
    "EmbeddedDoc", "EmbeddingConfig", "QueryVec", "cos_sim", "embed_text", "load_vectors", "tokenize",
    "HHIndex", "IndexEntry", "RetrievalProfile", "Snapshot", "build_from_stream", "memory_ratio", "profile_score",
    "GateParams", "RetrievalResult", "clustered_retrieve", "naive_retrieve", "p_hh", "select_clusters",
]
