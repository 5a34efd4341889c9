"""Lloyd k-means under the chord distance ``sqrt(2 * (1 - cos))`` and silhouette scoring.

Centroids are plain member means and are *not* projected back onto the unit
sphere; distances to them go through the normalizing cosine, so the mean's
direction is what matters. Because the mean direction maximizes the summed
cosine of a cluster, both Lloyd half-steps are non-increasing in inertia.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .embed import EmbeddedDoc, cos_sim
from .errors import (
    DimMismatch,
    EmptyInput,
    InputError,
    NoCentroids,
    SingleCluster,
    TooManyClusters,
)


@dataclass(frozen=True)
class KMeansConfig:
    m: int
    seed: int = 0
    max_iters: int = 100
    tol: float = 1e-4

    def __post_init__(self):
        if self.m < 1:
            raise InputError(f"cluster count must be >= 1, got {self.m}")
        if self.max_iters < 0:
            raise InputError("max_iters must be >= 0")


@dataclass(frozen=True, eq=False)
class Clustering:
    doc_ids: tuple[str, ...]
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    history: tuple[float, ...] = ()
    n_iter: int = 0
    converged: bool = False

    @property
    def m(self) -> int:
        return self.centroids.shape[0]

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.m)

    @cached_property
    def assignment(self) -> dict[str, int]:
        return {d: int(c) for d, c in zip(self.doc_ids, self.labels)}

    def members(self, j: int) -> list[str]:
        return [d for d, c in zip(self.doc_ids, self.labels) if c == j]


def points_matrix(points) -> tuple[tuple[str, ...], np.ndarray]:
    """Accept a snapshot, a sequence of EmbeddedDoc, or an ``(ids, matrix)`` pair."""
    if hasattr(points, "ids") and hasattr(points, "vecs"):
        return tuple(points.ids), np.asarray(points.vecs, dtype=np.float64)
    if isinstance(points, tuple) and len(points) == 2 and isinstance(points[1], np.ndarray):
        ids, mat = points
        return tuple(ids), np.asarray(mat, dtype=np.float64)
    points = list(points)
    if not points:
        return (), np.zeros((0, 0))
    return tuple(p.doc_id for p in points), np.stack([p.vec for p in points])


def _centroid_cos(X: np.ndarray, C: np.ndarray, xn: np.ndarray | None = None) -> np.ndarray:
    if xn is None:
        xn = np.linalg.norm(X, axis=1)
    cn = np.linalg.norm(C, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = (X @ C.T) / xn[:, None] / cn[None, :]
    # a zero-mean centroid has no direction; treat it as orthogonal to everything
    cos[:, cn < 1e-12] = 0.0
    return np.clip(cos, -1.0, 1.0, out=cos)


def cos_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(max(0.0, 2.0 * (1.0 - cos_sim(a, b)))))


def _sq_dist(X: np.ndarray, C: np.ndarray, xn: np.ndarray | None = None) -> np.ndarray:
    d2 = _centroid_cos(X, C, xn)
    d2 *= -2.0
    d2 += 2.0
    return np.maximum(d2, 0.0, out=d2)


def _means(X: np.ndarray, labels: np.ndarray, m: int) -> np.ndarray:
    # stable grouping fixes the summation order regardless of thread count
    order = np.argsort(labels, kind="stable")
    counts = np.bincount(labels, minlength=m)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    sums = np.add.reduceat(X[order], starts, axis=0)
    return sums / counts[:, None]


def _seed_plusplus(X: np.ndarray, xn: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dist(X, X[chosen[0]][None, :], xn)[:, 0]
    for _ in range(1, m):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(remaining[rng.integers(len(remaining))])
        chosen.append(idx)
        np.minimum(d2, _sq_dist(X, X[idx][None, :], xn)[:, 0], out=d2)
    return X[chosen].copy()


def _repair_empty(
    X: np.ndarray, C: np.ndarray, labels: np.ndarray, d2: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    m = C.shape[0]
    counts = np.bincount(labels, minlength=m)
    empty = np.flatnonzero(counts == 0)
    if len(empty) == 0:
        return C, labels
    labels = labels.copy()
    C = C.copy()
    own = d2[np.arange(len(labels)), labels].copy()
    for j in empty:
        donors = counts[labels] > 1
        cand = np.where(donors, own, -np.inf)
        i = int(np.argmax(cand))
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] = 1
        own[i] = -np.inf
        C[j] = X[i]
    return C, labels


def _own_cost(d2: np.ndarray, labels: np.ndarray) -> float:
    return float(d2[np.arange(len(labels)), labels].sum())


def kmeans(points, cfg: KMeansConfig) -> Clustering:
    """Cluster unit vectors into ``cfg.m`` groups with k-means++ seeding.

    Stops when assignments are stable, when the relative inertia gain of an
    iteration falls below ``cfg.tol``, or after ``cfg.max_iters`` updates.
    The returned centroids are always the means of their members.
    """
    ids, X = points_matrix(points)
    n = X.shape[0]
    if n == 0:
        raise EmptyInput("kmeans needs at least one point")
    if cfg.m > n:
        raise TooManyClusters(f"m={cfg.m} exceeds number of points {n}")
    rng = np.random.default_rng(cfg.seed)
    m = cfg.m
    xn = np.linalg.norm(X, axis=1)

    C = _seed_plusplus(X, xn, m, rng)
    d2 = _sq_dist(X, C, xn)
    labels = np.argmin(d2, axis=1)
    C, labels = _repair_empty(X, C, labels, d2)
    history = [_own_cost(_sq_dist(X, C, xn), labels)]
    converged = False
    n_iter = 0
    fresh = False  # True when C holds the means of the current labels
    while n_iter < cfg.max_iters:
        C = _means(X, labels, m)
        fresh = True
        n_iter += 1
        d2 = _sq_dist(X, C, xn)
        inertia = _own_cost(d2, labels)
        prev = history[-1]
        history.append(inertia)
        new_labels = np.argmin(d2, axis=1)
        C_rep, new_labels = _repair_empty(X, C, new_labels, d2)
        if np.array_equal(new_labels, labels):
            converged = True
            break
        if prev <= 0.0 or (prev - inertia) / prev < cfg.tol:
            break
        C, labels = C_rep, new_labels
        fresh = False
    if not fresh:
        C = _means(X, labels, m)
        history.append(_own_cost(_sq_dist(X, C, xn), labels))
    return Clustering(
        doc_ids=ids,
        centroids=C,
        labels=labels.astype(np.int64),
        inertia=history[-1],
        history=tuple(history),
        n_iter=n_iter,
        converged=converged,
    )


def assign(vec: np.ndarray, centroids: np.ndarray) -> int:
    centroids = np.atleast_2d(np.asarray(centroids, dtype=np.float64))
    if centroids.shape[0] == 0 or centroids.size == 0:
        raise NoCentroids("no centroids to assign to")
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[0] != centroids.shape[1]:
        raise DimMismatch(f"vector dim {vec.shape[0]} != centroid dim {centroids.shape[1]}")
    return int(np.argmin(_sq_dist(vec[None, :], centroids)[0]))


def silhouette(points, labels, block: int = 1024) -> float:
    """Mean silhouette coefficient under chord distance.

    ``labels`` may be a Clustering or an array aligned with ``points``.
    Points in singleton clusters score 0.
    """
    _, X = points_matrix(points)
    if isinstance(labels, Clustering):
        labels = labels.labels
    labels = np.asarray(labels, dtype=np.int64)
    n = X.shape[0]
    if len(labels) != n:
        raise InputError("labels must align with points")
    uniq, labels = np.unique(labels, return_inverse=True)
    m = len(uniq)
    if m < 2:
        raise SingleCluster("silhouette is undefined for a single cluster")
    sizes = np.bincount(labels, minlength=m).astype(np.float64)
    onehot = np.zeros((n, m))
    onehot[np.arange(n), labels] = 1.0
    norms = np.linalg.norm(X, axis=1)
    s = np.zeros(n)
    for start in range(0, n, block):
        stop = min(n, start + block)
        cos = (X[start:stop] @ X.T) / np.outer(norms[start:stop], norms)
        dist = np.sqrt(np.maximum(0.0, 2.0 * (1.0 - np.clip(cos, -1.0, 1.0))))
        rows = np.arange(stop - start)
        dist[rows, rows + start] = 0.0
        sums = dist @ onehot
        own = labels[start:stop]
        own_size = sizes[own]
        with np.errstate(divide="ignore", invalid="ignore"):
            a = sums[rows, own] / (own_size - 1)
            means = sums / sizes
        means[rows, own] = np.inf
        b = means.min(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            blk = (b - a) / np.maximum(a, b)
        blk[own_size <= 1] = 0.0
        blk[~np.isfinite(blk)] = 0.0
        s[start:stop] = blk
    return float(np.clip(s.mean(), -1.0, 1.0))


# -- persistence ----------------------------------------------------------------

def write_clustering(cl: Clustering, path: str | Path, extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "type": "header",
            "m": cl.m,
            "dim": int(cl.centroids.shape[1]),
            "inertia": cl.inertia,
            "n_iter": cl.n_iter,
            "converged": cl.converged,
        }
        if extra:
            header.update(extra)
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for j, (c, size) in enumerate(zip(cl.centroids, cl.sizes)):
            rec = {"type": "centroid", "cluster": j, "size": int(size), "vec": c.tolist()}
            fh.write(json.dumps(rec) + "\n")
        fh.write(
            json.dumps(
                {"type": "assignment", "doc_ids": list(cl.doc_ids), "clusters": cl.labels.tolist()}
            )
            + "\n"
        )


def read_clustering(path: str | Path) -> Clustering:
    header = None
    cents: dict[int, list[float]] = {}
    ids: list[str] = []
    labels: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            rec = json.loads(raw)
            kind = rec.get("type")
            if kind == "header":
                header = rec
            elif kind == "centroid":
                cents[int(rec["cluster"])] = rec["vec"]
            elif kind == "assignment":
                ids.extend(rec["doc_ids"])
                labels.extend(int(c) for c in rec["clusters"])
            else:
                raise InputError(f"{path}: line {lineno}: unknown record type {kind!r}")
    if header is None or len(cents) != header["m"]:
        raise InputError(f"{path}: incomplete clustering file")
    C = np.array([cents[j] for j in range(header["m"])], dtype=np.float64)
    return Clustering(
        doc_ids=tuple(ids),
        centroids=C,
        labels=np.array(labels, dtype=np.int64),
        inertia=float(header["inertia"]),
        n_iter=int(header.get("n_iter", 0)),
        converged=bool(header.get("converged", False)),
    )


def clustering_for(points: Sequence[EmbeddedDoc] | object, cfg: KMeansConfig) -> Clustering:
    """kmeans with ``m`` clipped to the number of points."""
    ids, X = points_matrix(points)
    m = min(cfg.m, max(1, len(ids)))
    return kmeans((ids, X), KMeansConfig(m, cfg.seed, cfg.max_iters, cfg.tol))
