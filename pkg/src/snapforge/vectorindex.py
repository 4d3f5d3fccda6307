"""Embedded vector database: exact flat k-NN plus IVF-flat approximate search.

Stores L2-normalized embeddings and ranks by squared Euclidean distance,
which on unit vectors is monotonically equivalent to cosine distance
(d^2 = 2 - 2 cos). The flat store is always current; the IVF index is a
snapshot built on demand by seeded k-means, and probing all lists
reproduces flat results exactly. Ties are broken by entry_id ascending so
rankings are deterministic.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"SNAPVEC1"
NORM_TOLERANCE = 1e-3


class CollectionError(Exception):
    """Bad collection configuration or entry."""


@dataclass(frozen=True)
class EmbeddingEntry:
    entry_id: str
    doc_id: str
    region_index: int
    vector: np.ndarray
    class_label: str | None = None


@dataclass(frozen=True)
class SearchHit:
    entry_id: str
    doc_id: str
    distance: float


@dataclass
class IvfIndex:
    """Inverted-file index: entries bucketed by nearest k-means centroid."""

    n_lists: int
    centroids: np.ndarray  # (n_lists, dim) float64
    lists: list[list[str]]  # per-centroid entry_ids
    objective_history: list[float] = field(default_factory=list)


def _squared_distances(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Row-wise ||x - q||^2 in float64; the same formula the test oracles use."""
    diff = matrix.astype(np.float64) - query.astype(np.float64)
    return np.einsum("ij,ij->i", diff, diff)


class VectorCollection:
    """Fixed-dimension store of unit vectors with exact and ANN search."""

    def __init__(self, name: str, dimension: int) -> None:
        if dimension < 1:
            raise CollectionError(f"dimension must be >= 1, got {dimension}")
        self.name = name
        self.dimension = dimension
        self._entries: dict[str, EmbeddingEntry] = {}
        self._order: list[str] = []  # insertion order of live entry_ids
        self._matrix: np.ndarray | None = None
        self.ann: IvfIndex | None = None

    def __len__(self) -> int:
        return len(self._entries)

    def entry_ids(self) -> list[str]:
        return list(self._order)

    def get(self, entry_id: str) -> EmbeddingEntry | None:
        return self._entries.get(entry_id)

    def entries_for_doc(self, doc_id: str) -> list[EmbeddingEntry]:
        found = [e for e in self._entries.values() if e.doc_id == doc_id]
        found.sort(key=lambda e: e.region_index)
        return found

    def insert(self, entry: EmbeddingEntry) -> None:
        vec = np.asarray(entry.vector, dtype=np.float32).reshape(-1)
        if vec.shape[0] != self.dimension:
            raise CollectionError(
                f"dimension mismatch: entry has {vec.shape[0]}, collection {self.dimension}"
            )
        norm = float(np.linalg.norm(vec.astype(np.float64)))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise CollectionError(f"vector not L2-normalized (norm={norm:.6f})")
        if entry.entry_id in self._entries:
            raise CollectionError(f"duplicate entry_id {entry.entry_id!r}")
        stored = EmbeddingEntry(entry.entry_id, entry.doc_id, entry.region_index, vec, entry.class_label)
        self._entries[entry.entry_id] = stored
        self._order.append(entry.entry_id)
        self._matrix = None  # staged for ANN until next build; flat sees it now

    def delete_by_doc(self, doc_id: str) -> int:
        doomed = [eid for eid, e in self._entries.items() if e.doc_id == doc_id]
        for eid in doomed:
            del self._entries[eid]
        if doomed:
            gone = set(doomed)
            self._order = [eid for eid in self._order if eid not in gone]
            self._matrix = None
            if self.ann is not None:
                for lst in self.ann.lists:
                    lst[:] = [eid for eid in lst if eid not in gone]
        return len(doomed)

    def _stacked(self) -> np.ndarray:
        if self._matrix is None:
            if self._order:
                self._matrix = np.stack([self._entries[eid].vector for eid in self._order])
            else:
                self._matrix = np.empty((0, self.dimension), dtype=np.float32)
        return self._matrix

    def _rank(self, candidate_ids: list[str], query: np.ndarray, k: int) -> list[SearchHit]:
        if not candidate_ids:
            return []
        matrix = np.stack([self._entries[eid].vector for eid in candidate_ids])
        dists = _squared_distances(matrix, query)
        order = sorted(range(len(candidate_ids)), key=lambda i: (dists[i], candidate_ids[i]))
        hits = []
        for i in order[:k]:
            e = self._entries[candidate_ids[i]]
            hits.append(SearchHit(e.entry_id, e.doc_id, float(dists[i])))
        return hits

    def search_flat(self, query: np.ndarray, k: int) -> list[SearchHit]:
        """Exact k nearest entries; empty collection yields an empty list."""
        if k < 1:
            raise ValueError("k must be >= 1")
        query = np.asarray(query, dtype=np.float32).reshape(-1)
        if query.shape[0] != self.dimension:
            raise CollectionError(
                f"query dimension {query.shape[0]} != collection {self.dimension}"
            )
        if not self._order:
            return []
        dists = _squared_distances(self._stacked(), query)
        order = sorted(range(len(self._order)), key=lambda i: (dists[i], self._order[i]))
        hits = []
        for i in order[:k]:
            e = self._entries[self._order[i]]
            hits.append(SearchHit(e.entry_id, e.doc_id, float(dists[i])))
        return hits

    # -- IVF ---------------------------------------------------------------

    def build_ann(self, n_lists: int | None = None, rng_seed: int = 0) -> IvfIndex:
        """Cluster stored vectors with seeded k-means (20 iterations).

        Every entry lands in exactly one list (its nearest centroid). The
        per-iteration objective (mean squared distance to assigned centroid)
        is recorded and is non-increasing.
        """
        n = len(self._order)
        if n_lists is None:
            n_lists = max(1, int(np.ceil(np.sqrt(n))))
        if n < n_lists:
            raise CollectionError(f"need >= {n_lists} entries to build {n_lists} lists, have {n}")
        data = self._stacked().astype(np.float64)
        centroids, assignments, history = _kmeans(data, n_lists, rng_seed, iterations=20)
        lists: list[list[str]] = [[] for _ in range(n_lists)]
        for pos, cluster in enumerate(assignments):
            lists[cluster].append(self._order[pos])
        self.ann = IvfIndex(n_lists, centroids, lists, history)
        return self.ann

    def search_ann(self, query: np.ndarray, k: int, n_probe: int | None = None) -> list[SearchHit]:
        """Exact search restricted to the n_probe nearest centroids' lists."""
        if self.ann is None:
            raise CollectionError("ANN index not built; call build_ann first")
        index = self.ann
        if n_probe is None:
            n_probe = max(1, index.n_lists // 8)
        if not 1 <= n_probe <= index.n_lists:
            raise ValueError(f"n_probe must be in [1, {index.n_lists}], got {n_probe}")
        if k < 1:
            raise ValueError("k must be >= 1")
        query = np.asarray(query, dtype=np.float32).reshape(-1)
        cdists = _squared_distances(index.centroids, query)
        probe = sorted(range(index.n_lists), key=lambda i: (cdists[i], i))[:n_probe]
        candidates = [eid for li in probe for eid in index.lists[li] if eid in self._entries]
        return self._rank(candidates, query, k)

    # -- persistence ---------------------------------------------------------

    def save(self, path: str) -> None:
        """Header (magic, dimension, count) + packed float32 + id table."""
        ids = [
            [e.entry_id, e.doc_id, e.region_index, e.class_label]
            for e in (self._entries[eid] for eid in self._order)
        ]
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<II", self.dimension, len(self._order)))
            if self._order:
                f.write(self._stacked().astype("<f4").tobytes())
            f.write(json.dumps(ids, ensure_ascii=False).encode("utf-8"))

    @classmethod
    def load(cls, path: str, name: str | None = None) -> "VectorCollection":
        with open(path, "rb") as f:
            magic = f.read(8)
            if magic != MAGIC:
                raise CollectionError(f"bad magic {magic!r} in {path}")
            dimension, count = struct.unpack("<II", f.read(8))
            floats = f.read(4 * dimension * count)
            if len(floats) != 4 * dimension * count:
                raise CollectionError(f"truncated vector block in {path}")
            idblob = f.read()
        ids = json.loads(idblob.decode("utf-8"))
        if len(ids) != count:
            raise CollectionError(f"id table length {len(ids)} != count {count}")
        coll = cls(name or path, dimension)
        vectors = np.frombuffer(floats, dtype="<f4").reshape(count, dimension)
        for row, (entry_id, doc_id, region_index, class_label) in zip(vectors, ids):
            coll.insert(EmbeddingEntry(entry_id, doc_id, region_index, row.copy(), class_label))
        return coll


class VectorStore:
    """Named collections with fixed dimensions."""

    def __init__(self) -> None:
        self._collections: dict[str, VectorCollection] = {}

    def create_collection(self, name: str, dimension: int) -> VectorCollection:
        if name in self._collections:
            raise CollectionError(f"collection {name!r} already exists")
        coll = VectorCollection(name, dimension)
        self._collections[name] = coll
        return coll

    def get(self, name: str) -> VectorCollection:
        try:
            return self._collections[name]
        except KeyError:
            raise CollectionError(f"unknown collection {name!r}") from None

    def names(self) -> list[str]:
        return sorted(self._collections)


def _kmeans(
    data: np.ndarray, k: int, seed: int, iterations: int = 20
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd's algorithm with k-means++ init; returns (centroids, labels, objective)."""
    rng = np.random.default_rng(seed)
    n = data.shape[0]
    centroids = _kmeanspp_init(data, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    history: list[float] = []
    for _ in range(iterations):
        # assignment step
        d2 = _pairwise_sq(data, centroids)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(n), labels].mean()))
        # update step, re-seeding empty clusters at the farthest point
        for c in range(k):
            members = data[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
            else:
                far = int(np.argmax(d2[np.arange(n), labels]))
                centroids[c] = data[far]
    return centroids, labels, history


def _kmeanspp_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centroids = np.empty((k, data.shape[1]), dtype=np.float64)
    centroids[0] = data[rng.integers(n)]
    closest = _squared_distances(data, centroids[0])
    for i in range(1, k):
        total = closest.sum()
        if total <= 0:
            centroids[i:] = data[rng.integers(n, size=k - i)]
            break
        probs = closest / total
        centroids[i] = data[rng.choice(n, p=probs)]
        closest = np.minimum(closest, _squared_distances(data, centroids[i]))
    return centroids


def _pairwise_sq(data: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) squared distances; fast expanded form is fine for clustering."""
    dn = (data * data).sum(axis=1)[:, None]
    cn = (centroids * centroids).sum(axis=1)[None, :]
    return np.maximum(dn + cn - 2.0 * data @ centroids.T, 0.0)
