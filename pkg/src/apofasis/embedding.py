"""Dense-embedding layer: encoder port, cosine kNN store, clustering, analytics.

All vectors are unit-normalized at ingest so the Euclidean geometry used by
k-means matches the cosine distances used for kNN. kNN is exact brute force;
desk-scale stores keep that tractable and testable.

Vector store file format (little-endian):

    magic b"APVC"[4] | u32 version=1 | u32 dim | u32 count
    per record: u32 ada_bytes_len | ada UTF-8 | dim * f32
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

from apofasis.corpus import CorpusLayout, load_document

STORE_MAGIC = b"APVC"
STORE_VERSION = 1


class EmptyStore(RuntimeError):
    """kNN was attempted against a store with no vectors."""


class InvalidK(ValueError):
    """Cluster count outside [1, n_docs]."""


class EmptyCluster(ValueError):
    """Centroid-document lookup on a cluster with no members."""


class EncoderPort(Protocol):
    dimension: int

    def encode(self, text: str) -> np.ndarray: ...


class ReferenceEncoder:
    """Seeded random projection of character trigram counts.

    Hermetic stand-in for a sentence-embedding model: deterministic for a
    fixed seed, no downloads. Texts too short for a trigram map to a fixed
    basis vector so every input still embeds.
    """

    def __init__(self, dimension: int = 128, seed: int = 0):
        self.dimension = dimension
        self.seed = seed
        self._projections: dict[str, np.ndarray] = {}

    def _projection(self, gram: str) -> np.ndarray:
        vec = self._projections.get(gram)
        if vec is None:
            digest = hashlib.sha256(f"{self.seed}\x00{gram}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(self.dimension)
            self._projections[gram] = vec
        return vec

    def encode(self, text: str) -> np.ndarray:
        acc = np.zeros(self.dimension, dtype=np.float64)
        padded = f"\x02{text}\x03"
        grams = [padded[i : i + 3] for i in range(len(padded) - 2)]
        for gram in grams:
            acc += self._projection(gram)
        if not grams or not np.any(acc):
            acc[0] = 1.0
        return acc


class SentenceModelEncoder:
    """Adapter for a sentence-transformers model behind the same port."""

    def __init__(self, model_name: str = "sentence-transformers/all-MiniLM-L6-v2"):
        from sentence_transformers import SentenceTransformer

        self._model = SentenceTransformer(model_name)
        self.dimension = int(self._model.get_sentence_embedding_dimension())

    def encode(self, text: str) -> np.ndarray:
        return np.asarray(self._model.encode(text), dtype=np.float64)


def normalize(vec: np.ndarray) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot normalize zero or non-finite vector")
    return (arr / norm).astype(np.float32)


@dataclass
class VectorStore:
    """Unit-norm float32 vectors keyed by ADA."""

    dimension: int
    _vectors: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, ada: str) -> bool:
        return ada in self._vectors

    def add(self, ada: str, vec: np.ndarray) -> None:
        arr = np.asarray(vec)
        if arr.shape != (self.dimension,):
            raise ValueError(f"expected dimension {self.dimension}, got {arr.shape}")
        self._vectors[ada] = normalize(arr)

    def get(self, ada: str) -> np.ndarray:
        return self._vectors[ada]

    def adas(self) -> list[str]:
        return sorted(self._vectors)

    def matrix(self) -> tuple[list[str], np.ndarray]:
        """(sorted ADAs, stacked float64 matrix), re-normalized in float64.

        Re-normalization undoes the float32 rounding of the stored records so
        cosine math works at full double precision.
        """
        adas = self.adas()
        if not adas:
            return adas, np.zeros((0, self.dimension), dtype=np.float64)
        matrix = np.stack([self._vectors[a] for a in adas]).astype(np.float64)
        matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
        return adas, matrix

    def save(self, path: Path | str) -> None:
        parts = [STORE_MAGIC, struct.pack("<III", STORE_VERSION, self.dimension, len(self._vectors))]
        for ada in self.adas():
            raw = ada.encode("utf-8")
            parts.append(struct.pack("<I", len(raw)))
            parts.append(raw)
            parts.append(self._vectors[ada].astype("<f4").tobytes())
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load(cls, path: Path | str) -> "VectorStore":
        buf = Path(path).read_bytes()
        if buf[:4] != STORE_MAGIC:
            raise ValueError("not a vector store file")
        version, dim, count = struct.unpack_from("<III", buf, 4)
        if version != STORE_VERSION:
            raise ValueError(f"unsupported vector store version {version}")
        store = cls(dimension=dim)
        offset = 16
        for _ in range(count):
            (length,) = struct.unpack_from("<I", buf, offset)
            offset += 4
            ada = buf[offset : offset + length].decode("utf-8")
            offset += length
            vec = np.frombuffer(buf, dtype="<f4", count=dim, offset=offset).copy()
            offset += 4 * dim
            store._vectors[ada] = vec
        return store


def embed_corpus(
    layout: CorpusLayout, encoder: EncoderPort
) -> tuple[VectorStore, list[tuple[str, str]]]:
    """One normalized vector per stored document; failures recorded, not fatal."""
    store = VectorStore(dimension=encoder.dimension)
    failures: list[tuple[str, str]] = []
    for ada in layout.iter_adas():
        try:
            doc = load_document(layout, ada)
            store.add(ada, encoder.encode(doc.body_markdown))
        except Exception as exc:
            failures.append((ada, f"{type(exc).__name__}: {exc}"))
    return store, failures


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - u.v on unit vectors; symmetric, in [0, 2]."""
    return 1.0 - float(np.dot(np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)))


def knn(store: VectorStore, query: np.ndarray, k: int) -> list[tuple[str, float]]:
    """Exact k nearest by cosine distance, ascending; ties broken by ADA."""
    if len(store) == 0:
        raise EmptyStore("vector store is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    adas, matrix = store.matrix()
    q = np.asarray(query, dtype=np.float64)
    norm = float(np.linalg.norm(q))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError("cannot query with a zero or non-finite vector")
    q = q / norm
    dists = 1.0 - matrix @ q
    order = sorted(range(len(adas)), key=lambda i: (dists[i], adas[i]))[:k]
    return [(adas[i], float(dists[i])) for i in order]


@dataclass(frozen=True)
class DistanceHistogram:
    counts: tuple[int, ...]
    edges: tuple[float, ...]
    sample_size: int

    @property
    def n_pairs(self) -> int:
        return sum(self.counts)


def pairwise_distance_histogram(
    store: VectorStore, sample_size: int, bins: int, seed: int
) -> DistanceHistogram:
    """Histogram of pairwise cosine distances over a seeded uniform sample."""
    adas = store.adas()
    if sample_size > len(adas):
        raise ValueError("sample_size exceeds store size")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(adas), size=sample_size, replace=False)
    _, matrix = store.matrix()
    sample = matrix[np.sort(chosen)]
    sims = sample @ sample.T
    iu = np.triu_indices(sample_size, k=1)
    dists = np.clip(1.0 - sims[iu], 0.0, 2.0)
    counts, edges = np.histogram(dists, bins=bins, range=(0.0, 2.0))
    return DistanceHistogram(
        counts=tuple(int(c) for c in counts),
        edges=tuple(float(e) for e in edges),
        sample_size=sample_size,
    )


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    assignments: dict[str, int]
    centroids: np.ndarray
    inertia: float
    inertia_history: tuple[float, ...]

    def members(self, cluster: int) -> list[str]:
        return sorted(a for a, c in self.assignments.items() if c == cluster)


def _inertia(matrix: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    diffs = matrix - centroids[labels]
    return float(np.sum(diffs * diffs))


def _plus_plus_seeds(matrix: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = matrix.shape[0]
    centroids = np.empty((k, matrix.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = matrix[first]
    closest = np.sum((matrix - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = float(closest.sum())
        if total == 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centroids[i] = matrix[idx]
        closest = np.minimum(closest, np.sum((matrix - centroids[i]) ** 2, axis=1))
    return centroids


def kmeans(store: VectorStore, k: int, seed: int, max_iter: int = 100) -> ClusterAssignment:
    """Lloyd's algorithm with seeded k-means++ initialization.

    Runs until assignments are stable or `max_iter` iterations; the recorded
    inertia history is non-increasing. Empty clusters are re-seeded with the
    point farthest from its current centroid.
    """
    adas, matrix = store.matrix()
    n = len(adas)
    if k < 1 or k > n:
        raise InvalidK(f"k={k} outside [1, {n}]")
    rng = np.random.default_rng(seed)
    centroids = _plus_plus_seeds(matrix, k, rng)

    sq_norms = np.sum(matrix * matrix, axis=1)
    labels = np.zeros(n, dtype=np.int64)
    history: list[float] = []
    for _ in range(max_iter):
        # ||x-c||^2 = ||x||^2 + ||c||^2 - 2 x.c, clipped against roundoff.
        d2 = sq_norms[:, None] + np.sum(centroids * centroids, axis=1)[None, :]
        d2 -= 2.0 * (matrix @ centroids.T)
        np.clip(d2, 0.0, None, out=d2)
        new_labels = np.argmin(d2, axis=1)
        for cluster in range(k):
            mask = new_labels == cluster
            if np.any(mask):
                centroids[cluster] = matrix[mask].mean(axis=0)
            else:
                worst = int(np.argmax(d2[np.arange(n), new_labels]))
                centroids[cluster] = matrix[worst]
                new_labels[worst] = cluster
        history.append(_inertia(matrix, centroids, new_labels))
        if np.array_equal(new_labels, labels) and len(history) > 1:
            break
        labels = new_labels

    return ClusterAssignment(
        k=k,
        assignments={ada: int(c) for ada, c in zip(adas, labels)},
        centroids=centroids,
        inertia=history[-1],
        inertia_history=tuple(history),
    )


def centroid_document(assignment: ClusterAssignment, cluster: int, store: VectorStore) -> str:
    """Member whose vector is closest to the cluster centroid; ties by ADA."""
    members = assignment.members(cluster)
    if not members:
        raise EmptyCluster(f"cluster {cluster} has no members")
    centroid = assignment.centroids[cluster]
    best = min(
        members,
        key=lambda ada: (float(np.sum((store.get(ada).astype(np.float64) - centroid) ** 2)), ada),
    )
    return best
