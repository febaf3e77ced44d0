"""Distances, neighborhoods and the k-reciprocal-neighbor similarity.

Everything here is exact (no approximate neighbor search) and deterministic:
ties in neighbor ranking always break toward the lower sample index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError, ZeroVectorError
from .model import EmbeddingSet

COSINE = "cosine"
K_RECIPROCAL_JACCARD = "k_reciprocal_jaccard"


@dataclass
class SimilarityMatrix:
    """Dense symmetric similarity with its construction mode.

    Jaccard mode lives in [0, 1] with unit diagonal; cosine mode in [-1, 1],
    also with unit diagonal.
    """

    values: np.ndarray
    mode: str

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass
class NeighborList:
    """Per-sample k nearest neighbors under cosine distance, self excluded.

    indices and distances are (n, k); each row is sorted ascending by
    distance with ties broken by ascending neighbor index.
    """

    indices: np.ndarray
    distances: np.ndarray
    k: int


def cosine_distance(u, v) -> float:
    """1 - cos(u, v), in [0, 2]. Raises ZeroVectorError on zero-norm input."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVectorError("cosine distance undefined for zero vectors")
    cos = float(np.dot(u, v) / (nu * nv))
    return 1.0 - min(1.0, max(-1.0, cos))


def _unit_rows(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroVectorError(f"sample {bad} has a zero feature vector")
    return vectors / norms[:, None]


def cosine_similarity_matrix(emb: EmbeddingSet) -> SimilarityMatrix:
    unit = _unit_rows(emb.vectors)
    s = unit @ unit.T
    s = (s + s.T) / 2.0  # force exact symmetry
    np.clip(s, -1.0, 1.0, out=s)
    np.fill_diagonal(s, 1.0)
    return SimilarityMatrix(s, COSINE)


def cosine_distance_matrix(emb: EmbeddingSet) -> np.ndarray:
    """Dense n x n cosine distance in [0, 2], zero diagonal."""
    d = 1.0 - cosine_similarity_matrix(emb).values
    np.fill_diagonal(d, 0.0)
    return d


def knn(emb: EmbeddingSet, k: int) -> NeighborList:
    """Exact k nearest neighbors under cosine distance.

    Requires k < n. Self is excluded by index (duplicates of a point are
    legitimate neighbors); equal distances rank by ascending index.
    """
    n = emb.n
    if not 1 <= k < n:
        raise ValidationError(f"need 1 <= k < n, got k = {k}, n = {n}")
    dist = cosine_distance_matrix(emb)
    np.fill_diagonal(dist, np.inf)
    # stable argsort on equal distances preserves ascending index order
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return NeighborList(order, np.take_along_axis(dist, order, axis=1), k)


def reciprocal_sets(neigh: NeighborList) -> np.ndarray:
    """Boolean membership matrix R: R[u, v] iff v is a k-reciprocal neighbor
    of u (each appears in the other's kNN list), plus u itself."""
    n = neigh.indices.shape[0]
    member = np.zeros((n, n), dtype=bool)
    rows = np.repeat(np.arange(n), neigh.k)
    member[rows, neigh.indices.ravel()] = True
    recip = member & member.T
    np.fill_diagonal(recip, True)
    return recip


def k_reciprocal_similarity(emb: EmbeddingSet, k: int) -> SimilarityMatrix:
    """Jaccard overlap of k-reciprocal neighbor sets, in [0, 1].

    sim(u, v) = |R(u) & R(v)| / |R(u) | R(v)| with R(u) the reciprocal set of
    u including u itself. Integer set arithmetic keeps the matrix exactly
    symmetric with a unit diagonal.
    """
    recip = reciprocal_sets(knn(emb, k)).astype(np.int64)
    inter = recip @ recip.T
    sizes = recip.sum(axis=1)
    union = sizes[:, None] + sizes[None, :] - inter
    return SimilarityMatrix(inter / union, K_RECIPROCAL_JACCARD)


def sampling_weight(value: float, mode: str) -> float:
    """Map a similarity value onto a nonnegative sampling weight.

    Jaccard similarities already live in [0, 1] and pass through unchanged;
    cosine similarities shift affinely from [-1, 1] onto [0, 1], preserving
    order while keeping every weight usable as probability mass.
    """
    if mode == K_RECIPROCAL_JACCARD:
        return float(value)
    if mode == COSINE:
        return (float(value) + 1.0) / 2.0
    raise ValidationError(f"unknown similarity mode {mode!r}")


def pair_similarity(recip: np.ndarray, u: int, v: int) -> float:
    """On-demand Jaccard similarity of two samples from a reciprocal
    membership matrix, for runs too large to materialize the full matrix."""
    inter = int(np.count_nonzero(recip[u] & recip[v]))
    union = int(np.count_nonzero(recip[u] | recip[v]))
    return inter / union


def build_similarity(emb: EmbeddingSet, mode: str, knn_k: int, materialize_threshold: int = 20000) -> SimilarityMatrix:
    """Similarity matrix in the requested mode, refusing to densify huge runs."""
    if emb.n > materialize_threshold:
        raise ValidationError(
            f"n = {emb.n} exceeds materialize_threshold = {materialize_threshold}; "
            "use reciprocal_sets/pair_similarity for on-demand similarities"
        )
    if mode == COSINE:
        return cosine_similarity_matrix(emb)
    if mode == K_RECIPROCAL_JACCARD:
        return k_reciprocal_similarity(emb, min(knn_k, emb.n - 1))
    raise ValidationError(f"unknown similarity mode {mode!r}")
