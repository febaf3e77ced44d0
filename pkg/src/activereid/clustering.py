"""The two complementary clustering views: DBSCAN (density) and FINCH (first neighbor).

Both run over precomputed matrices and are fully deterministic: all scans
follow ascending sample index and ties break toward the lower index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LevelOutOfRangeError, ValidationError
from .geometry import SimilarityMatrix, cosine_distance_matrix
from .model import EmbeddingSet, Partition


@dataclass
class DbscanParams:
    eps: float
    min_samples: int

    def __post_init__(self):
        if not np.isfinite(self.eps) or self.eps <= 0:
            raise ValidationError("eps must be a positive finite real")
        if self.min_samples < 1:
            raise ValidationError("min_samples must be >= 1")


@dataclass
class FinchHierarchy:
    """Partitions from finest (level 0) to coarsest (single cluster)."""

    levels: list[Partition]


def to_distance(dist_or_sim) -> np.ndarray:
    """Accept a raw distance matrix or a SimilarityMatrix (converted as 1 - s)."""
    if isinstance(dist_or_sim, SimilarityMatrix):
        d = 1.0 - dist_or_sim.values
        np.fill_diagonal(d, 0.0)
        return d
    return np.asarray(dist_or_sim, dtype=np.float64)


def dbscan(dist_or_sim, params: DbscanParams) -> Partition:
    """Density clustering with canonicalized noise.

    Core points have >= min_samples neighbors within eps (counting
    themselves); clusters are the density-connected core components plus
    border points. A border point reachable from several clusters joins the
    cluster of its lowest-index claiming core point. Noise points come back
    as outlier-flagged singleton clusters so they can still take part in
    overlap analysis downstream.
    """
    dist = to_distance(dist_or_sim)
    n = dist.shape[0]
    within = dist <= params.eps
    np.fill_diagonal(within, True)  # self-inclusive neighborhood
    core = within.sum(axis=1) >= params.min_samples

    labels = np.full(n, -1, dtype=np.int64)
    next_label = 0
    for seed in range(n):
        if not core[seed] or labels[seed] != -1:
            continue
        # flood the density-connected core component
        stack = [seed]
        labels[seed] = next_label
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(within[i] & core):
                if labels[j] == -1:
                    labels[j] = next_label
                    stack.append(j)
        next_label += 1

    outlier = np.zeros(n, dtype=bool)
    for i in range(n):
        if core[i]:
            continue
        claiming = np.flatnonzero(within[i] & core)
        if claiming.size:
            labels[i] = labels[claiming[0]]  # lowest-index claiming core
        else:
            labels[i] = next_label
            next_label += 1
            outlier[i] = True

    return Partition(labels, outlier, "A").renumbered()


def _first_neighbors(dist: np.ndarray) -> np.ndarray:
    """Index of each row's nearest other point; ties go to the lower index."""
    d = dist.copy()
    np.fill_diagonal(d, np.inf)
    return np.argmin(d, axis=1)  # argmin returns the first (lowest) index on ties


def _first_neighbor_components(nn: np.ndarray) -> np.ndarray:
    """Connected components of the symmetric first-neighbor graph:
    i ~ j iff nn[i] = j, nn[j] = i, or nn[i] = nn[j].

    Shared-neighbor edges are implied transitively by the i ~ nn[i] edges,
    so unioning each point with its first neighbor suffices.
    """
    n = nn.shape[0]
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in range(n):
        ra, rb = find(i), find(int(nn[i]))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    labels = np.empty(n, dtype=np.int64)
    seen: dict[int, int] = {}
    for i in range(n):
        r = find(i)
        if r not in seen:
            seen[r] = len(seen)
        labels[i] = seen[r]
    return labels


def finch(emb: EmbeddingSet) -> FinchHierarchy:
    """First-neighbor agglomeration: level 0 links every sample to its nearest
    neighbor (and to samples sharing one); coarser levels repeat the rule on
    cluster means until everything merges."""
    if emb.n < 2:
        raise ValidationError("finch needs n >= 2")
    dist = cosine_distance_matrix(emb)
    sample_labels = _first_neighbor_components(_first_neighbors(dist))
    levels = [Partition(sample_labels, method_tag="B")]

    while levels[-1].num_clusters > 1:
        current = levels[-1].labels
        c = int(current.max()) + 1
        means = np.zeros((c, emb.dim))
        for lab in range(c):
            means[lab] = emb.vectors[current == lab].mean(axis=0)
        mean_set = EmbeddingSet([str(i) for i in range(c)], means)
        merged = _first_neighbor_components(_first_neighbors(cosine_distance_matrix(mean_set)))
        new_labels = merged[current]
        levels.append(Partition(new_labels, method_tag="B").renumbered())

    return FinchHierarchy(levels)


def select_view(hierarchy: FinchHierarchy, level: int) -> Partition:
    """Pick one granularity from the hierarchy (0 = finest)."""
    if not 0 <= level < len(hierarchy.levels):
        raise LevelOutOfRangeError(
            f"level {level} out of range; hierarchy has {len(hierarchy.levels)} levels"
        )
    return hierarchy.levels[level]
