"""Mining ambiguous structure from the disagreement of two clusterings.

Regions of uncertainty are connected components of partially overlapping
clusters (0 < IoU < 1) across the two views. From them we build two pools:

  os pool  cross-region medoid pairs (splits of one identity across regions)
  us pool  within-region inconsistent pairs, kept only when they are the
           closest pair between two clusters (non-redundant disagreements)
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .geometry import SimilarityMatrix, sampling_weight
from .model import ConstraintStore, PairKey, Partition, UNKNOWN

OS = "os"
US = "us"

INLIER_INLIER = "inlier_inlier"
INLIER_OUTLIER = "inlier_outlier"
OUTLIER_OUTLIER = "outlier_outlier"


@dataclass
class UncertaintyRegion:
    """One connected component of partially overlapping clusters."""

    region_id: int
    members: np.ndarray  # sorted sample indices
    clusters_a: set[int]
    clusters_b: set[int]
    medoid: int


@dataclass
class CandidatePair:
    """A pair proposed for annotation, with its raw similarity and the
    nonnegative weight the sampler uses (they differ only in cosine mode)."""

    pair: PairKey
    origin: str  # os | us
    pair_type: str
    region: tuple[int, int] | int  # region pair for os, region id for us
    similarity: float
    weight: float | None = None

    def __post_init__(self):
        if self.weight is None:
            self.weight = self.similarity


def cluster_iou(members_1, members_2) -> float:
    """|intersection| / |union| of two sample sets."""
    s1, s2 = set(members_1), set(members_2)
    if not s1 or not s2:
        raise ValueError("IoU needs nonempty sets")
    return len(s1 & s2) / len(s1 | s2)


def pair_type_of(pair: PairKey, outlier_flags: np.ndarray) -> str:
    flagged = int(outlier_flags[pair.a]) + int(outlier_flags[pair.b])
    return (INLIER_INLIER, INLIER_OUTLIER, OUTLIER_OUTLIER)[flagged]


def find_uncertainty_regions(part_a: Partition, part_b: Partition, dist: np.ndarray) -> list[UncertaintyRegion]:
    """Transitive closure of partial cluster overlaps between the two views.

    Builds the bipartite graph over clusters of A and B with an edge whenever
    0 < IoU < 1, and returns each connected component carrying at least one
    edge. Region ids are assigned by ascending smallest member index; the
    medoid minimizes total cosine distance to the other members (ties to the
    lowest sample index).
    """
    if part_a.n != part_b.n:
        raise ValueError("partitions cover different sample counts")
    clusters_a = part_a.clusters()
    clusters_b = part_b.clusters()
    sizes_a = {lab: len(m) for lab, m in clusters_a.items()}
    sizes_b = {lab: len(m) for lab, m in clusters_b.items()}

    # co-occurrence counts give every nonzero-IoU cluster pair in one pass
    overlap: dict[tuple[int, int], int] = {}
    for la, lb in zip(part_a.labels, part_b.labels):
        key = (int(la), int(lb))
        overlap[key] = overlap.get(key, 0) + 1

    # union-find over bipartite cluster nodes, edges = partial overlaps
    parent: dict[tuple[str, int], tuple[str, int]] = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x, y):
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[ry] = rx

    for (la, lb), inter in overlap.items():
        union_size = sizes_a[la] + sizes_b[lb] - inter
        if inter < union_size:  # IoU < 1; inter >= 1 by construction
            na, nb = ("A", la), ("B", lb)
            parent.setdefault(na, na)
            parent.setdefault(nb, nb)
            union(na, nb)

    groups: dict[tuple[str, int], list[tuple[str, int]]] = {}
    for node in parent:
        groups.setdefault(find(node), []).append(node)

    regions = []
    for nodes in groups.values():
        ca = {lab for side, lab in nodes if side == "A"}
        cb = {lab for side, lab in nodes if side == "B"}
        members = np.unique(np.concatenate([clusters_a[lab] for lab in sorted(ca)]))
        sub = dist[np.ix_(members, members)]
        medoid = int(members[int(np.argmin(sub.sum(axis=1)))])
        regions.append((int(members[0]), ca, cb, members, medoid))

    regions.sort(key=lambda r: r[0])
    return [
        UncertaintyRegion(k, members, ca, cb, medoid)
        for k, (_, ca, cb, members, medoid) in enumerate(regions)
    ]


def build_os_pool(
    regions: list[UncertaintyRegion],
    sim: SimilarityMatrix,
    k_max: int,
    s_min: float,
    outlier_flags: np.ndarray | None = None,
    store: ConstraintStore | None = None,
) -> list[CandidatePair]:
    """Cross-region medoid pairs: each medoid proposes its k_max most similar
    peer medoids, kept when similarity >= s_min, deduplicated, and dropped
    when the pair's relation is already derivable."""
    if len(regions) < 2:
        return []
    medoids = np.array([r.medoid for r in regions])
    pool: list[CandidatePair] = []
    seen: set[PairKey] = set()
    for k, region in enumerate(regions):
        sims = sim.values[region.medoid, medoids]
        order = np.argsort(-sims, kind="stable")  # ties toward lower region id
        partners = [int(j) for j in order if j != k][:k_max]
        for j in partners:
            if sims[j] < s_min:
                continue
            pair = PairKey(region.medoid, int(medoids[j]))
            if pair in seen:
                continue
            seen.add(pair)
            if store is not None and store.relation_of(pair) != UNKNOWN:
                continue
            ptype = pair_type_of(pair, outlier_flags) if outlier_flags is not None else INLIER_INLIER
            pool.append(
                CandidatePair(
                    pair,
                    OS,
                    ptype,
                    (min(k, j), max(k, j)),
                    float(sims[j]),
                    sampling_weight(float(sims[j]), sim.mode),
                )
            )
    return pool


def _same_cluster_pairs(members: np.ndarray, labels: np.ndarray) -> set[PairKey]:
    pairs: set[PairKey] = set()
    by_label: dict[int, list[int]] = {}
    for i in members:
        by_label.setdefault(int(labels[i]), []).append(int(i))
    for group in by_label.values():
        for a, b in combinations(group, 2):
            pairs.add(PairKey(a, b))
    return pairs


def inconsistent_pairs(region: UncertaintyRegion, part_a: Partition, part_b: Partition) -> set[PairKey]:
    """Symmetric difference of the within-region same-cluster pair sets."""
    plus_a = _same_cluster_pairs(region.members, part_a.labels)
    plus_b = _same_cluster_pairs(region.members, part_b.labels)
    return plus_a ^ plus_b


def candidate_closest_pairs(
    region: UncertaintyRegion, part_a: Partition, part_b: Partition, dist: np.ndarray
) -> set[PairKey]:
    """For each view and each pair of its distinct clusters inside the region,
    the single minimum-distance cross-cluster sample pair (ties resolve to the
    lexicographically smallest pair)."""
    out: set[PairKey] = set()
    for labels, cluster_ids in ((part_a.labels, region.clusters_a), (part_b.labels, region.clusters_b)):
        groups = {
            lab: np.array([i for i in region.members if labels[i] == lab]) for lab in sorted(cluster_ids)
        }
        for la, lb in combinations(sorted(groups), 2):
            ma, mb = groups[la], groups[lb]
            sub = dist[np.ix_(ma, mb)]
            best = sub.min()
            ii, jj = np.nonzero(sub == best)
            candidates = [PairKey(int(ma[i]), int(mb[j])) for i, j in zip(ii, jj)]
            out.add(min(candidates, key=lambda p: (p.a, p.b)))
    return out


def build_us_pool(
    regions: list[UncertaintyRegion],
    part_a: Partition,
    part_b: Partition,
    dist: np.ndarray,
    sim: SimilarityMatrix,
    outlier_flags: np.ndarray,
    store: ConstraintStore | None = None,
) -> list[CandidatePair]:
    """Within-region non-redundant inconsistent pairs: the inconsistent set
    intersected with the closest-pair candidates, typed by the DBSCAN outlier
    flags of the two samples."""
    pool: list[CandidatePair] = []
    for region in regions:
        kept = inconsistent_pairs(region, part_a, part_b) & candidate_closest_pairs(
            region, part_a, part_b, dist
        )
        for pair in sorted(kept):
            if store is not None and store.relation_of(pair) != UNKNOWN:
                continue
            value = float(sim.values[pair.a, pair.b])
            pool.append(
                CandidatePair(
                    pair,
                    US,
                    pair_type_of(pair, outlier_flags),
                    region.region_id,
                    value,
                    sampling_weight(value, sim.mode),
                )
            )
    return pool


def pool_records(pool: list[CandidatePair], ids: list[str]) -> list[dict]:
    """Audit-file rows for a pool, in pool order."""
    return [
        {
            "a": ids[p.pair.a],
            "b": ids[p.pair.b],
            "origin": p.origin,
            "pair_type": p.pair_type,
            "region": list(p.region) if isinstance(p.region, tuple) else p.region,
            "similarity": p.similarity,
        }
        for p in pool
    ]
