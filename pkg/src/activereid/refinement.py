"""Constrained refinement of a partition against must-link / cannot-link sets.

Plug-and-play post-processing for any clusterer: merge clusters joined by
must-links, then purify each cluster still holding a cannot-link by coloring
its conflict graph and assigning the remaining node groups to labels with a
Hungarian matcher over minimum member distances. The output satisfies every
constraint exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContradictionError, InfeasibleShapeError, ValidationError
from .geometry import cosine_distance_matrix
from .model import ConstraintStore, EmbeddingSet, Partition

SINGLE = "single"
AVERAGE = "average"

PAD_MARGIN = 0.1  # virtual fresh-label cost = max real cost * (1 + margin)


@dataclass
class ConflictGraph:
    """Must-link groups of one impure cluster with cannot-link edges."""

    nodes: list[list[int]]  # sorted member indices per node
    edges: set[tuple[int, int]]  # node-index pairs, i < j
    components: list[list[int]]  # node indices per connected component
    color_counts: list[int]  # greedy color count per component


def greedy_color(num_nodes: int, edges: set[tuple[int, int]]) -> tuple[np.ndarray, int]:
    """Proper coloring in largest-degree-first order (index tie-break).

    Returns (color per node, number of colors used).
    """
    degree = np.zeros(num_nodes, dtype=np.int64)
    adj: list[set[int]] = [set() for _ in range(num_nodes)]
    for i, j in edges:
        if i == j:
            raise ValueError("self-loop")
        adj[i].add(j)
        adj[j].add(i)
        degree[i] += 1
        degree[j] += 1
    order = sorted(range(num_nodes), key=lambda i: (-degree[i], i))
    colors = np.full(num_nodes, -1, dtype=np.int64)
    for i in order:
        taken = {colors[j] for j in adj[i] if colors[j] >= 0}
        c = 0
        while c in taken:
            c += 1
        colors[i] = c
    count = int(colors.max()) + 1 if num_nodes else 0
    return colors, count


def build_conflict_graph(cluster_members, store: ConstraintStore) -> ConflictGraph:
    """Nodes are intra-cluster must-link closures (unconstrained samples are
    singletons); edges come from cannot-link pairs between distinct nodes.

    Raises when a cannot-link falls inside one must-link group, which a
    consistent store cannot produce.
    """
    members = sorted(int(i) for i in cluster_members)
    member_set = set(members)
    # closure over must-link pairs whose both endpoints lie in the cluster
    node_of: dict[int, int] = {}
    nodes: list[list[int]] = []
    root_groups: dict[int, list[int]] = {}
    for i in members:
        root_groups.setdefault(store.ml_component_of(i), []).append(i)
    for group in root_groups.values():
        idx = len(nodes)
        nodes.append(sorted(group))
        for i in group:
            node_of[i] = idx

    edges: set[tuple[int, int]] = set()
    comps = store.ml_components()
    for edge in store.cl_edges():
        side_a = [i for i in comps[edge.a] if i in member_set]
        side_b = [i for i in comps[edge.b] if i in member_set]
        for u in side_a:
            for v in side_b:
                na, nb = node_of[u], node_of[v]
                if na == nb:
                    raise ContradictionError(
                        f"cannot-link between {u} and {v} inside one must-link group"
                    )
                edges.add((min(na, nb), max(na, nb)))

    # connected components over node indices, discovery order by lowest node
    adj: list[set[int]] = [set() for _ in nodes]
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    seen = [False] * len(nodes)
    components: list[list[int]] = []
    color_counts: list[int] = []
    for start in range(len(nodes)):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in sorted(adj[u]):
                if not seen[w]:
                    seen[w] = True
                    stack.append(w)
        comp.sort()
        sub_edges = {(comp.index(i), comp.index(j)) for i, j in edges if i in comp and j in comp}
        _, count = greedy_color(len(comp), sub_edges)
        components.append(comp)
        color_counts.append(count)
    return ConflictGraph(nodes, edges, components, color_counts)


def _node_label_cost(node_members, label_members, dist: np.ndarray, linkage: str) -> float:
    block = dist[np.ix_(node_members, label_members)]
    return float(block.min() if linkage == SINGLE else block.mean())


def hungarian(cost) -> tuple[np.ndarray, float]:
    """Minimum-cost injective row-to-column assignment (r <= c).

    Potentials-based shortest augmenting path; deterministic ties.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValidationError("cost must be a 2-D matrix")
    r, c = cost.shape
    if r > c:
        raise InfeasibleShapeError(f"{r} rows cannot be injectively assigned to {c} columns")
    if not np.all(np.isfinite(cost)):
        raise ValidationError("cost entries must be finite")

    u = np.zeros(r + 1)
    v = np.zeros(c + 1)
    p = np.zeros(c + 1, dtype=np.int64)  # row matched to column j, 1-indexed
    way = np.zeros(c + 1, dtype=np.int64)
    for i in range(1, r + 1):
        p[0] = i
        j0 = 0
        minv = np.full(c + 1, np.inf)
        used = np.zeros(c + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, c + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(c + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1

    assignment = np.full(r, -1, dtype=np.int64)
    for j in range(1, c + 1):
        if p[j] > 0:
            assignment[p[j] - 1] = j - 1
    total = float(cost[np.arange(r), assignment].sum())
    return assignment, total


def merge_must_links(part: Partition, store: ConstraintStore) -> Partition:
    """Union clusters joined by any must-link pair, to fixpoint.

    Outlier flags survive only on samples whose cluster absorbed nothing.
    """
    labels = part.labels
    num = int(labels.max()) + 1 if part.n else 0
    parent = list(range(num))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for group in store.ml_components().values():
        if len(group) < 2:
            continue
        first = find(int(labels[group[0]]))
        for i in group[1:]:
            r = find(int(labels[i]))
            if r != first:
                parent[r] = first

    roots = np.array([find(int(l)) for l in labels], dtype=np.int64)
    merged_sizes = np.zeros(num, dtype=np.int64)
    for l in labels:
        merged_sizes[find(int(l))] += 1
    original_sizes = np.bincount(labels, minlength=num)
    grew = np.array([merged_sizes[find(int(l))] != original_sizes[l] for l in labels])
    flags = part.outlier_flags & ~grew
    return Partition(roots, flags, part.method_tag).renumbered()


def purify_cluster(
    cluster_members,
    store: ConstraintStore,
    embeddings: EmbeddingSet,
    next_id: int,
    linkage: str = SINGLE,
    dist: np.ndarray | None = None,
) -> tuple[dict[int, int], int]:
    """Split one cannot-link-violating cluster into consistent labels.

    The component with the most greedy colors is colored first onto fresh
    labels; remaining components (descending color count, node count, then
    id) are matched to the labels built so far by minimum member distance,
    with overflow nodes opening fresh labels through padded virtual columns.
    Returns the sample -> label mapping and the advanced fresh-label counter.
    """
    if dist is None:
        dist = cosine_distance_matrix(embeddings)
    graph = build_conflict_graph(cluster_members, store)
    order = sorted(
        range(len(graph.components)),
        key=lambda k: (-graph.color_counts[k], -len(graph.components[k]), k),
    )

    mapping: dict[int, int] = {}
    label_members: dict[int, list[int]] = {}

    def open_label(members) -> int:
        nonlocal next_id
        lab = next_id
        next_id += 1
        label_members[lab] = list(members)
        return lab

    anchor = graph.components[order[0]]
    sub_edges = {
        (anchor.index(i), anchor.index(j)) for i, j in graph.edges if i in anchor and j in anchor
    }
    colors, count = greedy_color(len(anchor), sub_edges)
    base = next_id
    for c in range(count):
        open_label([])
    for pos, node_idx in enumerate(anchor):
        lab = base + int(colors[pos])
        for s in graph.nodes[node_idx]:
            mapping[s] = lab
            label_members[lab].append(s)

    for k in order[1:]:
        comp = graph.components[k]
        labels_now = sorted(label_members)
        cost = np.array(
            [
                [
                    _node_label_cost(graph.nodes[ni], label_members[lab], dist, linkage)
                    for lab in labels_now
                ]
                for ni in comp
            ]
        )
        rows, cols = cost.shape
        if rows > cols:
            peak = cost.max() if cost.size else 0.0
            pad = peak * (1.0 + PAD_MARGIN) if peak > 0 else 1.0
            cost = np.hstack([cost, np.full((rows, rows - cols), pad)])
        assignment, _ = hungarian(cost)
        for row, ni in enumerate(comp):
            col = int(assignment[row])
            lab = labels_now[col] if col < len(labels_now) else open_label([])
            for s in graph.nodes[ni]:
                mapping[s] = lab
                label_members[lab].append(s)

    return mapping, next_id


def violated_clusters(part: Partition, store: ConstraintStore) -> list[int]:
    """Cluster labels containing at least one cannot-link pair, ascending."""
    comps = store.ml_components()
    labels = part.labels
    bad: set[int] = set()
    for edge in store.cl_edges():
        labs_a = {int(labels[i]) for i in comps[edge.a]}
        labs_b = {int(labels[i]) for i in comps[edge.b]}
        bad |= labs_a & labs_b
    return sorted(bad)


def refine(
    part: Partition,
    store: ConstraintStore,
    embeddings: EmbeddingSet,
    linkage: str = SINGLE,
) -> Partition:
    """Merge must-links, purify every violating cluster, renumber.

    The result co-labels every must-link pair and separates every
    cannot-link pair; idempotent up to label renaming.
    """
    if part.n == 0:
        return Partition(part.labels, part.outlier_flags, "refined")
    merged = merge_must_links(part, store)
    labels = merged.labels.copy()
    targets = violated_clusters(merged, store)
    if targets:
        dist = cosine_distance_matrix(embeddings)
        clusters = merged.clusters()
        next_id = int(labels.max()) + 1
        for lab in targets:
            mapping, next_id = purify_cluster(
                clusters[lab], store, embeddings, next_id, linkage, dist
            )
            for s, new_lab in mapping.items():
                labels[s] = new_lab

    # outlier status only survives for samples still isolated after refinement
    sizes = {lab: int((labels == lab).sum()) for lab in np.unique(labels)}
    flags = part.outlier_flags & np.array([sizes[int(l)] == 1 for l in labels])
    return Partition(labels, flags, "refined").renumbered()
