"""Shared data model: embeddings, pair keys, partitions, constraints, run configuration."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import ContradictionError, ValidationError

MUST_LINK = "must_link"
CANNOT_LINK = "cannot_link"
UNKNOWN = "unknown"

RELATIONS = (MUST_LINK, CANNOT_LINK)
SOURCES = ("oracle", "seed", "inferred")
METHOD_TAGS = ("A", "B", "refined")


@dataclass(frozen=True, order=True)
class PairKey:
    """Canonical unordered sample pair: always stored with a < b."""

    a: int
    b: int

    def __post_init__(self):
        if self.a == self.b:
            raise ValidationError(f"pair endpoints must differ, got ({self.a}, {self.b})")
        if self.a > self.b:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)


@dataclass(frozen=True)
class Constraint:
    """One pairwise annotation with its provenance."""

    pair: PairKey
    relation: str  # must_link | cannot_link
    source: str = "oracle"  # oracle | seed | inferred
    cycle: int = 0

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValidationError(f"bad relation {self.relation!r}")
        if self.source not in SOURCES:
            raise ValidationError(f"bad source {self.source!r}")
        if self.cycle < 0:
            raise ValidationError("cycle must be >= 0")


class EmbeddingSet:
    """n samples with d-dimensional feature vectors and optional metadata.

    ids are opaque unique strings; identities, when present, are ground-truth
    labels covering every sample (used by the simulated oracle and metrics).
    """

    def __init__(self, ids, vectors, image_uris=None, identities=None):
        self.ids: list[str] = list(ids)
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.image_uris: list[str] | None = list(image_uris) if image_uris is not None else None
        self.identities: list[str] | None = list(identities) if identities is not None else None
        self._validate()
        self._index = {s: i for i, s in enumerate(self.ids)}

    def _validate(self):
        if self.vectors.ndim != 2:
            raise ValidationError("vectors must be a 2-D matrix")
        n, d = self.vectors.shape
        if n < 1 or d < 1:
            raise ValidationError("need n >= 1 samples and d >= 1 dimensions")
        if len(self.ids) != n:
            raise ValidationError(f"{len(self.ids)} ids for {n} vector rows")
        if len(set(self.ids)) != n:
            raise ValidationError("sample ids must be unique")
        if not np.all(np.isfinite(self.vectors)):
            raise ValidationError("vectors contain non-finite values")
        for name, meta in (("image_uris", self.image_uris), ("identities", self.identities)):
            if meta is not None and len(meta) != n:
                raise ValidationError(f"{name} length {len(meta)} != n = {n}")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def index_of(self, sample_id: str) -> int:
        return self._index[sample_id]

    def with_vectors(self, vectors) -> "EmbeddingSet":
        """Same samples, replacement feature matrix (e.g. after a refresh)."""
        return EmbeddingSet(self.ids, vectors, self.image_uris, self.identities)


class Partition:
    """A cluster assignment over all samples plus per-sample outlier flags."""

    def __init__(self, labels, outlier_flags=None, method_tag="A"):
        self.labels = np.asarray(labels, dtype=np.int64)
        if outlier_flags is None:
            outlier_flags = np.zeros(self.labels.shape[0], dtype=bool)
        self.outlier_flags = np.asarray(outlier_flags, dtype=bool)
        self.method_tag = method_tag
        if self.labels.ndim != 1:
            raise ValidationError("labels must be 1-D")
        if self.labels.shape != self.outlier_flags.shape:
            raise ValidationError("labels and outlier_flags must have equal length")
        if self.labels.size and self.labels.min() < 0:
            raise ValidationError("cluster labels must be non-negative")
        if method_tag not in METHOD_TAGS:
            raise ValidationError(f"bad method_tag {method_tag!r}")

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def num_clusters(self) -> int:
        return len(np.unique(self.labels))

    def clusters(self) -> dict[int, np.ndarray]:
        """label -> sorted member indices."""
        return {int(lab): np.flatnonzero(self.labels == lab) for lab in np.unique(self.labels)}

    def renumbered(self, method_tag=None) -> "Partition":
        """Relabel clusters to consecutive integers from 0 by first occurrence."""
        mapping: dict[int, int] = {}
        new = np.empty_like(self.labels)
        for i, lab in enumerate(self.labels):
            key = int(lab)
            if key not in mapping:
                mapping[key] = len(mapping)
            new[i] = mapping[key]
        return Partition(new, self.outlier_flags.copy(), method_tag or self.method_tag)

    def is_canonical(self) -> bool:
        """True if every outlier-flagged sample sits in a singleton cluster."""
        counts = np.bincount(self.labels)
        return bool(np.all(counts[self.labels[self.outlier_flags]] == 1))


def partitions_equivalent(p: Partition, q: Partition) -> bool:
    """Label-isomorphism check: same grouping regardless of label values."""
    if p.n != q.n:
        return False
    return np.array_equal(p.renumbered().labels, q.renumbered().labels)


class ConstraintStore:
    """Accumulated ML/CL constraints with transitive closure.

    Must-links are kept as a union-find over samples; cannot-links as edges
    between must-link components. A constraint that conflicts with the closure
    raises ContradictionError and leaves the store unchanged. Duplicates are
    idempotent.
    """

    def __init__(self, num_samples: int):
        if num_samples < 1:
            raise ValidationError("num_samples must be >= 1")
        self.num_samples = num_samples
        self._parent = list(range(num_samples))
        self._size = [1] * num_samples
        self._enemies: dict[int, set[int]] = {}
        self.constraints: list[Constraint] = []
        self._seen: set[tuple[PairKey, str]] = set()
        self.num_components = num_samples

    def _find(self, x: int) -> int:
        root = x
        while self._parent[root] != root:
            root = self._parent[root]
        while self._parent[x] != root:
            self._parent[x], x = root, self._parent[x]
        return root

    def _check_pair(self, p: PairKey):
        if not (0 <= p.a < self.num_samples and 0 <= p.b < self.num_samples):
            raise ValidationError(f"pair {p} outside dataset of {self.num_samples} samples")

    def relation_of(self, p: PairKey) -> str:
        """Closed relation of a pair: must_link, cannot_link or unknown."""
        self._check_pair(p)
        ra, rb = self._find(p.a), self._find(p.b)
        if ra == rb:
            return MUST_LINK
        if rb in self._enemies.get(ra, ()):
            return CANNOT_LINK
        return UNKNOWN

    def add(self, c: Constraint) -> None:
        """Apply one constraint, maintaining closure. Raises on contradiction."""
        self._check_pair(c.pair)
        ra, rb = self._find(c.pair.a), self._find(c.pair.b)
        if c.relation == MUST_LINK:
            if rb in self._enemies.get(ra, ()):
                raise ContradictionError(
                    f"must_link{(c.pair.a, c.pair.b)} conflicts with a derived cannot_link"
                )
            if ra != rb:
                self._union(ra, rb)
        else:
            if ra == rb:
                raise ContradictionError(
                    f"cannot_link{(c.pair.a, c.pair.b)} conflicts with a derived must_link"
                )
            self._enemies.setdefault(ra, set()).add(rb)
            self._enemies.setdefault(rb, set()).add(ra)
        key = (c.pair, c.relation)
        if key not in self._seen:
            self._seen.add(key)
            self.constraints.append(c)

    def _union(self, ra: int, rb: int):
        if self._size[ra] < self._size[rb]:
            ra, rb = rb, ra
        self._parent[rb] = ra
        self._size[ra] += self._size[rb]
        self.num_components -= 1
        absorbed = self._enemies.pop(rb, set())
        for e in absorbed:
            self._enemies[e].discard(rb)
            self._enemies[e].add(ra)
        if absorbed:
            self._enemies.setdefault(ra, set()).update(absorbed)

    def ml_component_of(self, sample: int) -> int:
        """Representative sample index of a sample's must-link component."""
        return self._find(sample)

    def ml_components(self) -> dict[int, list[int]]:
        """root -> sorted member indices, for components only (size >= 1)."""
        comps: dict[int, list[int]] = {}
        for i in range(self.num_samples):
            comps.setdefault(self._find(i), []).append(i)
        return comps

    def cl_edges(self) -> set[PairKey]:
        """Cannot-link edges between component roots, canonicalized."""
        out = set()
        for r, enemies in self._enemies.items():
            for e in enemies:
                out.add(PairKey(r, e))
        return out

    def ml_pairs(self) -> list[PairKey]:
        return [c.pair for c in self.constraints if c.relation == MUST_LINK]

    def cl_pairs(self) -> list[PairKey]:
        return [c.pair for c in self.constraints if c.relation == CANNOT_LINK]

    def __len__(self) -> int:
        return len(self.constraints)


def add_constraint(store: ConstraintStore, c: Constraint) -> ConstraintStore:
    """Functional-style wrapper around ConstraintStore.add (mutates and returns store)."""
    store.add(c)
    return store


@dataclass
class RunConfig:
    """All knobs for one active-learning run. Defaults follow the toolkit's
    reference operating point; every field has a CLI flag of the same name."""

    epsilon: float = 0.6  # prior mass on the cross-region (over-segmentation) pool
    k_max: int = 5  # medoid neighbor count
    s_min: float = 0.3  # minimum medoid-pair similarity
    budget_fraction_per_cycle: float = 0.0002
    num_cycles: int = 5
    dbscan_eps: float = 0.6
    dbscan_min_samples: int = 4
    knn_k: int = 30
    finch_level: int = 0
    rng_seed: int = 0
    # similarity / sampling behavior
    sim_mode: str = "k_reciprocal_jaccard"  # or "cosine"
    beta: tuple = (1.0, 1.0, 1.0)  # prior over inlier/outlier pair types
    us_region_weighting: str = "type_count"  # or "uniform"
    us_pair_weighting: str = "similarity"  # or "uniform"
    sampling_strategy: str = "aas"  # or "random" (acceptance-test control)
    # refinement
    linkage: str = "single"  # node-to-label distance: "single" or "average"
    base_view: str = "dbscan"  # partition refined into pseudo-labels; or "finch"
    # refresh between cycles
    refresh_mode: str = "static"  # "static" | "external" | "synthetic-refresh"
    refresh_path: str | None = None
    refresh_timeout_s: float = 60.0
    # plumbing
    materialize_threshold: int = 20000
    threads: int = 0

    def validate(self) -> "RunConfig":
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValidationError("epsilon must be in [0, 1]")
        if self.k_max < 1:
            raise ValidationError("k_max must be positive")
        if not -1.0 <= self.s_min <= 1.0:
            raise ValidationError("s_min must be in [-1, 1]")
        if not 0.0 < self.budget_fraction_per_cycle < 1.0:
            raise ValidationError("budget_fraction_per_cycle must be in (0, 1)")
        if self.num_cycles < 1:
            raise ValidationError("num_cycles must be positive")
        if self.dbscan_eps <= 0 or not np.isfinite(self.dbscan_eps):
            raise ValidationError("dbscan_eps must be a positive finite real")
        if self.dbscan_min_samples < 1:
            raise ValidationError("dbscan_min_samples must be positive")
        if self.knn_k < 1:
            raise ValidationError("knn_k must be positive")
        if self.finch_level < 0:
            raise ValidationError("finch_level must be >= 0")
        if not 0 <= self.rng_seed < 2**64:
            raise ValidationError("rng_seed must be a 64-bit unsigned integer")
        if self.sim_mode not in ("k_reciprocal_jaccard", "cosine"):
            raise ValidationError(f"bad sim_mode {self.sim_mode!r}")
        if len(self.beta) != 3 or any(b < 0 for b in self.beta) or sum(self.beta) <= 0:
            raise ValidationError("beta must be three non-negative weights, not all zero")
        if self.us_region_weighting not in ("type_count", "uniform"):
            raise ValidationError(f"bad us_region_weighting {self.us_region_weighting!r}")
        if self.us_pair_weighting not in ("similarity", "uniform"):
            raise ValidationError(f"bad us_pair_weighting {self.us_pair_weighting!r}")
        if self.sampling_strategy not in ("aas", "random"):
            raise ValidationError(f"bad sampling_strategy {self.sampling_strategy!r}")
        if self.linkage not in ("single", "average"):
            raise ValidationError(f"bad linkage {self.linkage!r}")
        if self.base_view not in ("dbscan", "finch"):
            raise ValidationError(f"bad base_view {self.base_view!r}")
        if self.refresh_mode not in ("static", "external", "synthetic-refresh"):
            raise ValidationError(f"bad refresh_mode {self.refresh_mode!r}")
        return self

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(d)
        if "beta" in kwargs:
            kwargs["beta"] = tuple(kwargs["beta"])
        return cls(**kwargs).validate()

    def updated(self, **kwargs) -> "RunConfig":
        known = {f.name for f in fields(self)}
        unknown = set(kwargs) - known
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        return replace(self, **kwargs).validate()
