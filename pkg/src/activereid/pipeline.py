"""The active-learning loop: cluster, sample, query, refine, refresh.

One cycle clusters the current embeddings with both views, pre-refines them
against the accumulated constraints, mines the two ambiguity pools, draws a
batch within the pair budget, asks the oracle, and refines the base view
into the cycle's partition. Pairs whose relation becomes derivable mid-batch
are skipped without charge and replaced by fresh draws. A refresh hook lets
an external trainer swap in improved embeddings between cycles.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import fileio
from .ambiguity import build_os_pool, build_us_pool, find_uncertainty_regions
from .clustering import DbscanParams, dbscan, finch, select_view, to_distance
from .errors import CycleIncompleteError, MissingIdentitiesError, RefreshTimeoutError
from .evaluation import adjusted_rand_index
from .geometry import build_similarity, cosine_distance_matrix
from .model import (
    CANNOT_LINK,
    MUST_LINK,
    UNKNOWN,
    Constraint,
    ConstraintStore,
    EmbeddingSet,
    PairKey,
    Partition,
    RunConfig,
)
from .refinement import refine
from .sampler import marginal, pair_budget

AAS = "aas"
RANDOM = "random"

STATIC = "static"
EXTERNAL = "external"
SYNTHETIC_REFRESH = "synthetic-refresh"

REFRESH_POLL_S = 0.25


@dataclass
class SyntheticSpec:
    """Gaussian identity blobs standing in for wildlife embeddings."""

    num_identities: int
    samples_per_identity: int
    dim: int
    within_spread: float
    between_spread: float
    rng_seed: int = 0

    def __post_init__(self):
        if self.num_identities < 1 or self.samples_per_identity < 1 or self.dim < 1:
            raise ValueError("counts and dimension must be positive")
        if self.within_spread < 0 or self.between_spread <= 0:
            raise ValueError("spreads must be positive")


@dataclass
class ALState:
    cycle: int
    embeddings: EmbeddingSet
    store: ConstraintStore
    current_partition: Partition | None
    budget_allotted_pairs: int = 0
    budget_used_pairs: int = 0
    history: list[dict] = field(default_factory=list)


def generate_synthetic(spec: SyntheticSpec) -> EmbeddingSet:
    """Identity centers drawn isotropically, samples scattered around them."""
    rng = np.random.default_rng(spec.rng_seed)
    centers = rng.normal(0.0, spec.between_spread, size=(spec.num_identities, spec.dim))
    total = spec.num_identities * spec.samples_per_identity
    noise = rng.normal(0.0, spec.within_spread, size=(total, spec.dim))
    vectors = np.repeat(centers, spec.samples_per_identity, axis=0) + noise
    width = max(4, len(str(total - 1)))
    ids = [f"s{i:0{width}d}" for i in range(total)]
    identities = [f"id{i // spec.samples_per_identity:04d}" for i in range(total)]
    return EmbeddingSet(ids, vectors, identities=identities)


def simulated_oracle(emb: EmbeddingSet, pair: PairKey, cycle: int = 0) -> Constraint:
    """Ground-truth answer: must-link iff the identities match."""
    if emb.identities is None:
        raise MissingIdentitiesError("oracle needs ground-truth identities")
    relation = MUST_LINK if emb.identities[pair.a] == emb.identities[pair.b] else CANNOT_LINK
    return Constraint(pair, relation, source="oracle", cycle=cycle)


def identity_oracle(emb: EmbeddingSet):
    """Bind the simulated oracle to one embedding set's identities."""
    if emb.identities is None:
        raise MissingIdentitiesError("oracle needs ground-truth identities")
    identities = list(emb.identities)

    def answer(pair: PairKey, cycle: int) -> Constraint:
        relation = MUST_LINK if identities[pair.a] == identities[pair.b] else CANNOT_LINK
        return Constraint(pair, relation, source="oracle", cycle=cycle)

    return answer


def initial_state(emb: EmbeddingSet) -> ALState:
    return ALState(0, emb, ConstraintStore(emb.n), None)


def _cycle_rng(config: RunConfig, cycle: int) -> np.random.Generator:
    return np.random.default_rng([config.rng_seed, cycle])


def _all_unknown_pairs(n: int, store: ConstraintStore) -> list[PairKey]:
    pairs = []
    for a in range(n):
        for b in range(a + 1, n):
            p = PairKey(a, b)
            if store.relation_of(p) == UNKNOWN:
                pairs.append(p)
    return pairs


class BatchDrawer:
    """Sequential without-replacement draws from a weighted pair pool.

    Pairs whose relation is already derivable at draw time are dropped
    without charge; the caller keeps drawing until its budget is met or the
    pool is exhausted. Both the in-process loop and the annotation service
    draw through this class so their query sequences coincide.
    """

    def __init__(self, entries, probs, rng):
        self.entries = entries
        self.probs = np.asarray(probs, dtype=np.float64)
        self.rng = rng
        self.remaining = list(range(len(entries)))
        self.skipped_by_closure = 0

    def draw(self, store: ConstraintStore):
        """Next (pair, origin, probability) with unknown relation, or None."""
        while self.remaining:
            p = self.probs[self.remaining]
            total = p.sum()
            p = p / total if total > 0 else np.full(len(self.remaining), 1.0 / len(self.remaining))
            pick = self.remaining.pop(int(self.rng.choice(len(self.remaining), p=p)))
            pair, origin, prob = self.entries[pick]
            if store.relation_of(pair) != UNKNOWN:
                self.skipped_by_closure += 1
                continue
            return pair, origin, prob
        return None


def _query_loop(entries, probs, budget, store, oracle, cycle, rng):
    """Charge the oracle for up to budget fresh pairs; returns (records, skips)."""
    drawer = BatchDrawer(entries, probs, rng)
    queries: list[dict] = []
    while len(queries) < budget:
        item = drawer.draw(store)
        if item is None:
            break
        pair, origin, prob = item
        try:
            constraint = oracle(pair, cycle)
        except TimeoutError as exc:
            raise CycleIncompleteError(
                f"oracle timed out after {len(queries)} answers; constraints kept"
            ) from exc
        store.add(constraint)
        queries.append(
            {"a": pair.a, "b": pair.b, "origin": origin, "probability": prob, "cycle": cycle}
        )
    return queries, drawer.skipped_by_closure


@dataclass
class CyclePlan:
    """Everything a cycle needs before any oracle answer arrives."""

    part_a: Partition
    part_b: Partition
    regions: list
    pool_os: list
    pool_us: list
    entries: list
    probs: np.ndarray
    budget: int
    rng: np.random.Generator
    ml_before: int
    cl_before: int


def prepare_cycle(state: ALState, config: RunConfig) -> CyclePlan:
    """Cluster both views, pre-refine them, mine pools, fix the batch budget."""
    emb = state.embeddings
    sim = build_similarity(emb, config.sim_mode, config.knn_k, config.materialize_threshold)
    dist = cosine_distance_matrix(emb)

    part_a = dbscan(to_distance(sim), DbscanParams(config.dbscan_eps, config.dbscan_min_samples))
    part_b = select_view(finch(emb), config.finch_level)
    if len(state.store):
        part_a = refine(part_a, state.store, emb, config.linkage)
        part_b = refine(part_b, state.store, emb, config.linkage)

    if config.sampling_strategy == RANDOM:
        regions: list = []
        pool_os: list = []
        pool_us: list = []
        candidates = _all_unknown_pairs(emb.n, state.store)
        uniform = 1.0 / len(candidates) if candidates else 0.0
        entries = [(p, "random", uniform) for p in candidates]
        probs = np.full(len(candidates), uniform) if candidates else np.zeros(0)
    else:
        regions = find_uncertainty_regions(part_a, part_b, dist)
        pool_os = build_os_pool(
            regions, sim, config.k_max, config.s_min, part_a.outlier_flags, state.store
        )
        pool_us = build_us_pool(
            regions, part_a, part_b, dist, sim, part_a.outlier_flags, state.store
        )
        pool = marginal(
            pool_os,
            pool_us,
            config.epsilon,
            config.beta,
            config.us_region_weighting,
            config.us_pair_weighting,
        )
        entries = [(c.pair, c.origin, prob) for c, prob in pool.entries]
        probs = pool.probabilities()

    return CyclePlan(
        part_a=part_a,
        part_b=part_b,
        regions=regions,
        pool_os=pool_os,
        pool_us=pool_us,
        entries=entries,
        probs=probs,
        budget=pair_budget(emb.n, config.budget_fraction_per_cycle),
        rng=_cycle_rng(config, state.cycle),
        ml_before=len(state.store.ml_pairs()),
        cl_before=len(state.store.cl_pairs()),
    )


def finalize_cycle(
    state: ALState,
    config: RunConfig,
    plan: CyclePlan,
    queries: list[dict],
    skipped_by_closure: int,
    refresh_hook=None,
) -> ALState:
    """Refine the base view with everything learned, record history, refresh."""
    emb = state.embeddings
    base = plan.part_a if config.base_view == "dbscan" else plan.part_b
    state.current_partition = refine(base, state.store, emb, config.linkage)

    state.budget_allotted_pairs += plan.budget
    state.budget_used_pairs += len(queries)
    record = {
        "cycle": state.cycle,
        "num_regions": len(plan.regions),
        "pool_os_size": len(plan.pool_os),
        "pool_us_size": len(plan.pool_us),
        "budget_allotted": plan.budget,
        "budget_used": len(queries),
        "skipped_by_closure": skipped_by_closure,
        "ml_added": len(state.store.ml_pairs()) - plan.ml_before,
        "cl_added": len(state.store.cl_pairs()) - plan.cl_before,
        "num_clusters": state.current_partition.num_clusters,
        "queries": queries,
    }
    if emb.identities is not None:
        record["ari"] = adjusted_rand_index(state.current_partition, emb.identities)
    state.history.append(record)
    state.cycle += 1

    if refresh_hook is not None:
        state.embeddings = refresh_hook(state)
    return state


def run_cycle(state: ALState, config: RunConfig, oracle, refresh_hook=None) -> ALState:
    """One full pass: views, pools, batch, refinement, optional refresh."""
    plan = prepare_cycle(state, config)
    queries, skipped = _query_loop(
        plan.entries, plan.probs, plan.budget, state.store, oracle, state.cycle, plan.rng
    )
    return finalize_cycle(state, config, plan, queries, skipped, refresh_hook)


def static_refresh(state: ALState) -> EmbeddingSet:
    """Keep the embeddings unchanged between cycles."""
    return state.embeddings


def synthetic_refresh(state: ALState, rate: float = 0.1) -> EmbeddingSet:
    """Contract each sample toward its refined-cluster centroid.

    Emulates the representation improving after a round of training on the
    refined pseudo-labels.
    """
    if state.current_partition is None:
        return state.embeddings
    vectors = state.embeddings.vectors.copy()
    for members in state.current_partition.clusters().values():
        centroid = vectors[members].mean(axis=0)
        vectors[members] += rate * (centroid - vectors[members])
    return state.embeddings.with_vectors(vectors)


def external_refresh(path, out_dir, timeout_s: float = 60.0):
    """Block until an external trainer drops replacement embeddings.

    Writes the refined partition and accumulated constraints into out_dir
    for the trainer, then polls for an embeddings file (with its .json
    manifest alongside) at the given path. The file pair is consumed by
    renaming so the next cycle waits for a fresh drop.
    """
    path = os.fspath(path)
    manifest = path + ".json"

    def hook(state: ALState) -> EmbeddingSet:
        os.makedirs(out_dir, exist_ok=True)
        ids = state.embeddings.ids
        if state.current_partition is not None:
            fileio.write_partition(
                os.path.join(out_dir, f"refined_cycle_{state.cycle - 1:02d}.csv"),
                state.current_partition,
                ids,
            )
        fileio.write_constraints(
            os.path.join(out_dir, "constraints.jsonl"), state.store.constraints, ids
        )
        deadline = time.monotonic() + timeout_s
        while not (os.path.exists(path) and os.path.exists(manifest)):
            if time.monotonic() >= deadline:
                raise RefreshTimeoutError(
                    f"no replacement embeddings at {path} within {timeout_s:.0f}s"
                )
            time.sleep(REFRESH_POLL_S)
        emb = fileio.read_embeddings(path, manifest)
        if emb.ids != list(ids):
            raise ValueError("replacement embeddings carry different sample ids")
        consumed = f"{path}.consumed-{state.cycle - 1:02d}"
        os.replace(path, consumed)
        os.replace(manifest, consumed + ".json")
        return emb

    return hook


def refresh_hook_from_config(config: RunConfig):
    if config.refresh_mode == STATIC:
        return static_refresh
    if config.refresh_mode == SYNTHETIC_REFRESH:
        return synthetic_refresh
    if config.refresh_mode == EXTERNAL:
        if not config.refresh_path:
            raise ValueError("external refresh needs refresh_path")
        out_dir = os.path.dirname(os.path.abspath(config.refresh_path)) or "."
        return external_refresh(config.refresh_path, out_dir, config.refresh_timeout_s)
    raise ValueError(f"unknown refresh mode {config.refresh_mode!r}")


def run_loop(
    emb: EmbeddingSet,
    config: RunConfig,
    oracle=None,
    refresh_hook=None,
    run_dir=None,
) -> ALState:
    """Run the configured number of cycles and optionally persist a run
    directory (config snapshot, per-cycle queries and partitions, the
    constraint log, history, and final metrics). The refresh hook fires
    between cycles, not after the last one."""
    config.validate()
    if oracle is None:
        oracle = identity_oracle(emb)
    if refresh_hook is None:
        refresh_hook = refresh_hook_from_config(config)
    state = initial_state(emb)

    writer = RunDirWriter(run_dir, emb.ids) if run_dir is not None else None
    if writer:
        writer.write_config(config)

    for cycle in range(config.num_cycles):
        hook = refresh_hook if cycle < config.num_cycles - 1 else None
        run_cycle(state, config, oracle, hook)
        if writer:
            writer.write_cycle(state)
    if writer:
        writer.finish(state)
    return state


class RunDirWriter:
    """Streams loop artifacts into a directory, atomically and timestamp-free."""

    def __init__(self, run_dir, ids):
        self.run_dir = os.fspath(run_dir)
        self.ids = list(ids)
        os.makedirs(self.run_dir, exist_ok=True)
        self._written_constraints = 0

    def _path(self, name: str) -> str:
        return os.path.join(self.run_dir, name)

    def write_config(self, config: RunConfig) -> None:
        fileio.write_json(self._path("config.json"), config.to_dict())

    def write_cycle(self, state: ALState) -> None:
        record = state.history[-1]
        k = record["cycle"]
        rows = [
            {
                "a": self.ids[q["a"]],
                "b": self.ids[q["b"]],
                "origin": q["origin"],
                "probability": q["probability"],
                "cycle": q["cycle"],
            }
            for q in record["queries"]
        ]
        fileio.write_jsonl(self._path(f"cycle_{k:02d}_queries.jsonl"), rows)
        fileio.write_partition(
            self._path(f"cycle_{k:02d}_partition.csv"), state.current_partition, self.ids
        )
        new = state.store.constraints[self._written_constraints :]
        fileio.append_constraints(self._path("constraints.jsonl"), new, self.ids)
        self._written_constraints = len(state.store.constraints)

    def finish(self, state: ALState) -> None:
        history = [
            {key: rec[key] for key in rec if key != "queries"} for rec in state.history
        ]
        fileio.write_json(self._path("history.json"), history)
        n = state.embeddings.n
        all_pairs = n * (n - 1) // 2
        metrics = {
            "budget_allotted_pairs": state.budget_allotted_pairs,
            "budget_used_pairs": state.budget_used_pairs,
            "used_fraction_of_all_pairs": state.budget_used_pairs / all_pairs if all_pairs else 0.0,
            "num_clusters": state.current_partition.num_clusters
            if state.current_partition
            else 0,
        }
        if state.embeddings.identities is not None and state.current_partition is not None:
            metrics["ari"] = adjusted_rand_index(
                state.current_partition, state.embeddings.identities
            )
        fileio.write_json(self._path("metrics.json"), metrics)
