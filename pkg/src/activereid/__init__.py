"""Annotation-efficient active learning for re-identification.

Mines ambiguous sample pairs from the disagreement of two clusterings,
spends a small pairwise-annotation budget on them, and refines the
pseudo-labels so every collected constraint holds exactly.
"""

from .ambiguity import (
    CandidatePair,
    UncertaintyRegion,
    build_os_pool,
    build_us_pool,
    candidate_closest_pairs,
    cluster_iou,
    find_uncertainty_regions,
    inconsistent_pairs,
    pair_type_of,
    pool_records,
)
from .clustering import DbscanParams, FinchHierarchy, dbscan, finch, select_view, to_distance
from .errors import (
    ActiveReidError,
    ContradictionError,
    CycleIncompleteError,
    InfeasibleShapeError,
    LevelOutOfRangeError,
    MissingIdentitiesError,
    NoPositivesError,
    NotApplicableError,
    RefreshTimeoutError,
    ValidationError,
    ZeroVectorError,
)
from .evaluation import (
    MetricReport,
    RetrievalProblem,
    adjusted_rand_index,
    baks,
    evaluate_problem,
    mean_average_precision,
    mean_inp,
    open_set_auc,
    rank_gallery,
    top_k_accuracy,
)
from .geometry import (
    COSINE,
    K_RECIPROCAL_JACCARD,
    NeighborList,
    SimilarityMatrix,
    build_similarity,
    cosine_distance,
    cosine_distance_matrix,
    cosine_similarity_matrix,
    k_reciprocal_similarity,
    knn,
    reciprocal_sets,
    sampling_weight,
)
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
    partitions_equivalent,
)
from .pipeline import (
    ALState,
    SyntheticSpec,
    generate_synthetic,
    identity_oracle,
    initial_state,
    run_cycle,
    run_loop,
    simulated_oracle,
    static_refresh,
    synthetic_refresh,
)
from .refinement import (
    ConflictGraph,
    build_conflict_graph,
    greedy_color,
    hungarian,
    merge_must_links,
    purify_cluster,
    refine,
)
from .sampler import (
    WeightedPairPool,
    draw_batch,
    marginal,
    os_conditional,
    pair_budget,
    us_conditional,
)

__version__ = "0.1.0"

__all__ = [
    "ALState",
    "ActiveReidError",
    "CANNOT_LINK",
    "COSINE",
    "CandidatePair",
    "ConflictGraph",
    "Constraint",
    "ConstraintStore",
    "ContradictionError",
    "CycleIncompleteError",
    "DbscanParams",
    "EmbeddingSet",
    "FinchHierarchy",
    "InfeasibleShapeError",
    "K_RECIPROCAL_JACCARD",
    "LevelOutOfRangeError",
    "MUST_LINK",
    "MetricReport",
    "MissingIdentitiesError",
    "NeighborList",
    "NoPositivesError",
    "NotApplicableError",
    "PairKey",
    "Partition",
    "RefreshTimeoutError",
    "RetrievalProblem",
    "RunConfig",
    "SimilarityMatrix",
    "SyntheticSpec",
    "UNKNOWN",
    "UncertaintyRegion",
    "ValidationError",
    "WeightedPairPool",
    "ZeroVectorError",
    "adjusted_rand_index",
    "baks",
    "build_conflict_graph",
    "build_os_pool",
    "build_similarity",
    "build_us_pool",
    "candidate_closest_pairs",
    "cluster_iou",
    "cosine_distance",
    "cosine_distance_matrix",
    "cosine_similarity_matrix",
    "dbscan",
    "draw_batch",
    "evaluate_problem",
    "finch",
    "find_uncertainty_regions",
    "generate_synthetic",
    "greedy_color",
    "hungarian",
    "identity_oracle",
    "inconsistent_pairs",
    "initial_state",
    "k_reciprocal_similarity",
    "knn",
    "marginal",
    "mean_average_precision",
    "mean_inp",
    "merge_must_links",
    "open_set_auc",
    "os_conditional",
    "pair_budget",
    "pair_type_of",
    "partitions_equivalent",
    "pool_records",
    "purify_cluster",
    "rank_gallery",
    "reciprocal_sets",
    "refine",
    "run_cycle",
    "run_loop",
    "sampling_weight",
    "select_view",
    "simulated_oracle",
    "static_refresh",
    "synthetic_refresh",
    "to_distance",
    "top_k_accuracy",
    "us_conditional",
]
