"""Retrieval metrics over a gallery/query split, plus partition quality.

Closed-set metrics (mAP, mINP, Top-k, BAKS) run over known queries, whose
identity appears in the gallery. Open-set separation of known vs unknown
queries is scored by the maximum gallery similarity and summarized as the
area under the ROC curve. The adjusted Rand index measures partition
agreement with ground-truth identities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import MissingIdentitiesError, NoPositivesError, NotApplicableError
from .model import EmbeddingSet, Partition

TOP_K_VALUES = (1, 3, 5, 10)


@dataclass
class RetrievalProblem:
    gallery: EmbeddingSet
    query: EmbeddingSet
    known_flags: np.ndarray | None = None

    def __post_init__(self):
        if self.gallery.identities is None or self.query.identities is None:
            raise MissingIdentitiesError("gallery and query need identities")
        if self.gallery.n == 0:
            raise ValueError("gallery is empty")
        gallery_ids = set(self.gallery.identities)
        computed = np.array([q in gallery_ids for q in self.query.identities])
        if self.known_flags is None:
            self.known_flags = computed
        else:
            self.known_flags = np.asarray(self.known_flags, dtype=bool)
            if not np.array_equal(self.known_flags, computed):
                raise ValueError("known_flags disagree with identity membership")


@dataclass
class MetricReport:
    map: float
    minp: float
    baks: float
    auc_roc: float
    top_k: dict[int, float]

    def to_json(self) -> str:
        payload = {
            "map": self.map,
            "minp": self.minp,
            "baks": self.baks,
            "auc_roc": self.auc_roc,
        }
        for k in sorted(self.top_k):
            payload[f"top{k}"] = self.top_k[k]
        return json.dumps(payload, indent=2, sort_keys=True)


def _unit(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("zero vector in retrieval problem")
    return rows / norms


def query_gallery_similarity(problem: RetrievalProblem) -> np.ndarray:
    """Cosine similarity, queries as rows and gallery as columns."""
    return np.clip(_unit(problem.query.vectors) @ _unit(problem.gallery.vectors).T, -1.0, 1.0)


def rank_gallery(problem: RetrievalProblem, mode: str = "cosine") -> np.ndarray:
    """Per-query gallery indices in descending similarity (index tie-break)."""
    if mode != "cosine":
        raise ValueError(f"unknown ranking mode {mode!r}")
    sims = query_gallery_similarity(problem)
    return np.argsort(-sims, axis=1, kind="stable")


def _relevance(problem: RetrievalProblem, rankings: np.ndarray, q: int) -> np.ndarray:
    gallery_ids = np.array(problem.gallery.identities)
    return gallery_ids[rankings[q]] == problem.query.identities[q]


def _known_indices(problem: RetrievalProblem) -> np.ndarray:
    return np.flatnonzero(problem.known_flags)


def mean_average_precision(problem: RetrievalProblem, rankings: np.ndarray) -> float:
    """Mean over known queries of the average precision at positive ranks."""
    known = _known_indices(problem)
    if len(known) == 0:
        raise NotApplicableError("no known queries")
    aps = []
    for q in known:
        rel = _relevance(problem, rankings, q)
        ranks = np.flatnonzero(rel) + 1
        if len(ranks) == 0:
            raise NoPositivesError(f"known query {q} has no gallery positives")
        precisions = np.arange(1, len(ranks) + 1) / ranks
        aps.append(precisions.mean())
    return float(np.mean(aps))


def mean_inp(problem: RetrievalProblem, rankings: np.ndarray) -> float:
    """Mean of (positive count / rank of the hardest positive) over known queries."""
    known = _known_indices(problem)
    if len(known) == 0:
        raise NotApplicableError("no known queries")
    inps = []
    for q in known:
        rel = _relevance(problem, rankings, q)
        ranks = np.flatnonzero(rel) + 1
        if len(ranks) == 0:
            raise NoPositivesError(f"known query {q} has no gallery positives")
        inps.append(len(ranks) / ranks[-1])
    return float(np.mean(inps))


def top_k_accuracy(problem: RetrievalProblem, rankings: np.ndarray, k: int) -> float:
    """Fraction of known queries with a positive within the first k ranks."""
    if k < 1:
        raise ValueError("k must be positive")
    known = _known_indices(problem)
    if len(known) == 0:
        raise NotApplicableError("no known queries")
    hits = [bool(_relevance(problem, rankings, q)[:k].any()) for q in known]
    return float(np.mean(hits))


def baks(problem: RetrievalProblem, rankings: np.ndarray) -> float:
    """Top-1 accuracy balanced over the distinct known-query identities."""
    known = _known_indices(problem)
    if len(known) == 0:
        raise NotApplicableError("no known queries")
    per_identity: dict[str, list[bool]] = {}
    for q in known:
        identity = problem.query.identities[q]
        per_identity.setdefault(identity, []).append(bool(_relevance(problem, rankings, q)[0]))
    return float(np.mean([np.mean(v) for v in per_identity.values()]))


def open_set_auc(problem: RetrievalProblem, rankings: np.ndarray | None = None) -> float:
    """Known-vs-unknown separation by maximum gallery similarity.

    Rank-statistic AUC: every (known, unknown) score pair contributes 1 when
    the known query scores higher, 1/2 on ties.
    """
    scores = query_gallery_similarity(problem).max(axis=1)
    known = scores[problem.known_flags]
    unknown = scores[~problem.known_flags]
    if len(known) == 0 or len(unknown) == 0:
        raise NotApplicableError("need both known and unknown queries")
    wins = (known[:, None] > unknown[None, :]).sum()
    ties = (known[:, None] == unknown[None, :]).sum()
    return float((wins + 0.5 * ties) / (len(known) * len(unknown)))


def adjusted_rand_index(pred: Partition, truth) -> float:
    """Chance-corrected pair-counting agreement with a reference labeling."""
    truth_codes = np.unique(np.asarray(truth), return_inverse=True)[1]
    if len(truth_codes) != pred.n:
        raise ValueError("labelings cover different sample counts")
    n = pred.n
    if n == 0:
        return 1.0
    pred_codes = np.unique(pred.labels, return_inverse=True)[1]
    contingency = np.zeros((pred_codes.max() + 1, truth_codes.max() + 1), dtype=np.int64)
    np.add.at(contingency, (pred_codes, truth_codes), 1)

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_cells = comb2(contingency).sum()
    sum_rows = comb2(contingency.sum(axis=1)).sum()
    sum_cols = comb2(contingency.sum(axis=0)).sum()
    total = comb2(n)
    expected = sum_rows * sum_cols / total if total else 0.0
    maximum = 0.5 * (sum_rows + sum_cols)
    if maximum == expected:
        return 1.0
    return float((sum_cells - expected) / (maximum - expected))


def evaluate_problem(problem: RetrievalProblem) -> MetricReport:
    """All retrieval metrics in one report.

    Open-set AUC is reported as NaN when the split has a single class of
    queries; the closed-set metrics always run over known queries.
    """
    rankings = rank_gallery(problem)
    try:
        auc = open_set_auc(problem)
    except NotApplicableError:
        auc = float("nan")
    return MetricReport(
        map=mean_average_precision(problem, rankings),
        minp=mean_inp(problem, rankings),
        baks=baks(problem, rankings),
        auc_roc=auc,
        top_k={k: top_k_accuracy(problem, rankings, k) for k in TOP_K_VALUES},
    )
