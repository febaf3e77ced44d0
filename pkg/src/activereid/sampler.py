"""Marginal sampling distribution over candidate pairs and batch drawing.

The over-segmentation pool is weighted by similarity alone. The
under-segmentation pool factorizes as pair-type prior x region mass x
within-region pair mass. A single epsilon mixes the two conditionals;
batches are drawn without replacement by sequential renormalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import CandidatePair, INLIER_INLIER, INLIER_OUTLIER, OUTLIER_OUTLIER
from .model import PairKey

TYPE_ORDER = (INLIER_INLIER, INLIER_OUTLIER, OUTLIER_OUTLIER)

REGION_TYPE_COUNT = "type_count"
PAIR_SIMILARITY = "similarity"
UNIFORM = "uniform"


@dataclass
class WeightedPairPool:
    """Flattened distribution over candidate pairs ready for drawing."""

    entries: list[tuple[CandidatePair, float]]
    epsilon_effective: float
    totals: dict[tuple, int] = field(default_factory=dict)
    empty: bool = False

    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.entries], dtype=np.float64)

    def lookup(self, pair: PairKey) -> tuple[CandidatePair, float]:
        for cand, prob in self.entries:
            if cand.pair == pair:
                return cand, prob
        raise KeyError(pair)


def _normalize(weights: np.ndarray) -> np.ndarray:
    """Weights to probabilities, uniform when the total mass is zero."""
    total = weights.sum()
    if total <= 0.0:
        return np.full(len(weights), 1.0 / len(weights))
    return weights / total


def os_conditional(pool_os: list[CandidatePair]) -> np.ndarray:
    """Similarity-proportional conditional over the over-segmentation pool."""
    if not pool_os:
        return np.zeros(0)
    return _normalize(np.array([p.weight for p in pool_os], dtype=np.float64))


def us_conditional(
    pool_us: list[CandidatePair],
    beta: tuple[float, float, float] = (1.0, 1.0, 1.0),
    region_weighting: str = REGION_TYPE_COUNT,
    pair_weighting: str = PAIR_SIMILARITY,
) -> np.ndarray:
    """Product factorization over the under-segmentation pool.

    Pair-type prior: beta renormalized over the types present. Region mass
    within a type: that region's share of the type's pair count (or uniform
    over regions holding the type). Pair mass within region and type:
    similarity-proportional with uniform fallback (or uniform).
    """
    if not pool_us:
        return np.zeros(0)
    beta_of = dict(zip(TYPE_ORDER, beta))
    present = [t for t in TYPE_ORDER if any(p.pair_type == t for p in pool_us)]
    beta_total = sum(beta_of[t] for t in present)
    pi = {t: beta_of[t] / beta_total for t in present}

    type_counts: dict[str, int] = {t: 0 for t in present}
    group_counts: dict[tuple[int, str], int] = {}
    for p in pool_us:
        type_counts[p.pair_type] += 1
        group_counts[(p.region, p.pair_type)] = group_counts.get((p.region, p.pair_type), 0) + 1

    probs = np.zeros(len(pool_us))
    for (region, ptype), count in group_counts.items():
        idx = [i for i, p in enumerate(pool_us) if p.region == region and p.pair_type == ptype]
        if region_weighting == REGION_TYPE_COUNT:
            rho = count / type_counts[ptype]
        else:
            regions_with_type = {r for (r, t) in group_counts if t == ptype}
            rho = 1.0 / len(regions_with_type)
        if pair_weighting == PAIR_SIMILARITY:
            omega = _normalize(np.array([pool_us[i].weight for i in idx], dtype=np.float64))
        else:
            omega = np.full(len(idx), 1.0 / len(idx))
        probs[idx] = pi[ptype] * rho * omega
    return probs


def marginal(
    pool_os: list[CandidatePair],
    pool_us: list[CandidatePair],
    epsilon: float,
    beta: tuple[float, float, float] = (1.0, 1.0, 1.0),
    region_weighting: str = REGION_TYPE_COUNT,
    pair_weighting: str = PAIR_SIMILARITY,
) -> WeightedPairPool:
    """Epsilon-mixture of the two conditionals.

    When exactly one pool is empty all mass moves to the other
    (epsilon_effective 1 or 0); when both are empty the pool is flagged.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if not pool_os and not pool_us:
        return WeightedPairPool([], epsilon, {}, empty=True)
    eps = epsilon
    if not pool_os:
        eps = 0.0
    elif not pool_us:
        eps = 1.0
    p_os = eps * os_conditional(pool_os)
    p_us = (1.0 - eps) * us_conditional(pool_us, beta, region_weighting, pair_weighting)

    entries = [(c, float(p)) for c, p in zip(pool_os, p_os)]
    entries += [(c, float(p)) for c, p in zip(pool_us, p_us)]
    totals: dict[tuple, int] = {}
    for cand, _ in entries:
        key = (cand.origin, cand.pair_type, cand.region)
        totals[key] = totals.get(key, 0) + 1
    return WeightedPairPool(entries, eps, totals)


def draw_batch(pool: WeightedPairPool, budget_pairs: int, rng_seed) -> list[PairKey]:
    """Draw without replacement, renormalizing after each pick.

    Returns min(budget_pairs, pool size) pairs in draw order; deterministic
    for a given seed. Residual zero-probability entries fall back to uniform
    once all positive mass is spent.
    """
    if budget_pairs < 0:
        raise ValueError("budget must be non-negative")
    if pool.empty or budget_pairs == 0 or not pool.entries:
        return []
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    remaining = list(range(len(pool.entries)))
    probs = pool.probabilities()
    drawn: list[PairKey] = []
    for _ in range(min(budget_pairs, len(remaining))):
        p = _normalize(probs[remaining])
        pick = remaining[int(rng.choice(len(remaining), p=p))]
        remaining.remove(pick)
        drawn.append(pool.entries[pick][0].pair)
    return drawn


def pair_budget(n: int, fraction: float) -> int:
    """floor(fraction * n(n-1)/2) pairs for a gallery of n samples."""
    if n < 2:
        raise ValueError("need at least two samples")
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    return math.floor(fraction * (n * (n - 1) // 2))
