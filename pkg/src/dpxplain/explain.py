"""Phase 3: private top-k selection, influence CIs, rank CIs, table assembly.

One phase-3 run is a single logical transaction: the three mechanism charges
and the random-stream consumption happen in the fixed order
top-k -> influence -> rank, so replays with the same stream are identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, GroupByQuery, Predicate, UserQuestion
from .errors import DegenerateDivisorError, SchemaError
from .influence import (
    InfluenceEvaluator,
    PredicateSpace,
    enumerate_predicates,
    relative_influence_divisor,
    sensitivity_for,
)
from .mechanisms import PrivacyLedger, RandomSource, inverse_erf
from .release import QueryRelease
from .validation import ConfidenceInterval

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class TopKSelection:
    """k predicates ordered by descending noisy influence (canonical tie-break)."""

    predicates: tuple[Predicate, ...]
    noisy_influences: tuple[float, ...]
    indices: tuple[int, ...]
    rho_topk: float


@dataclass(frozen=True)
class RankInterval:
    lower: int
    upper: int
    level: float

    def __post_init__(self):
        if not 1 <= self.lower <= self.upper:
            raise SchemaError(f"invalid rank interval ({self.lower}, {self.upper})")

    def contains(self, rank: int) -> bool:
        return self.lower <= rank <= self.upper

    @property
    def width(self) -> float:
        return float(self.upper - self.lower)

    def to_json(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "level": self.level}


@dataclass(frozen=True)
class ExplanationRow:
    predicate: Predicate
    influence_ci: ConfidenceInterval
    rank_ci: RankInterval

    def to_json(self) -> dict:
        return {
            "predicate": self.predicate.to_json(),
            "rel_influ_ci": {
                "lower": self.influence_ci.lower,
                "upper": self.influence_ci.upper,
            },
            "rank_ci": {"lower": self.rank_ci.lower, "upper": self.rank_ci.upper},
        }


@dataclass(frozen=True)
class ExplanationTable:
    rows: tuple[ExplanationRow, ...]
    level: float
    relative: bool  # False when the display divisor degenerated to zero

    def to_json(self) -> dict:
        return {
            "rows": [r.to_json() for r in self.rows],
            "level": self.level,
            "relative": self.relative,
        }


def gumbel_topk_scale(delta: float, rho_topk: float, k: int) -> float:
    """Gumbel scale 2 delta sqrt(k / (8 rho)) for one-shot top-k selection."""
    return 2.0 * delta * math.sqrt(k / (8.0 * rho_topk))


def noisy_topk(
    space: PredicateSpace,
    influences: Sequence[float],
    delta: float,
    rho_topk: float,
    k: int,
    ledger: PrivacyLedger,
    rng: RandomSource,
) -> TopKSelection:
    """One-shot top-k: add i.i.d. Gumbel noise to every influence, keep the k best.

    Equivalent to k sequential exponential-mechanism draws without
    replacement, hence a single charge of rho_topk.
    """
    if not 1 <= k <= len(space):
        raise SchemaError(f"k must be in [1, {len(space)}], got {k}")
    if len(influences) != len(space):
        raise SchemaError("one influence per predicate required")
    ledger.charge("topk", rho_topk)
    sigma = gumbel_topk_scale(delta, rho_topk, k)
    noisy = np.asarray(influences, dtype=float) + rng.gumbel_vector(sigma, len(space))
    order = sorted(range(len(space)), key=lambda i: (-noisy[i], i))[:k]
    return TopKSelection(
        predicates=tuple(space.predicates[i] for i in order),
        noisy_influences=tuple(float(noisy[i]) for i in order),
        indices=tuple(order),
        rho_topk=rho_topk,
    )


def influence_ci(
    selected_influences: Sequence[float],
    delta: float,
    rho_influ: float,
    gamma: float,
    ledger: PrivacyLedger,
    rng: RandomSource,
) -> list[ConfidenceInterval]:
    """Gaussian CI per selected predicate, each on rho_influ/k of the budget."""
    k = len(selected_influences)
    if k == 0:
        raise SchemaError("influence_ci needs at least one predicate")
    ledger.charge("influ", rho_influ)
    sigma = delta / math.sqrt(2.0 * rho_influ / k)
    margin = SQRT2 * sigma * inverse_erf(gamma)
    out = []
    for value in selected_influences:
        center = value + rng.gaussian(sigma)
        out.append(ConfidenceInterval(center - margin, center + margin, gamma))
    return out


def rank_bound(
    target_influence: float,
    ranked_influences: Sequence[float],
    delta: float,
    rho: float,
    beta: float,
    direction: int,
    rng: RandomSource,
    *,
    sigma: float | None = None,
    xi: float | None = None,
) -> int:
    """Noisy binary search for a one-sided rank bound, valid with probability beta.

    `ranked_influences` are the true influences sorted descending, so entry
    t-1 is the influence at rank t. Each of at most N = ceil(log2 |P|) probes
    compares a Gaussian release of the influence gap (sensitivity 2 delta,
    per-probe budget rho/N) against the margin xi; direction +1 searches an
    upper bound, -1 a lower bound. `sigma`/`xi` overrides are test hooks for
    noise-suppressed traces.

    Budget is charged by the caller.
    """
    if direction not in (-1, 1):
        raise SchemaError(f"direction must be -1 or +1, got {direction}")
    if not 0 < beta < 1:
        raise SchemaError(f"beta must be in (0, 1), got {beta}")
    size = len(ranked_influences)
    if size == 0:
        raise SchemaError("empty predicate space")
    depth = math.ceil(math.log2(size)) if size > 1 else 0
    t_low, t_high = 1, size
    if depth == 0:
        return t_high
    if sigma is None:
        sigma = (2.0 * delta) / math.sqrt(2.0 * (rho / depth))
    if xi is None:
        xi = sigma * math.sqrt(2.0 * math.log(depth / (1.0 - beta))) * direction
    for _ in range(depth):
        if t_high < t_low:
            break
        t = (t_high + t_low) // 2
        gap = target_influence - ranked_influences[t - 1]
        noisy_gap = gap + rng.gaussian(sigma)
        if noisy_gap >= xi:
            t_high = max(t - 1, 1)
        else:
            t_low = min(t + 1, size)
    return t_high


def rank_ci(
    selected_influences: Sequence[float],
    all_influences: Sequence[float],
    delta: float,
    rho_rank: float,
    gamma: float,
    eta: float,
    ledger: PrivacyLedger,
    rng: RandomSource,
) -> list[RankInterval]:
    """Two RankBound searches per predicate, merged into a gamma-level interval.

    Per predicate the budget is rho_rank/k, split eta : (1-eta) between the
    lower and upper searches; each side runs at sub-level beta = (gamma+1)/2.
    Bounds that cross under extreme noise are widened to [min, max], which
    only adds coverage.
    """
    if not 0 < eta < 1:
        raise SchemaError(f"eta must be in (0, 1), got {eta}")
    k = len(selected_influences)
    if k == 0:
        raise SchemaError("rank_ci needs at least one predicate")
    ledger.charge("rank", rho_rank)
    ranked = sorted(all_influences, reverse=True)
    size = len(ranked)
    rho_each = rho_rank / k
    beta = (gamma + 1.0) / 2.0
    intervals = []
    for value in selected_influences:
        lower = rank_bound(value, ranked, delta, eta * rho_each, beta, -1, rng)
        upper = rank_bound(value, ranked, delta, (1.0 - eta) * rho_each, beta, +1, rng)
        lower = min(max(lower, 1), size)
        upper = min(max(upper, 1), size)
        if lower > upper:
            lower, upper = upper, lower
        intervals.append(RankInterval(lower, upper, gamma))
    return intervals


def build_table(
    selection: TopKSelection,
    influence_cis: Sequence[ConfidenceInterval],
    rank_cis: Sequence[RankInterval],
    divisor: float | None,
) -> ExplanationTable:
    """Scale influence CIs by the display divisor and apply the table sort.

    Rows are ordered by descending upper bound of the (relative) influence
    CI, ties broken by ascending rank-CI upper bound. A missing divisor keeps
    raw influence CIs and flags the table as non-relative.
    """
    if not len(selection.predicates) == len(influence_cis) == len(rank_cis):
        raise SchemaError("selection, influence CIs and rank CIs must align")
    if divisor is not None and divisor <= 0:
        raise DegenerateDivisorError("display divisor must be positive")
    rows = []
    for predicate, ci, rci in zip(selection.predicates, influence_cis, rank_cis):
        if divisor is not None:
            ci = ConfidenceInterval(ci.lower / divisor, ci.upper / divisor, ci.level)
        rows.append(ExplanationRow(predicate, ci, rci))
    rows.sort(key=lambda r: (-r.influence_ci.upper, r.rank_ci.upper))
    level = influence_cis[0].level if influence_cis else 0.0
    return ExplanationTable(tuple(rows), level=level, relative=divisor is not None)


def run_phase3(
    dataset: Dataset,
    query: GroupByQuery,
    question: UserQuestion,
    release: QueryRelease,
    *,
    k: int,
    gamma: float,
    rho_topk: float,
    rho_influ: float,
    rho_rank: float,
    conjuncts: int,
    eta: float,
    ledger: PrivacyLedger,
    rng: RandomSource,
) -> ExplanationTable:
    """The whole Phase-3 transaction; charges topk + influ + rank atomically."""
    ledger.ensure(rho_topk + rho_influ + rho_rank)
    space = enumerate_predicates(dataset.schema, query, conjuncts)
    if not 1 <= k <= len(space):
        raise SchemaError(f"k must be in [1, {len(space)}], got {k}")
    delta = sensitivity_for(question, query, dataset.schema)
    evaluator = InfluenceEvaluator(dataset, query, question)
    influences = evaluator.values(space)
    selection = noisy_topk(space, influences, delta, rho_topk, k, ledger, rng)
    selected_influences = [influences[i] for i in selection.indices]
    cis = influence_ci(selected_influences, delta, rho_influ, gamma, ledger, rng)
    rcis = rank_ci(
        selected_influences, influences, delta, rho_rank, gamma, eta, ledger, rng
    )
    try:
        divisor = relative_influence_divisor(question, release)
    except DegenerateDivisorError:
        divisor = None
    return build_table(selection, cis, rcis, divisor)
