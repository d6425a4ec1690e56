"""Phase 1: differentially private release of group-by aggregate answers.

Every value in the declared group domain is released, including empty groups;
parallel composition across disjoint groups means the whole release costs one
charge of rho.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .data import Dataset, GroupByQuery, Value, true_aggregate
from .errors import DomainError, SchemaError
from .mechanisms import PrivacyLedger, RandomSource, gaussian_scale


@dataclass(frozen=True)
class NoisyGroupResult:
    group: Value
    noisy_value: float
    noisy_sum: float | None = None
    noisy_count: float | None = None

    @property
    def has_components(self) -> bool:
        return self.noisy_sum is not None and self.noisy_count is not None


@dataclass(frozen=True)
class QueryRelease:
    query: GroupByQuery
    results: tuple[NoisyGroupResult, ...]
    rho_query: float
    sigma: float | None = None        # COUNT / SUM value scale
    sigma_sum: float | None = None    # AVG component scales
    sigma_count: float | None = None

    def result_for(self, group: Value) -> NoisyGroupResult:
        for r in self.results:
            if r.group == group:
                return r
        raise DomainError(f"group {group!r} is not part of this release")

    def to_json(self) -> dict:
        rows = []
        for r in self.results:
            row: dict = {"group": r.group, "value": _json_num(r.noisy_value)}
            if self.query.agg == "AVG":
                row["sum_component"] = r.noisy_sum
                row["count_component"] = r.noisy_count
                row["sigma_sum"] = self.sigma_sum
                row["sigma_count"] = self.sigma_count
            else:
                row["sigma"] = self.sigma
            rows.append(row)
        return {"query": self.query.to_json(), "rho_query": self.rho_query, "results": rows}

    @classmethod
    def from_json(cls, doc: Mapping) -> "QueryRelease":
        query = GroupByQuery.from_json(doc["query"])
        rows = doc["results"]
        sigma = sigma_sum = sigma_count = None
        results = []
        for row in rows:
            if query.agg == "AVG":
                sigma_sum = row["sigma_sum"]
                sigma_count = row["sigma_count"]
                s, c = row["sum_component"], row["count_component"]
                value = row["value"]
                results.append(
                    NoisyGroupResult(
                        row["group"],
                        float(value) if value is not None else math.nan,
                        noisy_sum=s,
                        noisy_count=c,
                    )
                )
            else:
                sigma = row["sigma"]
                results.append(NoisyGroupResult(row["group"], float(row["value"])))
        return cls(
            query=query,
            results=tuple(results),
            rho_query=float(doc["rho_query"]),
            sigma=sigma,
            sigma_sum=sigma_sum,
            sigma_count=sigma_count,
        )


def _json_num(x: float):
    return x if math.isfinite(x) else None


def query_sensitivity(query: GroupByQuery, dataset: Dataset) -> float:
    """Per-group sensitivity: 1 for COUNT, abs_max of the aggregate attribute for SUM."""
    if query.agg == "COUNT":
        return 1.0
    attr = dataset.schema.attribute(query.agg_attr)
    if attr.abs_max is None:
        raise SchemaError(f"attribute {query.agg_attr!r} has no declared abs_max")
    return float(attr.abs_max)


def answer_count_sum(
    dataset: Dataset,
    query: GroupByQuery,
    rho: float,
    ledger: PrivacyLedger,
    rng: RandomSource,
) -> QueryRelease:
    """Gaussian release of every group's COUNT or SUM at scale delta/sqrt(2 rho)."""
    if query.agg not in ("COUNT", "SUM"):
        raise SchemaError(f"answer_count_sum cannot handle {query.agg}")
    query.validate(dataset.schema)
    ledger.charge("query", rho)
    sigma = gaussian_scale(query_sensitivity(query, dataset), rho)
    results = []
    for group in query.group_domain(dataset.schema):
        value = true_aggregate(dataset, query, group) + rng.gaussian(sigma)
        results.append(NoisyGroupResult(group, value))
    return QueryRelease(query, tuple(results), rho_query=rho, sigma=sigma)


def answer_avg(
    dataset: Dataset,
    query: GroupByQuery,
    rho: float,
    ledger: PrivacyLedger,
    rng: RandomSource,
) -> QueryRelease:
    """AVG decomposed into a SUM and a COUNT release, each on half the budget.

    The released value is the quotient of the stored noisy components
    (post-processing); a zero noisy count yields a NaN display value, and
    downstream confidence intervals only ever read the components.
    """
    if query.agg != "AVG":
        raise SchemaError(f"answer_avg cannot handle {query.agg}")
    query.validate(dataset.schema)
    ledger.charge("query", rho)
    attr = dataset.schema.attribute(query.agg_attr)
    sigma_sum = gaussian_scale(float(attr.abs_max), rho / 2.0)
    sigma_count = gaussian_scale(1.0, rho / 2.0)
    count_query = GroupByQuery("COUNT", query.group_by, where=query.where)
    sum_query = GroupByQuery("SUM", query.group_by, query.agg_attr, where=query.where)
    results = []
    for group in query.group_domain(dataset.schema):
        noisy_sum = true_aggregate(dataset, sum_query, group) + rng.gaussian(sigma_sum)
        noisy_count = true_aggregate(dataset, count_query, group) + rng.gaussian(sigma_count)
        value = noisy_sum / noisy_count if noisy_count != 0 else math.nan
        results.append(NoisyGroupResult(group, value, noisy_sum=noisy_sum, noisy_count=noisy_count))
    return QueryRelease(
        query,
        tuple(results),
        rho_query=rho,
        sigma_sum=sigma_sum,
        sigma_count=sigma_count,
    )


def answer_query(
    dataset: Dataset,
    query: GroupByQuery,
    rho: float,
    ledger: PrivacyLedger,
    rng: RandomSource,
) -> QueryRelease:
    if query.agg == "AVG":
        return answer_avg(dataset, query, rho, ledger, rng)
    return answer_count_sum(dataset, query, rho, ledger, rng)
