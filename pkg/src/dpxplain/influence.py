"""Intervention influence of explanation predicates, and its sensitivity bounds.

The influence of predicate p against a two-group (or weighted) question is
the change in the question's aggregate gap caused by hypothetically deleting
the tuples matching p, times a normalizer that penalizes predicates matching
too much of the data. Deliberately low-sensitivity so Phase-3 mechanisms can
run on small noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product
from typing import Iterable, Mapping

import numpy as np

from .data import (
    Dataset,
    GeneralQuestion,
    GroupByQuery,
    Predicate,
    Schema,
    SimpleQuestion,
    UserQuestion,
    Value,
    evaluate_predicate,
)
from .errors import DegenerateDivisorError, SchemaError
from .release import QueryRelease


@dataclass(frozen=True)
class PredicateSpace:
    """All candidate explanation predicates in canonical order.

    The order (attribute name, then declared value order) is the global
    tie-break for every downstream sort.
    """

    predicates: tuple[Predicate, ...]
    conjuncts: int

    def __len__(self) -> int:
        return len(self.predicates)

    def __iter__(self):
        return iter(self.predicates)

    def index_of(self, predicate: Predicate) -> int:
        return self.predicates.index(predicate)


def enumerate_predicates(schema: Schema, query: GroupByQuery, conjuncts: int = 1) -> PredicateSpace:
    """Every conjunction of `conjuncts` equality atoms on distinct eligible attributes.

    Eligible attributes are everything except the group-by and aggregate
    attributes. Deterministic order: attributes sorted by name, values in
    declared domain order.
    """
    if conjuncts < 1:
        raise SchemaError(f"conjunct count must be >= 1, got {conjuncts}")
    excluded = {query.group_by, query.agg_attr}
    eligible = sorted(a.name for a in schema.attributes if a.name not in excluded)
    if conjuncts > len(eligible):
        raise SchemaError(
            f"conjunct count {conjuncts} exceeds the {len(eligible)} eligible attributes"
        )
    predicates = []
    for names in combinations(eligible, conjuncts):
        value_lists = [schema.attribute(n).values for n in names]
        for values in product(*value_lists):
            predicates.append(Predicate.equals(*zip(names, values)))
    return PredicateSpace(tuple(predicates), conjuncts)


def _question_weights(question: UserQuestion) -> list[tuple[Value, float]]:
    if isinstance(question, SimpleQuestion):
        return [(question.group_i, 1.0), (question.group_j, -1.0)]
    return [(g, w) for g, w in question.weights if w != 0.0]


class InfluenceEvaluator:
    """Influence of predicates against one (dataset, query, question) triple.

    A single pass over the data builds per-group totals plus, for singleton
    spaces, per-(group, attribute, value) contingency tables, so evaluating a
    whole space is O(n + |P|) for l=1 and O(|P| n) otherwise.
    """

    def __init__(self, dataset: Dataset, query: GroupByQuery, question: UserQuestion):
        query.validate(dataset.schema)
        if isinstance(question, (SimpleQuestion, GeneralQuestion)):
            question.validate(dataset.schema, query)
        self.dataset = dataset
        self.query = query
        self.question = question
        self.groups = _question_weights(question)
        self._group_set = {g for g, _ in self.groups}
        schema = dataset.schema
        gb_pos = schema.position(query.group_by)
        agg_pos = schema.position(query.agg_attr) if query.agg_attr else None
        # Per-group (count, sum) totals over `where`, restricted to question groups.
        totals: dict[Value, list[float]] = {g: [0.0, 0.0] for g, _ in self.groups}
        cells: dict[tuple[Value, int, Value], list[float]] = {}
        where = query.where
        for row in dataset.rows:
            group = row[gb_pos]
            if group not in self._group_set:
                continue
            if where.atoms and not evaluate_predicate(where, row, schema):
                continue
            weight_cell = float(row[agg_pos]) if agg_pos is not None else 0.0
            bucket = totals[group]
            bucket[0] += 1.0
            bucket[1] += weight_cell
            for pos in range(len(row)):
                key = (group, pos, row[pos])
                cell = cells.get(key)
                if cell is None:
                    cells[key] = [1.0, weight_cell]
                else:
                    cell[0] += 1.0
                    cell[1] += weight_cell
        self._totals = totals
        self._cells = cells
        self._positions = {a.name: i for i, a in enumerate(schema.attributes)}

    # -- per-predicate (count, sum) of matching tuples in each question group --

    def _match_stats(self, predicate: Predicate) -> dict[Value, tuple[float, float]]:
        if len(predicate.atoms) == 1 and predicate.atoms[0].op == "=":
            atom = predicate.atoms[0]
            pos = self._positions[atom.attr]
            return {
                g: tuple(self._cells.get((g, pos, atom.value), (0.0, 0.0)))
                for g, _ in self.groups
            }
        schema = self.dataset.schema
        gb_pos = schema.position(self.query.group_by)
        agg_pos = (
            schema.position(self.query.agg_attr) if self.query.agg_attr else None
        )
        stats = {g: [0.0, 0.0] for g, _ in self.groups}
        where = self.query.where
        for row in self.dataset.rows:
            group = row[gb_pos]
            if group not in self._group_set:
                continue
            if where.atoms and not evaluate_predicate(where, row, schema):
                continue
            if not evaluate_predicate(predicate, row, schema):
                continue
            stats[group][0] += 1.0
            if agg_pos is not None:
                stats[group][1] += float(row[agg_pos])
        return {g: (c, s) for g, (c, s) in stats.items()}

    def components(self, predicate: Predicate) -> tuple[float, float]:
        """(numerator, normalizer) of the influence; their product is the value."""
        agg = self.query.agg
        match = self._match_stats(predicate)
        numerator = 0.0
        kept_counts = []
        full_counts = []
        for group, weight in self.groups:
            count, total = self._totals[group]
            mcount, msum = match[group]
            kept_count = count - mcount
            kept_sum = total - msum
            if agg == "COUNT":
                before, after = count, kept_count
            elif agg == "SUM":
                before, after = total, kept_sum
            else:  # AVG; an empty bag averages to 0
                before = total / count if count else 0.0
                after = kept_sum / kept_count if kept_count else 0.0
            numerator += weight * (before - after)
            kept_counts.append(kept_count)
            full_counts.append(count)
        if agg == "AVG":
            normalizer = min(kept_counts)
        else:
            normalizer = min(kept_counts) / (max(full_counts) + 1.0)
        return numerator, normalizer

    def value(self, predicate: Predicate) -> float:
        numerator, normalizer = self.components(predicate)
        return numerator * normalizer

    def values(self, space: PredicateSpace) -> np.ndarray:
        return np.array([self.value(p) for p in space.predicates], dtype=float)


def influence(
    predicate: Predicate,
    question: SimpleQuestion,
    dataset: Dataset,
    query: GroupByQuery,
) -> float:
    """Influence for a simple two-group question."""
    return InfluenceEvaluator(dataset, query, question).value(predicate)


def influence_general(
    predicate: Predicate,
    question: GeneralQuestion | Mapping[Value, float],
    dataset: Dataset,
    query: GroupByQuery,
) -> float:
    """Influence for a weighted-sum question; a bare weight mapping is accepted."""
    if isinstance(question, Mapping):
        if not any(w != 0 for w in question.values()):
            return 0.0
        question = GeneralQuestion.from_weights(question)
    return InfluenceEvaluator(dataset, query, question).value(predicate)


def sensitivity(
    agg: str,
    abs_max: float | None = None,
    weights: Iterable[float] | None = None,
) -> float:
    """Worst-case influence change across any neighboring pair of datasets.

    Simple questions: 4 (COUNT), 4 abs_max (SUM), 16 abs_max (AVG).
    Weighted questions: 2 sum|w| (COUNT), 2 sum|w| abs_max (SUM),
    8 sum|w| abs_max (AVG).
    """
    if agg not in ("COUNT", "SUM", "AVG"):
        raise SchemaError(f"unknown aggregate {agg!r}")
    if agg != "COUNT":
        if abs_max is None:
            raise SchemaError(f"{agg} sensitivity needs the attribute abs_max")
        if abs_max < 0:
            raise SchemaError("abs_max must be >= 0")
    if weights is None:
        if agg == "COUNT":
            return 4.0
        if agg == "SUM":
            return 4.0 * abs_max
        return 16.0 * abs_max
    weight_mass = sum(abs(w) for w in weights)
    if agg == "COUNT":
        return 2.0 * weight_mass
    if agg == "SUM":
        return 2.0 * weight_mass * abs_max
    return 8.0 * weight_mass * abs_max


def sensitivity_for(question: UserQuestion, query: GroupByQuery, schema: Schema) -> float:
    """Sensitivity bound matching the question form and the query's aggregate."""
    abs_max = None
    if query.agg_attr is not None:
        abs_max = schema.attribute(query.agg_attr).abs_max
    if isinstance(question, SimpleQuestion):
        return sensitivity(query.agg, abs_max)
    return sensitivity(query.agg, abs_max, weights=[w for _, w in question.weights])


def relative_influence_divisor(question: UserQuestion, release: QueryRelease) -> float:
    """Display-only scale: the (noisy) question gap, times the smaller noisy
    count for AVG. Pure post-processing of released values."""
    agg = release.query.agg
    if isinstance(question, SimpleQuestion):
        vi = release.result_for(question.group_i).noisy_value
        vj = release.result_for(question.group_j).noisy_value
        gap = abs(vi - vj)
        groups = [question.group_i, question.group_j]
    else:
        gap = abs(
            sum(w * release.result_for(g).noisy_value for g, w in question.weights)
            - question.constant
        )
        groups = [g for g, w in question.weights if w != 0.0]
    if agg == "AVG":
        counts = [release.result_for(g).noisy_count for g in groups]
        if any(c is None for c in counts):
            raise SchemaError("AVG release is missing stored count components")
        gap *= abs(min(counts))
    if gap == 0 or math.isnan(gap):
        raise DegenerateDivisorError("relative-influence divisor is zero")
    return gap
