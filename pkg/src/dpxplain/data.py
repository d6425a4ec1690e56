"""Schemas with declared domains, immutable tuple-bag datasets, predicates and queries.

Domains are declared up front (schema sidecar) and never inferred from the
data: every privacy calculation downstream assumes the domain of each
attribute is finite and data-independent.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, Sequence

from .errors import DomainError, QuestionError, SchemaError

Value = Any  # str | int | float once loaded through a schema

ATTRIBUTE_KINDS = ("categorical", "discretized-numeric")
COMPARATORS = ("=", "!=", "<", "<=", ">", ">=")
AGGREGATES = ("COUNT", "SUM", "AVG")


@dataclass(frozen=True)
class AttributeDomain:
    """One attribute with its finite, ordered list of admissible values.

    ``abs_max`` is only set for aggregate-capable numeric attributes and must
    bound the absolute value of every domain member.
    """

    name: str
    kind: str
    values: tuple[Value, ...]
    abs_max: float | None = None

    def __post_init__(self):
        if self.kind not in ATTRIBUTE_KINDS:
            raise SchemaError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if not self.values:
            raise SchemaError(f"attribute {self.name!r}: empty domain")
        if len(set(self.values)) != len(self.values):
            raise SchemaError(f"attribute {self.name!r}: duplicate domain values")
        if self.abs_max is not None:
            if not self.is_numeric:
                raise SchemaError(
                    f"attribute {self.name!r}: abs_max requires numeric values"
                )
            if self.abs_max < 0:
                raise SchemaError(f"attribute {self.name!r}: abs_max must be >= 0")
            worst = max(abs(float(v)) for v in self.values)
            if self.abs_max < worst:
                raise SchemaError(
                    f"attribute {self.name!r}: abs_max {self.abs_max} < max |value| {worst}"
                )

    @property
    def is_numeric(self) -> bool:
        return all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in self.values)

    def rank_of(self, value: Value) -> int:
        """Position of ``value`` in the declared (ordered) domain."""
        try:
            return self.values.index(value)
        except ValueError:
            raise DomainError(
                f"value {value!r} not in domain of attribute {self.name!r}"
            ) from None


@dataclass(frozen=True)
class Schema:
    attributes: tuple[AttributeDomain, ...]

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate attribute names in schema")

    def __iter__(self) -> Iterator[AttributeDomain]:
        return iter(self.attributes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def attribute(self, name: str) -> AttributeDomain:
        for a in self.attributes:
            if a.name == name:
                return a
        raise SchemaError(f"unknown attribute {name!r}")

    def position(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        raise SchemaError(f"unknown attribute {name!r}")

    def to_json(self) -> dict:
        return {
            "attributes": [
                {
                    "name": a.name,
                    "kind": a.kind,
                    "values": list(a.values),
                    **({"abs_max": a.abs_max} if a.abs_max is not None else {}),
                }
                for a in self.attributes
            ]
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Schema":
        try:
            attrs = doc["attributes"]
        except (KeyError, TypeError):
            raise SchemaError("schema sidecar must contain an 'attributes' list") from None
        domains = []
        for entry in attrs:
            domains.append(
                AttributeDomain(
                    name=entry["name"],
                    kind=entry.get("kind", "categorical"),
                    values=tuple(entry["values"]),
                    abs_max=entry.get("abs_max"),
                )
            )
        return cls(tuple(domains))

    @classmethod
    def from_sidecar(cls, text: str) -> "Schema":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema sidecar is not valid JSON: {exc}") from None
        return cls.from_json(doc)


class Dataset:
    """An immutable bag of tuples conforming to a schema.

    Bag semantics: tuples are kept with multiplicity, never deduplicated.
    Neighbor construction (`with_row` / `without_row`) returns new datasets.
    """

    __slots__ = ("schema", "rows")

    def __init__(self, schema: Schema, rows: Sequence[Sequence[Value]]):
        self.schema = schema
        checked = []
        for idx, row in enumerate(rows):
            checked.append(self._check_row(schema, row, idx))
        self.rows: tuple[tuple[Value, ...], ...] = tuple(checked)

    @staticmethod
    def _check_row(schema: Schema, row: Sequence[Value], idx: int) -> tuple[Value, ...]:
        if len(row) != len(schema.attributes):
            raise SchemaError(
                f"row {idx + 1}: expected {len(schema.attributes)} values, got {len(row)}"
            )
        for attr, value in zip(schema.attributes, row):
            if value not in attr.values:
                raise DomainError(
                    f"row {idx + 1}: value {value!r} not in domain of {attr.name!r}"
                )
        return tuple(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[tuple[Value, ...]]:
        return iter(self.rows)

    def with_row(self, row: Sequence[Value]) -> "Dataset":
        return Dataset(self.schema, self.rows + (tuple(row),))

    def without_row(self, index: int) -> "Dataset":
        return Dataset(self.schema, self.rows[:index] + self.rows[index + 1 :])

    @classmethod
    def from_csv(cls, text: str, schema: Schema) -> "Dataset":
        """Load a header-row CSV, canonicalizing each cell against the domain.

        Any cell whose string form does not name a declared domain value
        rejects the whole file, reporting the 1-based data row number.
        """
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("CSV is empty (missing header row)") from None
        if set(header) != set(schema.names):
            raise SchemaError(
                f"CSV header {header!r} does not match schema attributes {list(schema.names)!r}"
            )
        order = [header.index(name) for name in schema.names]
        lookup = [
            {str(v): v for v in attr.values} for attr in schema.attributes
        ]
        rows = []
        for rownum, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if len(cells) != len(header):
                raise SchemaError(f"row {rownum}: expected {len(header)} cells, got {len(cells)}")
            row = []
            for pos, attr, table in zip(order, schema.attributes, lookup):
                cell = cells[pos]
                if cell not in table:
                    raise DomainError(
                        f"row {rownum}: value {cell!r} not in domain of {attr.name!r}"
                    )
                row.append(table[cell])
            rows.append(row)
        return cls(schema, rows)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.schema.names)
        for row in self.rows:
            writer.writerow(row)
        return out.getvalue()


@dataclass(frozen=True)
class Atom:
    attr: str
    op: str
    value: Value

    def __post_init__(self):
        if self.op not in COMPARATORS:
            raise SchemaError(f"unknown comparator {self.op!r}")

    def to_json(self) -> dict:
        return {"attr": self.attr, "op": self.op, "value": self.value}


@dataclass(frozen=True)
class Predicate:
    """Conjunction of comparison atoms; the empty conjunction is `true`."""

    atoms: tuple[Atom, ...] = ()

    @classmethod
    def true(cls) -> "Predicate":
        return cls(())

    @classmethod
    def equals(cls, *pairs: tuple[str, Value]) -> "Predicate":
        return cls(tuple(Atom(a, "=", v) for a, v in pairs))

    def describe(self) -> str:
        if not self.atoms:
            return "true"
        return " AND ".join(f"{a.attr} {a.op} {a.value!r}" for a in self.atoms)

    def to_json(self) -> list[dict]:
        return [a.to_json() for a in self.atoms]

    @classmethod
    def from_json(cls, doc: Sequence[Mapping] | None) -> "Predicate":
        if not doc:
            return cls.true()
        return cls(tuple(Atom(e["attr"], e.get("op", "="), e["value"]) for e in doc))


def evaluate_predicate(predicate: Predicate, row: Sequence[Value], schema: Schema) -> bool:
    """Pure conjunction semantics; ordered comparators use the declared value order."""
    for atom in predicate.atoms:
        attr = schema.attribute(atom.attr)
        pos = schema.position(atom.attr)
        cell = row[pos]
        if atom.op == "=":
            if cell != atom.value:
                return False
        elif atom.op == "!=":
            if cell == atom.value:
                return False
        else:
            left = attr.rank_of(cell)
            right = attr.rank_of(atom.value)
            if atom.op == "<" and not left < right:
                return False
            if atom.op == "<=" and not left <= right:
                return False
            if atom.op == ">" and not left > right:
                return False
            if atom.op == ">=" and not left >= right:
                return False
    return True


@dataclass(frozen=True)
class GroupByQuery:
    """SELECT group_by, agg(agg_attr) FROM D WHERE where GROUP BY group_by."""

    agg: str
    group_by: str
    agg_attr: str | None = None
    where: Predicate = field(default_factory=Predicate.true)

    def __post_init__(self):
        if self.agg not in AGGREGATES:
            raise SchemaError(f"unknown aggregate {self.agg!r}")
        if self.agg == "COUNT":
            if self.agg_attr is not None:
                raise SchemaError("COUNT takes no aggregate attribute")
        else:
            if self.agg_attr is None:
                raise SchemaError(f"{self.agg} requires an aggregate attribute")
            if self.agg_attr == self.group_by:
                raise SchemaError("group-by and aggregate attribute must differ")

    def validate(self, schema: Schema) -> None:
        schema.attribute(self.group_by)
        if self.agg_attr is not None:
            attr = schema.attribute(self.agg_attr)
            if attr.abs_max is None:
                raise SchemaError(
                    f"attribute {self.agg_attr!r} cannot be aggregated (no abs_max declared)"
                )
        for atom in self.where.atoms:
            attr = schema.attribute(atom.attr)
            if atom.value not in attr.values:
                raise DomainError(
                    f"where-clause constant {atom.value!r} not in domain of {atom.attr!r}"
                )

    def group_domain(self, schema: Schema) -> tuple[Value, ...]:
        return schema.attribute(self.group_by).values

    def to_json(self) -> dict:
        doc: dict = {"agg": self.agg, "group_by": self.group_by}
        if self.agg_attr is not None:
            doc["agg_attr"] = self.agg_attr
        if self.where.atoms:
            doc["where"] = self.where.to_json()
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "GroupByQuery":
        try:
            return cls(
                agg=doc["agg"],
                group_by=doc["group_by"],
                agg_attr=doc.get("agg_attr"),
                where=Predicate.from_json(doc.get("where")),
            )
        except KeyError as exc:
            raise SchemaError(f"query is missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class SimpleQuestion:
    """Why is the (noisy) aggregate of group_i larger than that of group_j?"""

    group_i: Value
    group_j: Value

    def __post_init__(self):
        if self.group_i == self.group_j:
            raise QuestionError("a question must compare two distinct groups")

    def validate(self, schema: Schema, query: GroupByQuery) -> None:
        domain = query.group_domain(schema)
        for g in (self.group_i, self.group_j):
            if g not in domain:
                raise DomainError(f"group {g!r} not in domain of {query.group_by!r}")

    def to_json(self) -> dict:
        return {"kind": "simple", "group_i": self.group_i, "group_j": self.group_j}


@dataclass(frozen=True)
class GeneralQuestion:
    """Why is the weighted sum of (noisy) group aggregates at least the constant?"""

    weights: tuple[tuple[Value, float], ...]
    constant: float = 0.0

    def __post_init__(self):
        groups = [g for g, _ in self.weights]
        if len(set(groups)) != len(groups):
            raise QuestionError("duplicate group in question weights")
        if not any(w != 0 for _, w in self.weights):
            raise QuestionError("a general question needs at least one nonzero weight")

    @classmethod
    def from_weights(cls, weights: Mapping[Value, float], constant: float = 0.0) -> "GeneralQuestion":
        return cls(tuple(weights.items()), constant)

    @property
    def weight_map(self) -> dict[Value, float]:
        return dict(self.weights)

    def validate(self, schema: Schema, query: GroupByQuery) -> None:
        domain = query.group_domain(schema)
        for g, _ in self.weights:
            if g not in domain:
                raise DomainError(f"group {g!r} not in domain of {query.group_by!r}")

    def to_json(self) -> dict:
        return {
            "kind": "general",
            "weights": [[g, w] for g, w in self.weights],
            "constant": self.constant,
        }


UserQuestion = SimpleQuestion | GeneralQuestion


def question_from_json(doc: Mapping) -> UserQuestion:
    kind = doc.get("kind", "simple")
    if kind == "simple":
        return SimpleQuestion(doc["group_i"], doc["group_j"])
    if kind == "general":
        weights = doc["weights"]
        if isinstance(weights, Mapping):
            pairs = tuple(weights.items())
        else:
            pairs = tuple((g, float(w)) for g, w in weights)
        return GeneralQuestion(pairs, float(doc.get("constant", 0.0)))
    raise QuestionError(f"unknown question kind {kind!r}")


def group_tuples(dataset: Dataset, query: GroupByQuery, group: Value) -> list[tuple[Value, ...]]:
    """Tuples satisfying `where AND group_by = group`; empty groups are legal."""
    attr = dataset.schema.attribute(query.group_by)
    if group not in attr.values:
        raise DomainError(f"group {group!r} not in domain of {query.group_by!r}")
    pos = dataset.schema.position(query.group_by)
    return [
        row
        for row in dataset.rows
        if row[pos] == group and evaluate_predicate(query.where, row, dataset.schema)
    ]


def aggregate_bag(query: GroupByQuery, schema: Schema, rows: Sequence[Sequence[Value]]) -> float:
    """COUNT / SUM / AVG of a tuple bag; the AVG of an empty bag is 0."""
    if query.agg == "COUNT":
        return float(len(rows))
    pos = schema.position(query.agg_attr)
    total = float(sum(row[pos] for row in rows))
    if query.agg == "SUM":
        return total
    return total / len(rows) if rows else 0.0


def true_aggregate(dataset: Dataset, query: GroupByQuery, group: Value) -> float:
    return aggregate_bag(query, dataset.schema, group_tuples(dataset, query, group))
