"""Deterministic synthetic datasets with a planted top-k influence structure.

The generator fixes two groups ("a", "b"), a binary aggregate attribute
"val", and binary eligible attributes x1..xM. The first `planted` eligible
attributes take value "1" far more often inside group "a" than "b", with
descending rates, so the predicates x1="1", x2="1", ... are the true top
influencers by construction (verifiable by brute force).
"""
from __future__ import annotations

from dataclasses import dataclass

from .data import AttributeDomain, Dataset, GroupByQuery, Schema, SimpleQuestion
from .errors import SchemaError
from .mechanisms import RandomSource

GROUP_ATTR = "grp"
VALUE_ATTR = "val"


@dataclass(frozen=True)
class PlantedDataset:
    dataset: Dataset
    planted_attrs: tuple[str, ...]
    group_large: str
    group_small: str

    def count_query(self) -> GroupByQuery:
        return GroupByQuery("COUNT", GROUP_ATTR)

    def avg_query(self) -> GroupByQuery:
        return GroupByQuery("AVG", GROUP_ATTR, VALUE_ATTR)

    def question(self) -> SimpleQuestion:
        return SimpleQuestion(self.group_large, self.group_small)


def planted_schema(eligible: int) -> Schema:
    if eligible < 1:
        raise SchemaError("need at least one eligible attribute")
    width = len(str(eligible))
    attrs = [
        AttributeDomain(GROUP_ATTR, "categorical", ("a", "b")),
        AttributeDomain(VALUE_ATTR, "categorical", (0, 1), abs_max=1.0),
    ]
    for i in range(1, eligible + 1):
        attrs.append(AttributeDomain(f"x{i:0{width}d}", "categorical", ("0", "1")))
    return Schema(tuple(attrs))


def planted_dataset(
    rows: int,
    *,
    eligible: int = 8,
    planted: int = 5,
    seed: int = 0,
    group_share: float = 0.5,
    tiny_group: int | None = None,
    val_rate_a: float = 0.8,
    val_rate_b: float = 0.2,
    base_rate: float = 0.3,
) -> PlantedDataset:
    """Generate `rows` tuples; same seed gives the identical dataset.

    `tiny_group` pins the exact size of group "b" (for small-group question
    behavior); otherwise group "a" gets round(rows * group_share) tuples.
    """
    if planted > eligible:
        raise SchemaError("cannot plant more attributes than exist")
    schema = planted_schema(eligible)
    width = len(str(eligible))
    if tiny_group is not None:
        if tiny_group > rows:
            raise SchemaError("tiny group larger than the dataset")
        size_a = rows - tiny_group
    else:
        size_a = round(rows * group_share)
    rng = RandomSource(seed).derive(0)
    # Rate of value "1" per eligible attribute, by group. Planted attributes
    # fire often in group a and rarely in b, with descending margins.
    rates_a, rates_b = [], []
    for i in range(eligible):
        if i < planted:
            rates_a.append(0.5 - 0.08 * i)
            rates_b.append(0.02)
        else:
            rates_a.append(base_rate)
            rates_b.append(base_rate)
    out = []
    for r in range(rows):
        in_a = r < size_a
        group = "a" if in_a else "b"
        draws = rng.uniform_vector(eligible + 1)
        val = 1 if draws[0] < (val_rate_a if in_a else val_rate_b) else 0
        row = [group, val]
        rates = rates_a if in_a else rates_b
        for i in range(eligible):
            row.append("1" if draws[i + 1] < rates[i] else "0")
        out.append(row)
    return PlantedDataset(
        dataset=Dataset(schema, out),
        planted_attrs=tuple(f"x{i:0{width}d}" for i in range(1, planted + 1)),
        group_large="a",
        group_small="b",
    )
