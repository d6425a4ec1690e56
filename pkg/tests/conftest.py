import pytest

from dpxplain import AttributeDomain, Dataset, GroupByQuery, Schema, SimpleQuestion


@pytest.fixture
def tiny_schema():
    """Appendix-style three binary attributes A, B, C."""
    return Schema(
        (
            AttributeDomain("A", "categorical", (0, 1), abs_max=1.0),
            AttributeDomain("B", "categorical", (0, 1), abs_max=1.0),
            AttributeDomain("C", "categorical", (0, 1), abs_max=1.0),
        )
    )


@pytest.fixture
def tiny_dataset(tiny_schema):
    """Two tuples (0,0,0) and (1,0,1); the non-monotonicity example instance."""
    return Dataset(tiny_schema, [(0, 0, 0), (1, 0, 1)])


@pytest.fixture
def count_by_a():
    return GroupByQuery("COUNT", "A")


@pytest.fixture
def question_0_gt_1():
    return SimpleQuestion(0, 1)
