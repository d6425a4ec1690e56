"""Differentially private group-by query answering with validated questions
and top-k intervention explanations, under zero-concentrated DP."""

from .data import (
    AttributeDomain,
    Dataset,
    GeneralQuestion,
    GroupByQuery,
    Predicate,
    Schema,
    SimpleQuestion,
    evaluate_predicate,
    group_tuples,
    true_aggregate,
)
from .errors import (
    CalibrationError,
    DegenerateDivisorError,
    DomainError,
    DPXplainError,
    InsufficientBudgetError,
    PhaseOrderError,
    QuestionError,
    SchemaError,
)
from .explain import (
    ExplanationTable,
    RankInterval,
    TopKSelection,
    build_table,
    influence_ci,
    noisy_topk,
    rank_bound,
    rank_ci,
    run_phase3,
)
from .influence import (
    InfluenceEvaluator,
    PredicateSpace,
    enumerate_predicates,
    influence,
    influence_general,
    relative_influence_divisor,
    sensitivity,
)
from .mechanisms import (
    PrivacyLedger,
    RandomSource,
    gaussian_scale,
    inverse_erf,
    sample_gaussian,
    sample_gumbel,
)
from .release import NoisyGroupResult, QueryRelease, answer_avg, answer_count_sum, answer_query
from .session import ExplainSession
from .validation import (
    ConfidenceInterval,
    ValidityVerdict,
    Expr,
    image_ci,
    interval_quotient,
    question_ci,
    question_ci_avg,
    question_ci_count_sum,
    question_ci_general,
    validate_question,
)

__version__ = "0.1.0"
