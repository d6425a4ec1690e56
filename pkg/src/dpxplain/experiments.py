"""Experiment harness: coverage, precision@k and CI-width protocols.

Ground truth (true influences, ranks, true question gap) always comes from
the brute-force evaluator below, never from the engine's accumulator path,
so the harness doubles as an independent oracle for the engine.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .data import (
    Dataset,
    GroupByQuery,
    Predicate,
    SimpleQuestion,
    UserQuestion,
    aggregate_bag,
    evaluate_predicate,
    group_tuples,
)
from .errors import DegenerateDivisorError
from .explain import influence_ci, noisy_topk, rank_ci
from .influence import (
    InfluenceEvaluator,
    PredicateSpace,
    enumerate_predicates,
    relative_influence_divisor,
    sensitivity_for,
)
from .mechanisms import PrivacyLedger, RandomSource
from .release import answer_query
from .session import DEFAULTS
from .validation import question_ci, validate_question


# ---------------------------------------------------------------------------
# Independent ground-truth evaluation (deliberately literal and slow)
# ---------------------------------------------------------------------------


def naive_influence(
    dataset: Dataset,
    query: GroupByQuery,
    question: UserQuestion,
    predicate: Predicate,
) -> float:
    """Influence by materializing every sub-bag and aggregating it directly."""
    schema = dataset.schema
    if isinstance(question, SimpleQuestion):
        weighted = [(question.group_i, 1.0), (question.group_j, -1.0)]
    else:
        weighted = [(g, w) for g, w in question.weights if w != 0.0]
    numerator = 0.0
    kept_sizes, full_sizes = [], []
    for group, weight in weighted:
        full = group_tuples(dataset, query, group)
        kept = [r for r in full if not evaluate_predicate(predicate, r, schema)]
        numerator += weight * (
            aggregate_bag(query, schema, full) - aggregate_bag(query, schema, kept)
        )
        kept_sizes.append(len(kept))
        full_sizes.append(len(full))
    if query.agg == "AVG":
        normalizer = float(min(kept_sizes))
    else:
        normalizer = min(kept_sizes) / (max(full_sizes) + 1.0)
    return numerator * normalizer


def true_question_value(dataset: Dataset, query: GroupByQuery, question: UserQuestion) -> float:
    """The hidden quantity the phase-2 CI targets."""
    schema = dataset.schema
    if isinstance(question, SimpleQuestion):
        oi = aggregate_bag(query, schema, group_tuples(dataset, query, question.group_i))
        oj = aggregate_bag(query, schema, group_tuples(dataset, query, question.group_j))
        return oi - oj
    total = 0.0
    for group, weight in question.weights:
        total += weight * aggregate_bag(query, schema, group_tuples(dataset, query, group))
    return total - question.constant


def true_ranks(influences: Sequence[float]) -> list[int]:
    """1-based rank per predicate index, ties broken by canonical order."""
    order = sorted(range(len(influences)), key=lambda i: (-influences[i], i))
    ranks = [0] * len(influences)
    for position, idx in enumerate(order, start=1):
        ranks[idx] = position
    return ranks


# ---------------------------------------------------------------------------
# Specs and reports
# ---------------------------------------------------------------------------


@dataclass
class ExperimentSpec:
    dataset: Dataset
    query: GroupByQuery
    question: UserQuestion
    grid: Mapping[str, Sequence] = field(default_factory=dict)
    reps: int = 10
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        for key, values in self.grid.items():
            if key not in DEFAULTS:
                raise ValueError(f"unknown grid parameter {key!r}")
            if any(v <= 0 for v in values):
                raise ValueError(f"grid values for {key!r} must be positive")


@dataclass
class Report:
    kind: str
    columns: list[str]
    rows: list[dict]
    meta: dict

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.DictWriter(out, fieldnames=self.columns, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({c: row.get(c, "") for c in self.columns})
        return out.getvalue()

    def summary_text(self) -> str:
        lines = [f"experiment: {self.kind}"]
        for key in sorted(self.meta):
            lines.append(f"  {key}: {json.dumps(self.meta[key], sort_keys=True)}")
        lines.append("")
        for row in self.rows:
            parts = [f"{c}={row.get(c)}" for c in self.columns]
            lines.append("  ".join(parts))
        lines.append("")
        return "\n".join(lines)

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.kind}.csv"
        txt_path = out / f"{self.kind}.txt"
        csv_path.write_text(self.to_csv())
        txt_path.write_text(self.summary_text())
        return csv_path, txt_path


def _grid_points(grid: Mapping[str, Sequence]) -> list[dict]:
    if not grid:
        return [dict(DEFAULTS)]
    keys = sorted(grid)
    points = []
    for combo in product(*(grid[k] for k in keys)):
        params = dict(DEFAULTS)
        params.update(dict(zip(keys, combo)))
        points.append(params)
    return points


@dataclass
class _GridContext:
    """Per-grid-point precomputation shared by every repetition."""

    dataset: Dataset
    query: GroupByQuery
    question: UserQuestion
    params: dict
    delta: float
    predicates: tuple
    engine_influences: np.ndarray
    oracle_influences: np.ndarray
    oracle_ranks: list[int]
    true_value: float
    seed: int
    grid_index: int


def _prepare(spec: ExperimentSpec, params: dict, grid_index: int) -> _GridContext:
    space = enumerate_predicates(spec.dataset.schema, spec.query, params["conjuncts"])
    evaluator = InfluenceEvaluator(spec.dataset, spec.query, spec.question)
    engine = evaluator.values(space)
    oracle = np.array(
        [naive_influence(spec.dataset, spec.query, spec.question, p) for p in space],
        dtype=float,
    )
    return _GridContext(
        dataset=spec.dataset,
        query=spec.query,
        question=spec.question,
        params=params,
        delta=sensitivity_for(spec.question, spec.query, spec.dataset.schema),
        predicates=space.predicates,
        engine_influences=engine,
        oracle_influences=oracle,
        oracle_ranks=true_ranks(oracle.tolist()),
        true_value=true_question_value(spec.dataset, spec.query, spec.question),
        seed=spec.seed,
        grid_index=grid_index,
    )


def run_rep(ctx: _GridContext, rep: int) -> dict:
    """One full three-phase run; outcome fields feed all three protocols."""
    params = ctx.params
    rng = RandomSource(ctx.seed).derive(ctx.grid_index, rep)
    ledger = PrivacyLedger(
        params["rho_query"] + params["rho_topk"] + params["rho_influ"] + params["rho_rank"]
    )
    release = answer_query(ctx.dataset, ctx.query, params["rho_query"], ledger, rng)
    interval = question_ci(release, ctx.question, params["gamma"])
    verdict = validate_question(release, ctx.question, params["gamma"])
    k = min(params["k"], len(ctx.predicates))
    space = PredicateSpace(ctx.predicates, params["conjuncts"])
    selection = noisy_topk(
        space, ctx.engine_influences, ctx.delta, params["rho_topk"], k, ledger, rng
    )
    selected_true = [float(ctx.oracle_influences[i]) for i in selection.indices]
    cis = influence_ci(
        [float(ctx.engine_influences[i]) for i in selection.indices],
        ctx.delta,
        params["rho_influ"],
        params["gamma"],
        ledger,
        rng,
    )
    rcis = rank_ci(
        [float(ctx.engine_influences[i]) for i in selection.indices],
        ctx.engine_influences,
        ctx.delta,
        params["rho_rank"],
        params["gamma"],
        params["eta"],
        ledger,
        rng,
    )
    order = sorted(range(len(ctx.oracle_influences)), key=lambda i: (-ctx.oracle_influences[i], i))
    true_top = set(order[:k])
    hits = len(true_top.intersection(selection.indices))
    try:
        divisor = relative_influence_divisor(ctx.question, release)
    except DegenerateDivisorError:
        divisor = 1.0
    return {
        "question_covered": interval.contains(ctx.true_value),
        "verdict_correct": (verdict.verdict == "supported") == (ctx.true_value > 0),
        "influence_covered": sum(
            ci.contains(t) for ci, t in zip(cis, selected_true)
        ),
        "rank_covered": sum(
            rci.contains(ctx.oracle_ranks[i]) for rci, i in zip(rcis, selection.indices)
        ),
        "k": k,
        "precision": hits / k,
        "influence_ci_widths": [ci.width / divisor for ci in cis],
        "rank_ci_widths": [rci.width for rci in rcis],
        "selection": list(selection.indices),
        "supported": verdict.verdict == "supported",
    }


def noisy_rank_permutation(ctx: _GridContext, rng: RandomSource) -> list[int]:
    """Full noisy ranking (top-k with k = |P|), for Kendall-tau evaluation."""
    params = ctx.params
    space_len = len(ctx.predicates)
    space = PredicateSpace(ctx.predicates, params["conjuncts"])
    ledger = PrivacyLedger(params["rho_topk"])
    selection = noisy_topk(
        space, ctx.engine_influences, ctx.delta, params["rho_topk"], space_len, ledger, rng
    )
    return list(selection.indices)


def _run_grid_reps(ctx: _GridContext, reps: int, workers: int) -> list[dict]:
    if workers <= 1:
        return [run_rep(ctx, rep) for rep in range(reps)]
    chunks = np.array_split(np.arange(reps), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_rep_chunk, ctx, chunk.tolist()) for chunk in chunks if len(chunk)]
        results: list[dict] = []
        for fut in futures:
            results.extend(fut.result())
    return results


def _rep_chunk(ctx: _GridContext, reps: list[int]) -> list[dict]:
    return [run_rep(ctx, rep) for rep in reps]


def _meta(spec: ExperimentSpec) -> dict:
    return {
        "seed": spec.seed,
        "reps": spec.reps,
        "rows": len(spec.dataset),
        "grid": {k: list(v) for k, v in spec.grid.items()},
        "query": spec.query.to_json(),
        "question": spec.question.to_json(),
        "defaults": DEFAULTS,
    }


def coverage_report(spec: ExperimentSpec) -> Report:
    """Fraction of runs whose CIs contain the truth, and verdict accuracy."""
    rows = []
    for gi, params in enumerate(_grid_points(spec.grid)):
        ctx = _prepare(spec, params, gi)
        outcomes = _run_grid_reps(ctx, spec.reps, spec.workers)
        k_total = sum(o["k"] for o in outcomes)
        rows.append(
            {
                **{k: params[k] for k in sorted(DEFAULTS)},
                "question_ci_coverage": sum(o["question_covered"] for o in outcomes) / spec.reps,
                "verdict_accuracy": sum(o["verdict_correct"] for o in outcomes) / spec.reps,
                "influence_ci_coverage": sum(o["influence_covered"] for o in outcomes) / k_total,
                "rank_ci_coverage": sum(o["rank_covered"] for o in outcomes) / k_total,
            }
        )
    columns = sorted(DEFAULTS) + [
        "question_ci_coverage",
        "verdict_accuracy",
        "influence_ci_coverage",
        "rank_ci_coverage",
    ]
    return Report("coverage", columns, rows, _meta(spec))


def precision_report(spec: ExperimentSpec, include_kendall: bool = False) -> Report:
    """Mean precision@k per grid point; optional Kendall-tau of the full ranking."""
    rows = []
    for gi, params in enumerate(_grid_points(spec.grid)):
        ctx = _prepare(spec, params, gi)
        outcomes = _run_grid_reps(ctx, spec.reps, spec.workers)
        row = {
            **{k: params[k] for k in sorted(DEFAULTS)},
            "precision_at_k": sum(o["precision"] for o in outcomes) / spec.reps,
        }
        if include_kendall:
            taus = []
            for rep in range(spec.reps):
                rng = RandomSource(spec.seed).derive(gi, rep, 997)
                permutation = noisy_rank_permutation(ctx, rng)
                noisy_rank = [0] * len(permutation)
                for position, idx in enumerate(permutation, start=1):
                    noisy_rank[idx] = position
                tau = stats.kendalltau(ctx.oracle_ranks, noisy_rank).statistic
                taus.append(float(tau))
            row["kendall_tau"] = sum(taus) / len(taus)
        rows.append(row)
    columns = sorted(DEFAULTS) + ["precision_at_k"] + (["kendall_tau"] if include_kendall else [])
    return Report("precision", columns, rows, _meta(spec))


def ciwidth_report(spec: ExperimentSpec) -> Report:
    """Mean widths of the relative-influence and rank CIs per grid point."""
    rows = []
    for gi, params in enumerate(_grid_points(spec.grid)):
        ctx = _prepare(spec, params, gi)
        outcomes = _run_grid_reps(ctx, spec.reps, spec.workers)
        influ_widths = [w for o in outcomes for w in o["influence_ci_widths"]]
        rank_widths = [w for o in outcomes for w in o["rank_ci_widths"]]
        rows.append(
            {
                **{k: params[k] for k in sorted(DEFAULTS)},
                "mean_influence_ci_width": sum(influ_widths) / len(influ_widths),
                "mean_rank_ci_width": sum(rank_widths) / len(rank_widths),
            }
        )
    columns = sorted(DEFAULTS) + ["mean_influence_ci_width", "mean_rank_ci_width"]
    return Report("ciwidth", columns, rows, _meta(spec))
