"""Command-line front door: local three-phase runs, the experiment harness,
dataset synthesis, and serving the HTTP API."""
from __future__ import annotations

import json
import math
from pathlib import Path

import click

from .data import Dataset, GroupByQuery, Schema, question_from_json
from .errors import DPXplainError
from .experiments import (
    ExperimentSpec,
    ciwidth_report,
    coverage_report,
    precision_report,
)
from .session import DEFAULTS, ExplainSession
from .synth import planted_dataset

SEED_ENVVAR = "DPXPLAIN_SEED"


def _load_json_arg(value: str) -> dict:
    """Accept inline JSON or a path to a JSON file."""
    path = Path(value)
    if path.exists():
        return json.loads(path.read_text())
    return json.loads(value)


def _load_dataset(data: str, schema: str) -> Dataset:
    schema_obj = Schema.from_sidecar(Path(schema).read_text())
    return Dataset.from_csv(Path(data).read_text(), schema_obj)


def _fmt(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    if math.isinf(x):
        return "-inf" if x < 0 else "+inf"
    return f"{x:.6f}"


@click.group()
def main():
    """Differentially private query answers, question validation, explanations."""


shared_budget_options = [
    click.option("--rho-total", type=float, default=2.1, show_default=True),
    click.option("--rho-query", type=float, default=DEFAULTS["rho_query"], show_default=True),
    click.option("--rho-topk", type=float, default=DEFAULTS["rho_topk"], show_default=True),
    click.option("--rho-influ", type=float, default=DEFAULTS["rho_influ"], show_default=True),
    click.option("--rho-rank", type=float, default=DEFAULTS["rho_rank"], show_default=True),
    click.option("--gamma", type=float, default=DEFAULTS["gamma"], show_default=True),
    click.option("--k", type=int, default=DEFAULTS["k"], show_default=True),
    click.option("--l", "conjuncts", type=int, default=DEFAULTS["conjuncts"], show_default=True),
    click.option("--eta", type=float, default=DEFAULTS["eta"], show_default=True),
    click.option("--seed", type=int, default=0, envvar=SEED_ENVVAR, show_default=True),
]


def add_options(options):
    def wrap(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn

    return wrap


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--schema", required=True, type=click.Path(exists=True))
@click.option("--query", required=True, help="query as JSON (inline or file path)")
@click.option("--question", required=True, help="question as JSON (inline or file path)")
@add_options(shared_budget_options)
def run(data, schema, query, question, rho_total, rho_query, rho_topk, rho_influ,
        rho_rank, gamma, k, conjuncts, eta, seed):
    """Run all three phases locally and print the transcript."""
    try:
        dataset = _load_dataset(data, schema)
        query_obj = GroupByQuery.from_json(_load_json_arg(query))
        question_obj = question_from_json(_load_json_arg(question))
        session = ExplainSession(dataset, rho_total, seed)

        release = session.phase1(query_obj, rho_query)
        click.echo(f"== Phase 1: noisy answers (rho={rho_query}) ==")
        header = "group\tvalue"
        if query_obj.agg == "AVG":
            header += "\tsum_component\tcount_component"
        click.echo(header)
        for r in release.results:
            line = f"{r.group}\t{_fmt(r.noisy_value)}"
            if query_obj.agg == "AVG":
                line += f"\t{_fmt(r.noisy_sum)}\t{_fmt(r.noisy_count)}"
            click.echo(line)

        verdict = session.phase2(question_obj, gamma)
        click.echo(f"== Phase 2: question validity (gamma={gamma}) ==")
        ci = verdict.interval
        click.echo(f"interval: ({_fmt(ci.lower)}, {_fmt(ci.upper)})")
        click.echo(f"verdict: {verdict.verdict}")

        table = session.phase3(k, gamma, rho_topk, rho_influ, rho_rank, conjuncts, eta)
        kind = "relative influence" if table.relative else "raw influence (degenerate divisor)"
        click.echo(f"== Phase 3: explanation table ({kind}) ==")
        click.echo("predicate\tinflu_ci_lower\tinflu_ci_upper\trank_lower\trank_upper")
        for row in table.rows:
            click.echo(
                f"{row.predicate.describe()}\t{_fmt(row.influence_ci.lower)}"
                f"\t{_fmt(row.influence_ci.upper)}"
                f"\t{row.rank_ci.lower}\t{row.rank_ci.upper}"
            )

        budget = session.budget_view()
        click.echo(
            f"budget: total={_fmt(budget['total'])} spent={_fmt(budget['spent'])} "
            f"remaining={_fmt(budget['remaining'])}"
        )
        for charge in budget["charges"]:
            click.echo(f"  {charge['label']}: {charge['rho']}")
    except DPXplainError as exc:
        raise click.ClickException(str(exc)) from exc


@main.command()
@click.option("--rows", type=int, required=True)
@click.option("--eligible", type=int, default=8, show_default=True)
@click.option("--planted", type=int, default=5, show_default=True)
@click.option("--tiny-group", type=int, default=None)
@click.option("--seed", type=int, default=0, envvar=SEED_ENVVAR, show_default=True)
@click.option("--out-data", type=click.Path(), default="synthetic.csv", show_default=True)
@click.option("--out-schema", type=click.Path(), default="synthetic.schema.json", show_default=True)
def synth(rows, eligible, planted, tiny_group, seed, out_data, out_schema):
    """Write a planted-top-k synthetic dataset (CSV + schema sidecar)."""
    try:
        built = planted_dataset(
            rows, eligible=eligible, planted=planted, seed=seed, tiny_group=tiny_group
        )
    except DPXplainError as exc:
        raise click.ClickException(str(exc)) from exc
    Path(out_data).write_text(built.dataset.to_csv())
    Path(out_schema).write_text(json.dumps(built.dataset.schema.to_json(), indent=2))
    click.echo(f"wrote {rows} rows to {out_data}")
    click.echo(f"planted predicates: {', '.join(a + '=1' for a in built.planted_attrs)}")
    click.echo(f"question groups: {built.group_large} vs {built.group_small}")


def _experiment_spec(data, schema, query, question, grid, reps, seed, workers) -> ExperimentSpec:
    dataset = _load_dataset(data, schema)
    return ExperimentSpec(
        dataset=dataset,
        query=GroupByQuery.from_json(_load_json_arg(query)),
        question=question_from_json(_load_json_arg(question)),
        grid=_load_json_arg(grid) if grid else {},
        reps=reps,
        seed=seed,
        workers=workers,
    )


experiment_options = [
    click.option("--data", required=True, type=click.Path(exists=True)),
    click.option("--schema", required=True, type=click.Path(exists=True)),
    click.option("--query", required=True),
    click.option("--question", required=True),
    click.option("--grid", default=None, help='e.g. {"rho_query": [0.01, 0.1, 1.0]}'),
    click.option("--reps", type=int, default=10, show_default=True),
    click.option("--seed", type=int, default=0, envvar=SEED_ENVVAR, show_default=True),
    click.option("--workers", type=int, default=1, show_default=True),
    click.option("--out", type=click.Path(), default="reports", show_default=True),
]


@main.command("experiment-coverage")
@add_options(experiment_options)
def experiment_coverage(data, schema, query, question, grid, reps, seed, workers, out):
    """CI coverage and verdict accuracy across a parameter grid."""
    spec = _experiment_spec(data, schema, query, question, grid, reps, seed, workers)
    report = coverage_report(spec)
    csv_path, txt_path = report.write(out)
    click.echo(report.summary_text())
    click.echo(f"wrote {csv_path} and {txt_path}")


@main.command("experiment-precision")
@add_options(experiment_options)
@click.option("--kendall", is_flag=True, default=False, help="also report Kendall tau")
def experiment_precision(data, schema, query, question, grid, reps, seed, workers, out, kendall):
    """Mean precision@k of the private top-k selection."""
    spec = _experiment_spec(data, schema, query, question, grid, reps, seed, workers)
    report = precision_report(spec, include_kendall=kendall)
    csv_path, txt_path = report.write(out)
    click.echo(report.summary_text())
    click.echo(f"wrote {csv_path} and {txt_path}")


@main.command("experiment-ciwidth")
@add_options(experiment_options)
def experiment_ciwidth(data, schema, query, question, grid, reps, seed, workers, out):
    """Mean influence/rank CI widths across a parameter grid."""
    spec = _experiment_spec(data, schema, query, question, grid, reps, seed, workers)
    report = ciwidth_report(spec)
    csv_path, txt_path = report.write(out)
    click.echo(report.summary_text())
    click.echo(f"wrote {csv_path} and {txt_path}")


@main.command()
@click.option("--storage", type=click.Path(), default="dpxplain_data", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8200, show_default=True)
def serve(storage, host, port):
    """Serve the HTTP API (datasets, sessions, phase1..3, budget)."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(storage), host=host, port=port)


if __name__ == "__main__":
    main()
