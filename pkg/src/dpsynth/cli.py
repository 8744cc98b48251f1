"""Command-line surface: schema-infer, gen-queries, fit, eval, ablate-annealing.

Exit codes: 0 success, 2 usage/parameter error, 3 data/format error,
4 budget/optimization error.
"""

from __future__ import annotations

import csv
import json
import sys
import time

import click
import numpy as np

from . import __version__
from .engine import EngineConfig, Phase, rappp_fit
from .errors import BudgetError, DataError, OptimizationError, ParameterError
from .evaluation import workload_error
from .manifest import RunManifest, file_digest
from .projection import AnnealConfig, relaxed_projection_anneal
from .queries import (
    CategoricalMarginal,
    CompiledQueries,
    QuerySet,
    gen_cm_queries,
    gen_lt_queries,
    gen_mm_queries,
    gen_prefix_queries,
)
from .engine import init_relaxed_uniform
from .schema import DiscreteDataset, Schema, sample_discrete

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


@click.group()
@click.version_option(__version__)
def cli():
    """Differentially private synthetic tabular data."""


def _anneal_options(f):
    for opt in reversed(
        [
            click.option("--sigma-initial", type=float, default=2.0, show_default=True),
            click.option("--doublings", type=int, default=10, show_default=True),
            click.option("--grad-stop", type=float, default=1e-3, show_default=True),
            click.option("--max-inner-steps", type=int, default=500, show_default=True),
            click.option("--step-size", type=float, default=0.05, show_default=True),
        ]
    ):
        f = opt(f)
    return f


def _anneal_from(kw) -> AnnealConfig:
    return AnnealConfig(
        sigma_initial=kw["sigma_initial"],
        doublings=kw["doublings"],
        grad_stop=kw["grad_stop"],
        max_inner_steps=kw["max_inner_steps"],
        step_size=kw["step_size"],
    )


@cli.command("schema-infer")
@click.argument("csv_path", type=click.Path(exists=True))
@click.option("--overrides", "overrides_path", type=click.Path(exists=True), default=None)
@click.option("--max-categories", type=int, default=64, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write schema JSON here instead of stdout.")
def cmd_schema_infer(csv_path, overrides_path, max_categories, out_path):
    """Infer a schema from a CSV file.

    Columns whose values all parse as numbers become numerical; bounds come
    from the overrides file or, failing that, from the observed min/max (which
    voids the privacy guarantee -- a warning is emitted). Everything else
    becomes categorical, capped at --max-categories distinct values.
    """
    overrides = {}
    if overrides_path:
        with open(overrides_path) as fh:
            overrides = json.load(fh)
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{csv_path}: empty file")
        rows = list(reader)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"{csv_path}: row {i + 2} has {len(row)} fields, expected {len(header)}")
    if not rows:
        raise DataError(f"{csv_path}: no data rows")
    columns = []
    for j, name in enumerate(header):
        cells = [row[j] for row in rows]
        ov = overrides.get(name, {})
        numeric = True
        try:
            values = [float(c) for c in cells]
        except ValueError:
            numeric = False
        if ov.get("kind") == "categorical":
            numeric = False
        col: dict = {"name": name, "is_label": bool(ov.get("is_label", False))}
        if numeric:
            col["kind"] = "numerical"
            if "lower" in ov and "upper" in ov:
                col["lower"], col["upper"] = float(ov["lower"]), float(ov["upper"])
            else:
                col["lower"], col["upper"] = min(values), max(values)
                col["bounds_from_data"] = True
                click.echo(
                    f"WARNING: column {name!r}: bounds inferred from data. "
                    "Data-derived bounds VOID the privacy guarantee; supply public "
                    "bounds via --overrides before any private run.",
                    err=True,
                )
        else:
            cats = sorted(set(cells))
            if len(cats) > max_categories:
                raise DataError(
                    f"column {name!r}: {len(cats)} distinct values exceeds "
                    f"--max-categories={max_categories}"
                )
            col["kind"] = "categorical"
            col["categories"] = cats
        columns.append(col)
    schema_dict = {"columns": columns}
    Schema.from_dict(schema_dict)  # validate
    text = json.dumps(schema_dict, indent=2) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


@cli.command("gen-queries")
@click.option("--schema", "schema_path", type=click.Path(exists=True), required=True)
@click.option("--kind", type=click.Choice(["cm", "mm", "lt", "prefix"]), required=True)
@click.option("-m", "--num-queries", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def cmd_gen_queries(schema_path, kind, num_queries, seed, out_path):
    """Generate a query workload file. The cm kind is exhaustive and ignores -m."""
    schema = Schema.from_json(schema_path)
    if kind == "cm":
        qs = gen_cm_queries(schema)
    elif kind == "mm":
        qs = gen_mm_queries(schema, num_queries, seed)
    elif kind == "lt":
        qs = gen_lt_queries(schema, num_queries, seed)
    else:
        qs = gen_prefix_queries(schema, num_queries, seed)
    qs.to_json(out_path)
    click.echo(f"wrote {len(qs)} {kind} queries to {out_path}")


def _parse_phase_spec(spec: str) -> tuple[str, str, int]:
    parts = spec.rsplit(":", 2)
    if len(parts) != 3:
        raise ParameterError(f"phase spec {spec!r} must be LABEL:QUERYFILE:EPOCHS")
    label, path, epochs = parts
    try:
        return label, path, int(epochs)
    except ValueError:
        raise ParameterError(f"phase spec {spec!r}: epochs must be an integer")


@cli.command("fit")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--schema", "schema_path", type=click.Path(exists=True), required=True)
@click.option(
    "--phase",
    "phase_specs",
    multiple=True,
    help="LABEL:QUERYFILE:EPOCHS, repeatable; ordered. Default: an exhaustive "
    "cm phase with (categorical columns - 1) epochs, then a random lt phase "
    "with 50 epochs.",
)
@click.option("--epsilon", type=float, required=True)
@click.option("--delta", type=float, default=None, help="Defaults to 1/n^2 of the ingested data.")
@click.option("-K", "--queries-per-epoch", type=int, default=10, show_default=True)
@click.option("--synthetic-rows", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True, help="Bound on data-parallel workers.")
@click.option("--zero-noise", is_flag=True, hidden=True, help="Test hook: disable all mechanism noise.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--trace", "trace_path", type=click.Path(), default=None)
@click.option("--checkpoint", "checkpoint_path", type=click.Path(), default=None)
@_anneal_options
def cmd_fit(
    data_path,
    schema_path,
    phase_specs,
    epsilon,
    delta,
    queries_per_epoch,
    synthetic_rows,
    seed,
    threads,
    zero_noise,
    out_path,
    manifest_path,
    trace_path,
    checkpoint_path,
    **anneal_kw,
):
    """Fit a private synthetic dataset and write it as CSV."""
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    start = time.perf_counter()
    schema = Schema.from_json(schema_path)
    data = DiscreteDataset.from_csv(data_path, schema)
    if data.clamp_warnings:
        click.echo(f"WARNING: clamped {data.clamp_warnings} out-of-bounds numerical cells", err=True)
    if delta is None:
        delta = 1.0 / (data.n * data.n)
    phases = []
    if phase_specs:
        for spec in phase_specs:
            label, path, epochs = _parse_phase_spec(spec)
            phases.append(Phase(label=label, queries=QuerySet.from_json(path), epochs=epochs))
    else:
        t_cm = max(1, len(schema.cat_indices) - 1)
        phases.append(Phase("cm", gen_cm_queries(schema), t_cm))
        lt_pool = max(1000, 50 * queries_per_epoch * 2)
        phases.append(Phase("lt", gen_lt_queries(schema, lt_pool, seed), 50))
    cfg = EngineConfig(
        epsilon=epsilon,
        delta=delta,
        phases=phases,
        queries_per_epoch=queries_per_epoch,
        synthetic_rows=synthetic_rows,
        anneal=_anneal_from(anneal_kw),
        seed=seed,
        zero_noise=zero_noise,
    )
    synthetic, state = rappp_fit(data, cfg)
    synthetic.to_csv(out_path)
    acct = state.accountant
    click.echo(
        f"done: epsilon={acct.epsilon:g} delta={acct.delta:g} rho={acct.rho_total:.6g} "
        f"spent={acct.spent:.6g} over {len(acct.ledger)} charges"
    )
    if trace_path:
        with open(trace_path, "w") as fh:
            json.dump(
                [
                    {
                        "phase": d.phase,
                        "epoch": d.epoch,
                        "selected": d.selected_ids,
                        "pre_loss": d.pre_loss,
                        "post_loss": d.post_loss,
                        "measured_mean_error": d.measured_mean_error,
                    }
                    for d in state.diagnostics
                ],
                fh,
                indent=1,
            )
    if checkpoint_path:
        np.savez(
            checkpoint_path,
            cat=state.relaxed.cat,
            num=state.relaxed.num,
        )
    if manifest_path:
        RunManifest(
            command=sys.argv,
            config={
                "epsilon": epsilon,
                "delta": delta,
                "K": queries_per_epoch,
                "synthetic_rows": synthetic_rows,
                "phases": [{"label": p.label, "epochs": p.epochs, "m": len(p.queries)} for p in phases],
                "anneal": anneal_kw,
                "threads": threads,
                "zero_noise": zero_noise,
            },
            seed=seed,
            input_digests={"schema": file_digest(schema_path), "data": file_digest(data_path)},
            tool_version=__version__,
            wall_time=time.perf_counter() - start,
            privacy={
                "epsilon": acct.epsilon,
                "delta": acct.delta,
                "rho": acct.rho_total,
                "ledger": acct.ledger_export(),
            },
        ).write(manifest_path)


@cli.command("eval")
@click.option("--real", "real_path", type=click.Path(exists=True), required=True)
@click.option("--synthetic", "synth_path", type=click.Path(exists=True), required=True)
@click.option("--schema", "schema_path", type=click.Path(exists=True), required=True)
@click.argument("workloads", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--per-query", is_flag=True, help="Include the full per-query error vector.")
@click.option("--out", "out_path", type=click.Path(), default=None, help="JSON report path (default stdout).")
@click.option("--csv", "csv_path", type=click.Path(), default=None, help="Also append flat CSV rows here.")
def cmd_eval(real_path, synth_path, schema_path, workloads, per_query, out_path, csv_path):
    """Report workload error of a synthetic dataset against the real one."""
    schema = Schema.from_json(schema_path)
    real = DiscreteDataset.from_csv(real_path, schema)
    synth = DiscreteDataset.from_csv(synth_path, schema)
    reports = []
    for wpath in workloads:
        qs = QuerySet.from_json(wpath)
        reports.append(workload_error(real, synth, qs, label=wpath, per_query=per_query))
    text = json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)
    if csv_path:
        with open(csv_path, "a", newline="") as fh:
            writer = csv.writer(fh)
            for r in reports:
                writer.writerow(r.csv_row())


@cli.command("ablate-annealing")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--schema", "schema_path", type=click.Path(exists=True), required=True)
@click.option("--workload", "workload_path", type=click.Path(exists=True), required=True)
@click.option(
    "--fixed-sigma",
    "fixed_sigmas",
    type=float,
    multiple=True,
    default=(2.0, 8.0, 32.0, 128.0, 512.0),
    show_default=True,
)
@click.option("--synthetic-rows", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@_anneal_options
def cmd_ablate_annealing(
    data_path, schema_path, workload_path, fixed_sigmas, synthetic_rows, seed, out_path, **anneal_kw
):
    """Compare annealed vs fixed-temperature projection on exact targets.

    Runs the non-private projection (no mechanism noise) once with the
    annealing schedule and once per fixed sigma at an equal total inner-step
    budget, then reports each arm's exact-query error.
    """
    schema = Schema.from_json(schema_path)
    data = DiscreteDataset.from_csv(data_path, schema)
    workload = QuerySet.from_json(workload_path)
    if all(isinstance(q, CategoricalMarginal) for q in workload.queries):
        raise ParameterError("workload has no threshold-bearing queries; nothing to anneal")
    anneal_cfg = _anneal_from(anneal_kw)
    compiled = CompiledQueries(workload.queries, schema)
    targets = compiled.eval_discrete(data)
    rng = np.random.default_rng(seed)
    init = init_relaxed_uniform(schema, synthetic_rows, rng)
    budget = anneal_cfg.doublings * anneal_cfg.max_inner_steps

    rows = []

    def run_arm(name, cfg):
        fitted, _ = relaxed_projection_anneal(compiled, targets, init.copy(), cfg)
        synth = sample_discrete(fitted, seed)
        diff = np.abs(targets - compiled.eval_discrete(synth))
        rows.append([name, repr(float(diff.mean())), repr(float(diff.max()))])

    run_arm("anneal", anneal_cfg)
    for sigma in fixed_sigmas:
        fixed = AnnealConfig(
            sigma_initial=sigma,
            doublings=1,
            grad_stop=anneal_cfg.grad_stop,
            max_inner_steps=budget,
            step_size=anneal_cfg.step_size,
            beta1=anneal_cfg.beta1,
            beta2=anneal_cfg.beta2,
            eps=anneal_cfg.eps,
        )
        run_arm(f"fixed_{sigma:g}", fixed)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["arm", "mean_error", "max_error"])
        writer.writerows(rows)
    click.echo(f"wrote {len(rows)} arms to {out_path}")


def main():
    try:
        cli(standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(EXIT_USAGE)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(EXIT_USAGE)
    except ParameterError as exc:
        click.echo(f"parameter error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    except (DataError, FileNotFoundError) as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(EXIT_DATA)
    except (BudgetError, OptimizationError) as exc:
        click.echo(f"runtime error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    sys.exit(0)


if __name__ == "__main__":
    main()
