"""Command-line front end: one subcommand per pipeline stage plus sweep, report and run."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .pipeline import ExperimentPlan, Pipeline, StageError, load_plan, with_overrides
from .simulate import ConfigError


def _plan(ctx) -> ExperimentPlan:
    opts = ctx.obj
    try:
        plan = load_plan(opts["config"]) if opts["config"] else ExperimentPlan()
    except (ConfigError, OSError, ValueError) as exc:
        _fail(opts["out"], "config", exc)
    return with_overrides(plan, opts["seed"], opts["threads"], opts["retrain"])


def _fail(out: Path, stage: str, exc: Exception):
    out.mkdir(parents=True, exist_ok=True)
    err = {"stage": stage, "error": type(exc).__name__, "message": str(exc)}
    (out / "error.json").write_text(json.dumps(err, indent=2, sort_keys=True) + "\n")
    click.echo(f"error: {stage}: {exc}", err=True)
    sys.exit(2 if stage == "config" else 1)


def _guard(ctx, stage: str, fn):
    out = ctx.obj["out"]
    try:
        return fn()
    except StageError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except Exception as exc:
        _fail(out, stage, exc)


@click.group()
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
              help="Plan or scenario YAML file.")
@click.option("--out", "out", type=click.Path(file_okay=False), default="runs/default", show_default=True,
              help="Output directory for artifacts.")
@click.option("--threads", type=int, default=None, help="Worker threads (does not change results).")
@click.option("--retrain-with-adversarial", "retrain", is_flag=True, default=None,
              help="Also refit on merged training data and report legit-only accuracy.")
@click.option("-v", "--verbose", is_flag=True, help="Log stage progress.")
@click.pass_context
def main(ctx, seed, config, out, threads, retrain, verbose):
    """Mobility-prediction poisoning experiments on a synthetic cellular network."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    ctx.obj = {"seed": seed, "config": config, "out": Path(out), "threads": threads, "retrain": retrain}


def _stage_command(name: str, stage: str, help_text: str):
    @main.command(name, help=help_text)
    @click.pass_context
    def cmd(ctx):
        pipe = Pipeline(_plan(ctx), ctx.obj["out"])
        _guard(ctx, stage, lambda: pipe.run_stage(stage))
        click.echo(f"{stage}: ok -> {pipe.out}")

    return cmd


_stage_command("simulate", "simulate", "Simulate legitimate populations and write raw traces.")
_stage_command("attack", "attack", "Generate the scenario's adversarial traces.")
_stage_command("featurize", "features", "Enrich raw traces into per-mobility feature tables.")
_stage_command("train", "train", "Fit location and timeslot predictors on training days.")
_stage_command("eval", "eval", "Score predictors on the test day.")
_stage_command("defend", "defend", "Cluster test-day events and quarantine the suspicious cluster.")


@main.command()
@click.option("--attacks", default=None, help="Comma-separated attack kinds.")
@click.option("--n-ues", "n_ues", default=None, help="Comma-separated acquired-UE counts.")
@click.pass_context
def sweep(ctx, attacks, n_ues):
    """Mixed accuracy against acquired adversarial UEs for each attack kind."""
    from .pipeline import SweepConfig

    plan = _plan(ctx)
    base = plan.sweep or SweepConfig()
    kwargs = {"attacks": base.attacks, "n_ues": base.n_ues, "mobilities": base.mobilities, "dwell": base.dwell}
    try:
        if attacks:
            kwargs["attacks"] = tuple(a.strip() for a in attacks.split(","))
        if n_ues:
            kwargs["n_ues"] = tuple(int(n) for n in n_ues.split(","))
        cfg = SweepConfig(**kwargs)
    except (ConfigError, ValueError) as exc:
        _fail(ctx.obj["out"], "sweep", exc)
    pipe = Pipeline(plan, ctx.obj["out"])
    rows = _guard(ctx, "sweep", lambda: pipe.sweep(cfg))
    click.echo(f"sweep: {len(rows)} points -> {pipe.out / 'sweep_points.csv'}")


@main.command()
@click.pass_context
def report(ctx):
    """Write baseline.csv, sweep.csv and per-mobility SVG charts from eval artifacts."""
    pipe = Pipeline(_plan(ctx), ctx.obj["out"])
    paths = _guard(ctx, "report", pipe.report)
    for name, p in paths.items():
        click.echo(f"{name}: {p}")


@main.command()
@click.pass_context
def run(ctx):
    """Run every stage listed in the plan, then sweep (if configured) and report."""
    pipe = Pipeline(_plan(ctx), ctx.obj["out"])
    _guard(ctx, "run", pipe.run)
    click.echo(f"run: ok -> {pipe.out}")


if __name__ == "__main__":
    main()
