"""Command-line interface.

Config files are flat `key = value` lines mirroring the run options;
explicit CLI flags override file values.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import harness
from .datasets import build_distill_fixture, build_localization_fixture
from .errors import MafigError
from .harness import RunConfig, run_suite
from .scenarios import (
    CASE_COUNTS,
    generate_cases,
    get_scenario,
    load_fixture_library,
    write_cases,
)
from .sfl import DEFAULT_LAMBDA_EDIT, weighted_nll

_SCENARIO_CHOICE = click.Choice(["port", "warehouse", "deck"])


def _parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise click.ClickException(f"{path}:{line_no}: expected key = value")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


@click.group()
def main() -> None:
    """Emergency-repair scheduling toolkit."""


@main.command("gen-cases")
@click.option("--scenario", type=_SCENARIO_CHOICE, required=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--count", type=int, default=None, help="Total cases; defaults to the scenario's benchmark size.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def gen_cases(scenario: str, seed: int, count: int | None, out: str) -> None:
    """Generate a seeded emergency-case file (JSONL)."""
    scn = get_scenario(scenario)
    lib = load_fixture_library(scn, validate_probes=False)
    total = count if count is not None else CASE_COUNTS[scenario]
    cases = generate_cases(scn, seed, total, lib)
    write_cases(scn, cases, out)
    click.echo(f"wrote {len(cases)} cases to {out}")


def _backend_pair(backend: str) -> tuple[str, str]:
    if backend in ("heuristic", "rules"):
        return "heuristic", "rules"
    if backend == "remote":
        return "remote", "remote"
    raise click.ClickException(f"unknown backend {backend!r}")


@main.command("run")
@click.option("--scenario", type=_SCENARIO_CHOICE)
@click.option("--backend", type=click.Choice(["heuristic", "rules", "remote"]), default=None,
              help="heuristic/rules: deterministic agents; remote: both agents remote.")
@click.option("--tau", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--count", type=int, default=None)
@click.option("--cases", "case_file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--clock", type=click.Choice(["logical", "wall"]), default=None)
@click.option("--parallelism", type=int, default=None)
@click.option("--detail", is_flag=True, help="Add perception/decision time columns to reports.")
def run(scenario, backend, tau, seed, count, case_file, out_dir, config_file, clock, parallelism, detail) -> None:
    """Run an emergency suite end to end and write reports."""
    values = _parse_config_file(config_file) if config_file else {}
    scenario = scenario or values.get("scenario")
    if not scenario:
        raise click.ClickException("--scenario is required (flag or config file)")
    perception, decision = _backend_pair(backend or values.get("backend", "heuristic"))
    config = RunConfig(
        scenario=scenario,
        perception=perception,
        decision=decision,
        tau=tau if tau is not None else float(values.get("tau", harness.DEFAULT_TAU)),
        lambda_edit=float(values.get("lambda_edit", DEFAULT_LAMBDA_EDIT)),
        seed=seed if seed is not None else int(values.get("seed", 1)),
        count=count if count is not None else (int(values["count"]) if "count" in values else None),
        case_file=case_file or values.get("cases"),
        parallelism=parallelism if parallelism is not None else int(values.get("parallelism", 1)),
        out_dir=out_dir or values.get("out", "out"),
        clock=clock or values.get("clock", ""),
    )
    scn = get_scenario(config.scenario)
    lib = load_fixture_library(scn, validate_probes=False)
    cases = harness.load_or_generate_cases(config, lib, scn)
    try:
        summary, records, _ = run_suite(cases, config, lib)
    except MafigError as exc:
        raise click.ClickException(str(exc)) from exc
    paths = harness.report(summary, records, config.out_dir, detail=detail)
    click.echo(harness.render_table(summary, detail=detail))
    click.echo(f"episodes: {paths['episodes']}")
    click.echo(f"summary: {paths['csv']}")


@main.group()
def sfl() -> None:
    """Distillation dataset tooling."""


@sfl.command("build")
@click.option("--scenario", type=_SCENARIO_CHOICE, required=True)
@click.option("--kind", type=click.Choice(["distill", "localization"]), default="distill", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--lambda-edit", type=float, default=DEFAULT_LAMBDA_EDIT, show_default=True)
def sfl_build(scenario: str, kind: str, out: str, lambda_edit: float) -> None:
    """Build the distillation or localization dataset for a scenario."""
    if kind == "distill":
        records = build_distill_fixture(scenario, out, lambda_edit)
    else:
        records = build_localization_fixture(scenario, out)
    click.echo(f"wrote {len(records)} records to {out}")


@sfl.command("loss")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def sfl_loss(file: str) -> None:
    """Weighted NLL of a JSON file holding {"logprobs": [...], "weights": [...]}."""
    data = json.loads(Path(file).read_text(encoding="utf-8"))
    try:
        value = weighted_nll(data["logprobs"], data["weights"])
    except (KeyError, MafigError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"{value:.12f}")


@main.group()
def lib() -> None:
    """Atomic-function library tooling."""


@lib.command("show")
@click.option("--scenario", type=_SCENARIO_CHOICE, required=True)
@click.option("--function", "function_name", default=None, help="Print one function's source.")
def lib_show(scenario: str, function_name: str | None) -> None:
    """List the library, or print one function."""
    library = load_fixture_library(scenario, validate_probes=False)
    if function_name:
        click.echo(library.get(function_name).source, nl=False)
        return
    for name in library.names():
        entry = library.entries[name]
        click.echo(f"{name} v{entry.version}: {entry.spec.summary}")


@lib.command("validate")
@click.option("--scenario", type=_SCENARIO_CHOICE, required=True)
@click.option("--path", type=click.Path(exists=True, file_okay=False), default=None,
              help="Library directory; defaults to the packaged fixture.")
def lib_validate(scenario: str, path: str | None) -> None:
    """Parse every source, check specs, and run every probe suite."""
    try:
        library = load_fixture_library(scenario, path, validate_probes=True)
    except MafigError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"{scenario}: {len(library)} functions validated")


@main.command("report")
@click.option("--summary", "summary_file", type=click.Path(exists=True, dir_okay=False), required=True,
              help="A summary.json produced by `mafig run`.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--detail", is_flag=True)
def report_cmd(summary_file: str, out_dir: str, detail: bool) -> None:
    """Re-render summary.csv / summary.txt from a stored summary."""
    data = json.loads(Path(summary_file).read_text(encoding="utf-8"))
    summary = harness.RunSummary(
        scenario=data["scenario"],
        method=data["method"],
        n=data["n"],
        successes=data["successes"],
        total_time=data["total_time"],
        perception_time=data["perception_time"],
        decision_time=data["decision_time"],
        per_category=data["per_category"],
        clock=data["clock"],
        frozen_library=data.get("frozen_library", False),
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(harness.render_csv(summary, detail), encoding="utf-8")
    (out / "summary.txt").write_text(harness.render_table(summary, detail), encoding="utf-8")
    click.echo(harness.render_table(summary, detail))


if __name__ == "__main__":
    sys.exit(main())
