# -*- coding: utf-8 -*-
"""
Command-line surface of the harness: one subcommand per pipeline stage,
every run persisted in its own directory under `--out`.
"""
from contextlib import contextmanager
from copy import deepcopy
from datetime import datetime
import json
import logging
import os
import os.path
import shutil
import sys
from typing import Any, Dict, Iterator, List

import click
import logzero
from logzero import logger

from ipbsim import __version__
from ipbsim.backend import Backend
from ipbsim.domain import TIERS, lookup_behavior
from ipbsim.exceptions import InvalidConfiguration, SimException
from ipbsim.experiment import build_transitions, load_dataset, \
    profile_rows, run_chain, run_grid, run_relaxation, static_subjects, \
    strategy_order, strategy_specs
from ipbsim.impact import default_coefficients, environmental_impact
from ipbsim.ingest import load_name_corpus
from ipbsim.loader import load_experiment
from ipbsim.matching import BALANCE_THRESHOLD, DEFAULT_COVARIATES, \
    propensity_match
from ipbsim.report import RUN_LOG, create_run_dir, reemit_plot_data, \
    write_config_snapshot, write_csv, write_grid, write_metadata, \
    write_relaxation, write_validation
from ipbsim.scenario import default_grid, make_grid, \
    policy_relaxation_condition
from ipbsim.settings import IPBSIM_CONFIG_PATH, load_settings, \
    loaded_settings
from ipbsim.sim import RunLog, simulate_cohort, simulate_transitions
from ipbsim.stats import DEFAULT_ALPHA

__all__ = ["cli"]

RISK_TABLE_COLUMNS = ["persona", "condition_t1", "condition_t2",
                      "risk_t1_level", "score", "level"]


@click.group()
@click.version_option(version=__version__)
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              default=None,
              help="Harness settings file (default: {}).".format(
                  IPBSIM_CONFIG_PATH))
@click.option("--experiment", "experiment_source", default=None,
              help="Experiment definition, a local file or a HTTP(s) URL.")
@click.option("--seed", type=int, default=None,
              help="Master seed, overrides the settings.")
@click.option("--backend", "backend_type", type=click.Choice(["live", "mock"]),
              default=None, help="Completion backend, overrides the settings.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Directory receiving the run directories (default: runs).")
@click.option("--verbose", is_flag=True, help="Log debug messages.")
@click.option("--log-file", is_flag=True,
              help="Also log to a file in the run directory.")
@click.pass_context
def cli(ctx: click.Context, config_path: str = None,
        experiment_source: str = None, seed: int = None,
        backend_type: str = None, out: str = None, verbose: bool = False,
        log_file: bool = False):
    """Simulate prevention behaviors of residents under epidemic conditions
    and validate them against survey data.

    Examples:

        ipbsim --backend mock validate few_shot_static

        ipbsim --seed 7 grid --personas 20

        ipbsim report runs/20240101T000000Z-grid
    """
    logzero.loglevel(logging.DEBUG if verbose else logging.INFO)

    if config_path and not os.path.exists(config_path):
        raise click.ClickException(
            'Settings file "{}" does not exist.'.format(config_path))
    settings = load_settings(config_path or IPBSIM_CONFIG_PATH) or {}
    settings = deepcopy(settings)

    experiment = None
    if experiment_source:
        try:
            experiment = load_experiment(experiment_source, settings)
        except SimException as x:
            raise click.ClickException(str(x))
        for section in ("datasets", "simulation", "grid", "relax"):
            if experiment.get(section):
                merged = dict(settings.get(section) or {})
                merged.update(experiment[section])
                settings[section] = merged
        if experiment.get("seed") is not None:
            settings["seed"] = experiment["seed"]

    if seed is not None:
        settings["seed"] = seed
    if backend_type:
        settings["backend"] = dict(settings.get("backend") or {},
                                   type=backend_type)
    loaded_settings.set(settings)

    ctx.obj = {
        "settings": settings,
        "experiment": experiment,
        "out": out or (settings.get("output") or {}).get("dir") or "runs",
        "log_file": log_file,
        "argv": sys.argv[1:]
    }


@cli.command("simulate-static")
@click.option("--round", "survey_round", type=click.Choice(["R1", "R2"]),
              default=None, help="Only simulate residents of this round.")
@click.option("--tier", "tiers", type=click.Choice(TIERS), multiple=True,
              help="Only simulate residents under these tiers.")
@click.option("--condition", default="surveyed",
              help="'surveyed' for each resident's own condition, "
                   "'relaxation' or a grid condition label.")
@click.option("--personas", type=int, default=None,
              help="Only simulate the first N selected residents.")
@click.pass_context
def simulate_static_cmd(ctx: click.Context, survey_round: str = None,
                        tiers: List[str] = None, condition: str = "surveyed",
                        personas: int = None):
    """Simulate behavior profiles without any exemplar."""
    settings = ctx.obj["settings"]
    dataset = _dataset(settings)

    with _run(ctx, "simulate-static") as (run_dir, backend, run_log):
        subjects = static_subjects(
            [r for group in sorted(dataset) for r in dataset[group]
             if (not survey_round or r["round"] == survey_round) and
             (not tiers or r["measure_tier"] in tiers)],
            _seed(settings), _corpus(settings), settings)
        if personas:
            subjects = subjects[:personas]
        if not subjects:
            raise InvalidConfiguration("no resident matches the filters")

        target = None
        if condition != "surveyed":
            target = _condition(condition, settings)
        profiles = simulate_cohort([
            {
                "persona": s["persona"],
                "condition": target or s["condition"],
                "risk": s["risk"],
                "exemplars": []
            } for s in subjects
        ], _sim_config(settings), backend, run_log, settings)
        write_csv(os.path.join(run_dir, "profiles.csv"),
                  profile_rows(profiles))
        click.echo("Simulated {} residents into {}".format(
            len(profiles), run_dir))


@cli.command("simulate-dynamic")
@click.option("--personas", type=int, default=None,
              help="Only simulate the first N matched transitions.")
@click.pass_context
def simulate_dynamic_cmd(ctx: click.Context, personas: int = None):
    """Simulate the matched R1 to R2 transitions without any exemplar."""
    settings = ctx.obj["settings"]
    dataset = _dataset(settings, required=("R1", "R2"))

    with _run(ctx, "simulate-dynamic") as (run_dir, backend, run_log):
        cases = build_transitions(
            dataset, _seed(settings), _corpus(settings), settings=settings)
        if personas:
            cases = cases[:personas]
        transitions = [c["transition"] for c in cases]
        outcomes = simulate_transitions(
            transitions, [], [], _sim_config(settings), backend, run_log,
            settings)

        risk_rows = []
        for transition, (risk, _) in zip(transitions, outcomes):
            risk_rows.append({
                "persona": transition["persona"]["id"],
                "condition_t1": transition["condition_t1"]["label"],
                "condition_t2": transition["condition_t2"]["label"],
                "risk_t1_level": transition["risk_t1"]["level"],
                "score": risk["score"],
                "level": risk["level"]
            })
        write_csv(os.path.join(run_dir, "risk.csv"), risk_rows,
                  RISK_TABLE_COLUMNS)
        write_csv(os.path.join(run_dir, "profiles.csv"),
                  profile_rows([p for _, p in outcomes]))
        click.echo("Simulated {} transitions into {}".format(
            len(outcomes), run_dir))


@cli.command("validate")
@click.argument("strategy")
@click.option("--alpha", type=float, default=DEFAULT_ALPHA, show_default=True,
              help="A behavior passes when the KS p-value exceeds it.")
@click.option("--method", type=click.Choice(["asymptotic", "exact"]),
              default="asymptotic", show_default=True,
              help="How the KS p-value is computed.")
@click.pass_context
def validate_cmd(ctx: click.Context, strategy: str,
                 alpha: float = DEFAULT_ALPHA, method: str = "asymptotic"):
    """Run STRATEGY, and the strategies it requires, against survey data."""
    settings = ctx.obj["settings"]
    try:
        specs = strategy_specs(settings, ctx.obj["experiment"])
        order = strategy_order(strategy, specs)
    except SimException as x:
        raise click.ClickException(str(x))

    needed = set()
    for name in order:
        spec = specs[name]
        for selector in (spec.get("test"), spec.get("reference")):
            if (selector or {}).get("round"):
                needed.add(selector["round"])
        if spec["mode"] == "dynamic":
            needed.update(("R1", "R2"))
    dataset = _dataset(settings, required=sorted(needed))

    with _run(ctx, "validate-{}".format(strategy)) as (
            run_dir, backend, run_log):
        reports = run_chain(
            strategy, specs, dataset, _sim_config(settings), backend,
            run_log, settings, _corpus(settings), alpha, method)
        write_validation(run_dir, reports)
        for name, report in reports.items():
            click.echo("{}: {}".format(
                name, "no behavior admitted"
                if report["gating"]["degenerate"]
                else "{}% passed".format(report["pass_rate"])))


@cli.command("grid")
@click.option("--round", "survey_round", type=click.Choice(["R1", "R2"]),
              default="R2", show_default=True,
              help="Round whose residents are moved across the grid.")
@click.option("--personas", type=int, default=None,
              help="Only simulate the first N residents.")
@click.pass_context
def grid_cmd(ctx: click.Context, survey_round: str = "R2",
             personas: int = None):
    """Simulate every condition of the scenario grid."""
    settings = ctx.obj["settings"]
    dataset = _dataset(settings, required=(survey_round,))

    with _run(ctx, "grid") as (run_dir, backend, run_log):
        rows = run_grid(
            _grid_spec(settings), dataset, _sim_config(settings), backend,
            run_log, settings, _corpus(settings), survey_round, personas)
        write_grid(run_dir, rows, settings)
        click.echo("Summarized {} conditions into {}".format(
            len(rows), run_dir))


@cli.command("relax")
@click.option("--round", "survey_round", type=click.Choice(["R1", "R2"]),
              default="R2", show_default=True,
              help="Round whose residents face the policy relaxation.")
@click.option("--personas", type=int, default=None,
              help="Only simulate the first N residents.")
@click.pass_context
def relax_cmd(ctx: click.Context, survey_round: str = "R2",
              personas: int = None):
    """Simulate the policy relaxation and tag the decision rationales."""
    settings = ctx.obj["settings"]
    dataset = _dataset(settings, required=(survey_round,))
    personas = personas or (settings.get("relax") or {}).get("personas")

    with _run(ctx, "relax") as (run_dir, backend, run_log):
        result = run_relaxation(
            dataset, _sim_config(settings), backend, run_log, settings,
            _corpus(settings), survey_round, personas)
        write_relaxation(run_dir, result, dataset, settings)
        for row in result["summary"]:
            click.echo("{}: R1 {} | R2 {} | R3 {}".format(
                row["behavior"], _fmt(row["r1_mean"]), _fmt(row["r2_mean"]),
                _fmt(row["r3_mean"])))


@cli.command("match")
@click.option("--treated", default="R2", show_default=True,
              help="Round of the treated group.")
@click.option("--control", default="R1", show_default=True,
              help="Round of the control pool.")
@click.option("--covariate", "covariates", multiple=True,
              help="Covariates to match on (default: {}).".format(
                  ", ".join(DEFAULT_COVARIATES)))
@click.pass_context
def match_cmd(ctx: click.Context, treated: str = "R2", control: str = "R1",
              covariates: List[str] = None):
    """Match the treated round to the control round on demographics."""
    settings = ctx.obj["settings"]
    dataset = _dataset(settings, required=(treated, control))
    covariates = tuple(covariates or DEFAULT_COVARIATES)

    with _run(ctx, "match", backend_required=False) as (run_dir, _, __):
        result = propensity_match(
            dataset[treated], dataset[control], covariates, _seed(settings))
        write_csv(os.path.join(run_dir, "pairs.csv"), [
            {
                "treated_id": t,
                "control_id": c,
                "propensity": result.details["scores"][t],
                "distance": result.details["distances"][t]
            } for t, c in result.pairs
        ], ["treated_id", "control_id", "propensity", "distance"])
        write_csv(os.path.join(run_dir, "smd.csv"), [
            {"covariate": c, "smd": v, "balanced": v < BALANCE_THRESHOLD}
            for c, v in result.smd.items()
        ], ["covariate", "smd", "balanced"])
        write_csv(os.path.join(run_dir, "smd-levels.csv"), [
            {"level": k, "smd": v}
            for k, v in sorted(result.details["level_smd"].items())
        ], ["level", "smd"])
        click.echo("Matched {} pairs into {}".format(
            len(result.pairs), run_dir))


@cli.command("report")
@click.argument("run_dir", type=click.Path(file_okay=False))
@click.pass_context
def report_cmd(ctx: click.Context, run_dir: str):
    """Write the plot data of RUN_DIR again from its reports."""
    try:
        paths = reemit_plot_data(run_dir, ctx.obj["settings"])
    except SimException as x:
        raise click.ClickException(str(x))
    for path in paths:
        click.echo(path)


@cli.command("impact")
@click.option("--from", "intensity_from", type=float, default=None,
              help="Mean intensity before, on the 1-5 scale.")
@click.option("--to", "intensity_to", type=float, default=None,
              help="Mean intensity after, on the 1-5 scale.")
@click.option("--relax-run", type=click.Path(file_okay=False), default=None,
              help="Take both intensities from a relax run directory.")
@click.option("--behavior", default="home_disinfection", show_default=True,
              help="Behavior read from the relax run.")
@click.option("--population", type=int, default=22000000, show_default=True,
              help="Number of residents concerned.")
@click.pass_context
def impact_cmd(ctx: click.Context, intensity_from: float = None,
               intensity_to: float = None, relax_run: str = None,
               behavior: str = "home_disinfection",
               population: int = 22000000):
    """Estimate the yearly disinfectant discharge of an intensity change."""
    settings = ctx.obj["settings"]
    try:
        if relax_run:
            intensity_from, intensity_to = _relax_intensities(
                relax_run, lookup_behavior(behavior, settings).id)
        if intensity_from is None or intensity_to is None:
            raise InvalidConfiguration(
                "pass both --from and --to, or --relax-run")
        estimate = environmental_impact(
            intensity_from, intensity_to, population,
            default_coefficients(settings))
    except SimException as x:
        raise click.ClickException(str(x))
    click.echo(json.dumps(estimate, sort_keys=True, indent=2))


###############################################################################
# Internal functions
###############################################################################
@contextmanager
def _run(ctx: click.Context, name: str,
         backend_required: bool = True) -> Iterator:
    """
    Create the run directory, hand over the backend and run log, then write
    the config snapshot, run log and metadata. On any error the run directory
    is removed, pipeline errors exit with a diagnostic.
    """
    settings = ctx.obj["settings"]
    try:
        backend = Backend(settings.get("backend")) \
            if backend_required else None
    except SimException as x:
        raise click.ClickException(str(x))

    started = datetime.utcnow()
    run_dir = create_run_dir(ctx.obj["out"], name, started)
    if ctx.obj["log_file"]:
        logzero.logfile(os.path.join(run_dir, "ipbsim.log"))
    run_log = RunLog()

    try:
        yield run_dir, backend, run_log
        run_log.write(os.path.join(run_dir, RUN_LOG))
        write_config_snapshot(run_dir, settings)
        write_metadata(run_dir, {
            "command": name,
            "argv": ctx.obj["argv"],
            "seed": _seed(settings),
            "backend": backend.metadata() if backend else None,
            "completions": len(run_log),
            "datasets": settings.get("datasets") or {},
            "experiment": (ctx.obj["experiment"] or {}).get("title"),
            "started": started.isoformat() + "Z",
            "finished": datetime.utcnow().isoformat() + "Z"
        })
    except SimException as x:
        logger.error("Run '{}' failed: {}".format(name, str(x)))
        _discard(ctx, run_dir)
        raise click.ClickException(str(x))
    except Exception:
        _discard(ctx, run_dir)
        raise
    else:
        if ctx.obj["log_file"]:
            logzero.logfile(None)


def _discard(ctx: click.Context, run_dir: str):
    if ctx.obj["log_file"]:
        logzero.logfile(None)
    shutil.rmtree(run_dir, ignore_errors=True)


def _grid_spec(settings: Dict[str, Any]) -> Dict[str, Any]:
    spec = default_grid()
    spec.update(settings.get("grid") or {})
    return spec


def _dataset(settings: Dict[str, Any],
             required: Any = ()) -> Dict[str, List[Dict[str, Any]]]:
    paths = settings.get("datasets") or {}
    if not paths:
        raise click.ClickException(
            "no survey dataset is configured, set the 'datasets' section")
    for survey_round in required:
        if survey_round not in paths:
            raise click.ClickException(
                "no {} survey file is configured".format(survey_round))
    for survey_round, path in sorted(paths.items()):
        if not os.path.exists(path):
            raise click.ClickException(
                'Survey file "{}" of {} does not exist.'.format(
                    path, survey_round))
    try:
        return load_dataset(paths)
    except SimException as x:
        raise click.ClickException(str(x))


def _seed(settings: Dict[str, Any]) -> int:
    return settings.get("seed", 0)


def _sim_config(settings: Dict[str, Any]) -> Dict[str, Any]:
    config = dict(settings.get("simulation") or {})
    config["seed"] = _seed(settings)
    return config


def _corpus(settings: Dict[str, Any]) -> List[str]:
    return load_name_corpus(settings.get("names"))


def _condition(label: str, settings: Dict[str, Any]) -> Dict[str, Any]:
    if label == "relaxation":
        return policy_relaxation_condition(settings)
    for condition in make_grid(_grid_spec(settings), settings=settings):
        if condition["label"] == label:
            return condition
    raise InvalidConfiguration(
        "'{}' is neither 'surveyed', 'relaxation' nor a grid "
        "condition".format(label))


def _relax_intensities(run_dir: str, behavior: str) -> (float, float):
    path = os.path.join(run_dir, "relax.json")
    if not os.path.exists(path):
        raise InvalidConfiguration(
            "'{}' is not a relax run directory".format(run_dir))
    with open(path, encoding="utf-8") as f:
        summary = json.load(f)["summary"]
    for row in summary:
        if row["behavior"] == behavior:
            if row["r2_mean"] is None or row["r3_mean"] is None:
                raise InvalidConfiguration(
                    "the relax run has no R2 or R3 mean for '{}'".format(
                        behavior))
            return row["r2_mean"], row["r3_mean"]
    raise InvalidConfiguration(
        "the relax run does not report '{}'".format(behavior))


def _fmt(value: float) -> str:
    return "-" if value is None else "{:.2f}".format(value)
