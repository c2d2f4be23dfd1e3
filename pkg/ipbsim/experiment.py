# -*- coding: utf-8 -*-
"""
Progressive validation of the simulator against survey data, and the case
applications built on top of it.

Six strategies are defined by default, zero-shot, few-shot and transfer for
both the static and the dynamic pipeline. Strategies declare the strategies
they require: a strategy only simulates the behaviors that passed every one
of its prerequisites.

Dynamic strategies work on transitions. The R2 sample is matched on its
demographics to the R1 sample, each matched pair gives a transition: the R2
resident is the persona and the observed outcome, the R1 match supplies the
condition and risk perception at T1.
"""
from copy import deepcopy
from fractions import Fraction
import math
from typing import Any, Dict, List, Sequence, Tuple

from logzero import logger
import numpy as np

from ipbsim.backend import Backend
from ipbsim.domain import BEHAVIOR_POINTS, RISK_POINTS, TIERS, \
    behavior_ids, make_condition, make_measures
from ipbsim.exceptions import InvalidConfiguration, InvalidStrategy
from ipbsim.impact import default_lexicon, tag_rationales
from ipbsim.ingest import community_intensities, enrich, load_name_corpus, \
    load_survey, risk_level_from_survey
from ipbsim.matching import DEFAULT_COVARIATES, propensity_match
from ipbsim.scenario import make_grid, policy_relaxation_condition, \
    round_context
from ipbsim.seeding import rng_for
from ipbsim.settings import get_loaded_settings
from ipbsim.sim import RunLog, simulate_cohort, simulate_transitions
from ipbsim.stats import DEFAULT_ALPHA, pass_rate, validate_behavior
from ipbsim.types import GridSpec, Record, Settings, SimConfig, \
    StrategySpec, ValidationReport

__all__ = ["DEFAULT_STRATEGIES", "strategy_specs", "ensure_strategy_is_valid",
           "split_reference", "gate", "run_strategy", "run_chain",
           "load_dataset", "static_subjects", "build_transitions",
           "select_exemplars", "run_grid", "run_relaxation",
           "strategy_order", "profile_rows"]

KINDS = ("zero_shot", "few_shot", "transfer")
MODES = ("static", "dynamic")
DEFAULT_FRACTION = Fraction(1, 3)

DEFAULT_STRATEGIES = {
    "zero_shot_static": {
        "kind": "zero_shot",
        "mode": "static",
        "reference": None,
        "test": {"round": "R1"},
        "requires": []
    },
    "few_shot_static": {
        "kind": "few_shot",
        "mode": "static",
        "reference": {"round": "R1"},
        "test": {"round": "R1"},
        "fraction": "1/3",
        "requires": []
    },
    "transfer_static": {
        "kind": "transfer",
        "mode": "static",
        "reference": {"round": "R1"},
        "test": {"round": "R2"},
        "requires": ["few_shot_static"]
    },
    "zero_shot_dynamic": {
        "kind": "zero_shot",
        "mode": "dynamic",
        "reference": None,
        "test": {"tiers": ["Isolation", "SelfHealthMonitoring", "RegularPC"]},
        "requires": ["zero_shot_static"]
    },
    "few_shot_dynamic": {
        "kind": "few_shot",
        "mode": "dynamic",
        "reference": {"tiers": ["RegularPC"]},
        "test": {"tiers": ["RegularPC"]},
        "fraction": "1/3",
        "requires": ["few_shot_static"]
    },
    "transfer_dynamic": {
        "kind": "transfer",
        "mode": "dynamic",
        "reference": {"tiers": ["RegularPC"]},
        "test": {"tiers": ["Isolation", "SelfHealthMonitoring"]},
        "requires": ["transfer_static", "few_shot_dynamic"]
    }
}


###############################################################################
# Strategies
###############################################################################
def strategy_specs(settings: Settings = None,
                   experiment: Dict[str, Any] = None
                   ) -> Dict[str, StrategySpec]:
    """
    The strategies known to a run: the defaults, updated by the `strategies`
    section of the settings and then by those of the experiment definition.
    """
    settings = settings if settings is not None else get_loaded_settings()
    specs = deepcopy(DEFAULT_STRATEGIES)
    for source in (settings or {}, experiment or {}):
        for name, overrides in (source.get("strategies") or {}).items():
            spec = specs.setdefault(name, {})
            spec.update(overrides or {})

    for name, spec in specs.items():
        spec["name"] = name
        ensure_strategy_is_valid(spec)
    return specs


def ensure_strategy_is_valid(spec: StrategySpec):
    """
    Raise :exc:`InvalidStrategy` when a strategy declaration cannot be run.
    """
    name = spec.get("name") or "<unnamed>"
    if spec.get("kind") not in KINDS:
        raise InvalidStrategy(
            "strategy '{}' has an unknown kind '{}', expected one of: "
            "{}".format(name, spec.get("kind"), ", ".join(KINDS)))
    if spec.get("mode") not in MODES:
        raise InvalidStrategy(
            "strategy '{}' has an unknown mode '{}'".format(
                name, spec.get("mode")))

    if not isinstance(spec.get("test"), dict):
        raise InvalidStrategy(
            "strategy '{}' requires a test selector".format(name))

    if spec["kind"] == "zero_shot" and spec.get("reference"):
        raise InvalidStrategy(
            "zero-shot strategy '{}' cannot have a reference".format(name))
    if spec["kind"] != "zero_shot" and \
            not isinstance(spec.get("reference"), dict):
        raise InvalidStrategy(
            "strategy '{}' requires a reference selector".format(name))

    if spec["kind"] == "few_shot":
        _fraction(spec.get("fraction", DEFAULT_FRACTION))

    for selector in (spec.get("reference"), spec["test"]):
        for tier in (selector or {}).get("tiers") or []:
            if tier not in TIERS:
                raise InvalidStrategy(
                    "strategy '{}' selects unknown tier '{}'".format(
                        name, tier))

    if not isinstance(spec.get("requires") or [], list):
        raise InvalidStrategy(
            "strategy '{}' must list its requirements".format(name))


def strategy_order(target: str,
                   specs: Dict[str, StrategySpec]) -> List[str]:
    """
    The strategies to run, prerequisites first, to run `target`.
    """
    order = []

    def visit(name: str, path: Tuple[str, ...]):
        if name not in specs:
            raise InvalidStrategy(
                "unknown strategy '{}', defined strategies are: {}".format(
                    name, ", ".join(sorted(specs))))
        if name in path:
            raise InvalidStrategy(
                "strategies depend on each other in a cycle: {}".format(
                    " -> ".join(path + (name,))))
        if name in order:
            return
        for required in specs[name].get("requires") or []:
            visit(required, path + (name,))
        order.append(name)

    visit(target, ())
    return order


def split_reference(dataset: Sequence[Any], fraction: Any = DEFAULT_FRACTION,
                    seed: int = 0) -> Tuple[List[Any], List[Any]]:
    """
    Randomly set aside `floor(fraction * n)` items as reference, the rest is
    the test set. Both keep the order of `dataset`.
    """
    fraction = _fraction(fraction)
    n = len(dataset)
    size = math.floor(fraction * n)
    chosen = set(int(i) for i in rng_for(seed, "split").permutation(n)[:size])
    reference = [item for i, item in enumerate(dataset) if i in chosen]
    test = [item for i, item in enumerate(dataset) if i not in chosen]
    return reference, test


def gate(prior: ValidationReport, mode: str = None) -> List[str]:
    """
    Behaviors a later stage may simulate: those that passed `prior`.
    """
    passed = [row["behavior"] for row in prior.get("rows", [])
              if row["passed"]]
    logger.debug("'{}' admits {} behavior(s){}".format(
        prior.get("strategy"), len(passed),
        " to a {} stage".format(mode) if mode else ""))
    return passed


###############################################################################
# Datasets
###############################################################################
def load_dataset(paths: Dict[str, str]) -> Dict[str, List[Record]]:
    """
    Load one survey file per round. Every record of a file must belong to the
    round it is declared for.
    """
    dataset = {}
    for survey_round, path in sorted(paths.items()):
        records = load_survey(path)
        strays = [r["participant_id"] for r in records
                  if r["round"] != survey_round]
        if strays:
            raise InvalidConfiguration(
                "dataset '{}' holds records of another round: {}".format(
                    survey_round, ", ".join(strays[:5])))
        dataset[survey_round] = records
    return dataset


def static_subjects(records: Sequence[Record], seed: int,
                    corpus: Sequence[str] = None,
                    settings: Settings = None) -> List[Dict[str, Any]]:
    """
    Pair every record with its persona, the condition of its community in
    its round and its surveyed risk perception. Community intensities are
    aggregated within each round.
    """
    settings = settings if settings is not None else get_loaded_settings()
    personas = enrich(records, seed, corpus)

    by_round = {}
    for record in records:
        by_round.setdefault(record["round"], []).append(record)
    intensities = {
        survey_round: community_intensities(group)
        for survey_round, group in by_round.items()
    }
    contexts = {r: round_context(r, settings) for r in by_round}

    subjects = []
    for record, persona in zip(records, personas):
        survey_round = record["round"]
        tier = record["measure_tier"]
        condition = make_condition(
            contexts[survey_round],
            make_measures(
                tier,
                intensities[survey_round][record["community_id"]],
                settings=settings),
            "{}-{}-{}".format(survey_round, record["community_id"], tier))
        subjects.append({
            "id": record["participant_id"],
            "round": survey_round,
            "tier": tier,
            "record": record,
            "persona": persona,
            "condition": condition,
            "risk": persona["risk_t1"],
            "observed": dict(record["behavior_scores"])
        })
    return subjects


def build_transitions(dataset: Dict[str, List[Record]], seed: int,
                      corpus: Sequence[str] = None,
                      covariates: Sequence[str] = DEFAULT_COVARIATES,
                      settings: Settings = None) -> List[Dict[str, Any]]:
    """
    Match the R2 residents to R1 residents and turn every pair into an
    observed transition.
    """
    r1 = static_subjects(dataset.get("R1") or [], seed, corpus, settings)
    r2 = static_subjects(dataset.get("R2") or [], seed, corpus, settings)
    if not r1 or not r2:
        raise InvalidConfiguration(
            "dynamic strategies require both R1 and R2 records")

    result = propensity_match(
        [s["record"] for s in r2], [s["record"] for s in r1], covariates,
        seed)
    by_id_1 = {s["id"]: s for s in r1}
    by_id_2 = {s["id"]: s for s in r2}

    cases = []
    for t2_id, t1_id in result.pairs:
        after, before = by_id_2[t2_id], by_id_1[t1_id]
        cases.append({
            "id": t2_id,
            "match": t1_id,
            "round": "R2",
            "tier": after["tier"],
            "transition": {
                "persona": after["persona"],
                "condition_t1": before["condition"],
                "condition_t2": after["condition"],
                "risk_t1": dict(before["risk"], round="T1")
            },
            "observed": after["observed"],
            "observed_risk": risk_level_from_survey(
                after["record"]["risk_items"])["level"]
        })
    logger.info("Built {} transitions from matched pairs".format(len(cases)))
    return cases


def select_exemplars(items: Sequence[Any], limit: int, seed: int,
                     scope: str) -> List[Any]:
    """
    At most `limit` items, drawn deterministically from `seed` and `scope`.
    """
    if limit <= 0 or not items:
        return []
    if len(items) <= limit:
        return list(items)
    picked = rng_for(seed, "exemplars", scope).choice(
        len(items), size=limit, replace=False)
    return [items[int(i)] for i in sorted(picked)]


###############################################################################
# Strategy runs
###############################################################################
def run_strategy(spec: StrategySpec, dataset: Dict[str, List[Record]],
                 config: SimConfig = None, backend: Backend = None,
                 run_log: RunLog = None, settings: Settings = None,
                 priors: Dict[str, ValidationReport] = None,
                 corpus: Sequence[str] = None,
                 alpha: float = DEFAULT_ALPHA,
                 method: str = "asymptotic") -> ValidationReport:
    """
    Simulate the test set of a strategy, under the exemplars of its
    reference set, and compare every admitted behavior's simulated and
    observed distributions.
    """
    settings = settings if settings is not None else get_loaded_settings()
    config = dict(config or {})
    config.setdefault("seed", settings.get("seed", 0))
    backend = backend or Backend(settings.get("backend"))
    corpus = corpus if corpus is not None else load_name_corpus(
        settings.get("names"))
    ensure_strategy_is_valid(spec)

    name = spec.get("name", spec["kind"] + "_" + spec["mode"])
    seed = spec.get("seed", config["seed"])
    admitted, excluded = _admission(spec, priors or {}, settings)
    logger.info("Running strategy '{}' over {} behavior(s)".format(
        name, len(admitted)))

    if spec["mode"] == "static":
        items = static_subjects(
            [r for group in sorted(dataset) for r in dataset[group]],
            config["seed"], corpus, settings)
    else:
        items = build_transitions(
            dataset, config["seed"], corpus, settings=settings)

    reference, test = _partition(spec, items, seed)
    if not test:
        raise InvalidConfiguration(
            "strategy '{}' selects no test record".format(name))

    report = {
        "strategy": name,
        "kind": spec["kind"],
        "mode": spec["mode"],
        "alpha": alpha,
        "method": method,
        "seed": seed,
        "reference_n": len(reference),
        "test_n": len(test),
        "rows": [],
        "pass_rate": None,
        "risk": None,
        "gating": {
            "requires": list(spec.get("requires") or []),
            "admitted": admitted,
            "excluded": excluded,
            "degenerate": not admitted
        },
        "profiles": []
    }
    if not admitted:
        logger.warning(
            "Strategy '{}' admits no behavior, nothing to validate".format(
                name))
        return report

    limit = config.get("exemplar_limit", 10)
    exemplars = select_exemplars(reference, limit, seed, name)

    if spec["mode"] == "static":
        profiles = simulate_cohort([
            {
                "persona": s["persona"],
                "condition": s["condition"],
                "risk": s["risk"],
                "exemplars": [_static_exemplar(e) for e in exemplars]
            } for s in test
        ], config, backend, run_log, settings)
    else:
        outcomes = simulate_transitions(
            [c["transition"] for c in test],
            [_static_exemplar_t2(e) for e in exemplars],
            [_dynamic_exemplar(e) for e in exemplars],
            config, backend, run_log, settings)
        profiles = [profile for _, profile in outcomes]
        simulated_risk = [risk["level"] for risk, _ in outcomes]
        observed_risk = [c["observed_risk"] for c in test]
        passed, ks = validate_behavior(
            simulated_risk, observed_risk, alpha, method)
        report["risk"] = _row("risk_perception", passed, ks, simulated_risk,
                              observed_risk, RISK_POINTS)

    for behavior in admitted:
        simulated = [p["behaviors"][behavior]["likert"] for p in profiles]
        observed = [s["observed"][behavior] for s in test]
        passed, ks = validate_behavior(simulated, observed, alpha, method)
        report["rows"].append(_row(
            behavior, passed, ks, simulated, observed, BEHAVIOR_POINTS))

    report["pass_rate"] = pass_rate([r["passed"] for r in report["rows"]])
    report["profiles"] = profile_rows(profiles)
    logger.info("Strategy '{}' passes {}% of {} behavior(s)".format(
        name, report["pass_rate"], len(report["rows"])))
    return report


def run_chain(target: str, specs: Dict[str, StrategySpec],
              dataset: Dict[str, List[Record]], config: SimConfig = None,
              backend: Backend = None, run_log: RunLog = None,
              settings: Settings = None, corpus: Sequence[str] = None,
              alpha: float = DEFAULT_ALPHA,
              method: str = "asymptotic") -> Dict[str, ValidationReport]:
    """
    Run `target` and, first, every strategy it requires. Reports are
    returned by strategy name in the order they ran.
    """
    reports = {}
    for name in strategy_order(target, specs):
        scoped = run_log.scoped(name) if run_log is not None else None
        reports[name] = run_strategy(
            specs[name], dataset, config, backend, scoped, settings,
            reports, corpus, alpha, method)
    return reports


###############################################################################
# Case applications
###############################################################################
def run_grid(spec: GridSpec, dataset: Dict[str, List[Record]],
             config: SimConfig = None, backend: Backend = None,
             run_log: RunLog = None, settings: Settings = None,
             corpus: Sequence[str] = None, survey_round: str = "R2",
             personas: int = None) -> List[Dict[str, Any]]:
    """
    Move the residents of `survey_round` from their surveyed condition to
    every condition of the grid and summarize, per condition, the mean
    simulated intensity of every behavior.
    """
    settings = settings if settings is not None else get_loaded_settings()
    config = dict(config or {})
    config.setdefault("seed", settings.get("seed", 0))
    backend = backend or Backend(settings.get("backend"))

    conditions = make_grid(spec, settings=settings)
    subjects = _round_subjects(
        dataset, survey_round, config["seed"], corpus, settings, personas)
    logger.info("Simulating {} residents under {} conditions".format(
        len(subjects), len(conditions)))

    transitions = [
        _move(subject, condition)
        for condition in conditions for subject in subjects
    ]
    outcomes = simulate_transitions(
        transitions, [], [], config, backend, run_log, settings)

    rows = []
    for i, condition in enumerate(conditions):
        chunk = outcomes[i * len(subjects):(i + 1) * len(subjects)]
        row = {
            "condition": condition["label"],
            "cfr": condition["context"]["cfr"],
            "r0": condition["context"]["r0"],
            "tier": condition["measures"]["tier"],
            "personas": len(chunk),
            "mean_risk_score": _mean([risk["score"] for risk, _ in chunk]),
            "mean_risk_level": _mean([risk["level"] for risk, _ in chunk])
        }
        for behavior in behavior_ids(settings):
            row[behavior] = _mean(
                [p["behaviors"][behavior]["likert"] for _, p in chunk])
        rows.append(row)
    return rows


def run_relaxation(dataset: Dict[str, List[Record]],
                   config: SimConfig = None, backend: Backend = None,
                   run_log: RunLog = None, settings: Settings = None,
                   corpus: Sequence[str] = None, survey_round: str = "R2",
                   personas: int = None) -> Dict[str, Any]:
    """
    Simulate the policy relaxation: residents of `survey_round` move from
    their surveyed condition to the relaxation condition. Mean intensities
    are reported next to the observed R1 and R2 ones, along with the themes
    of the decision rationales of every behavior.
    """
    settings = settings if settings is not None else get_loaded_settings()
    config = dict(config or {})
    config.setdefault("seed", settings.get("seed", 0))
    backend = backend or Backend(settings.get("backend"))

    condition = policy_relaxation_condition(settings)
    subjects = _round_subjects(
        dataset, survey_round, config["seed"], corpus, settings, personas)
    outcomes = simulate_transitions(
        [_move(s, condition) for s in subjects], [], [], config, backend,
        run_log, settings)
    profiles = [p for _, p in outcomes]
    lexicon = default_lexicon(settings)

    summary, themes = [], {}
    for behavior in behavior_ids(settings):
        row = {"behavior": behavior}
        for observed_round in ("R1", "R2"):
            records = dataset.get(observed_round) or []
            row["{}_mean".format(observed_round.lower())] = _mean(
                [r["behavior_scores"][behavior] for r in records])
        row["r3_mean"] = _mean(
            [p["behaviors"][behavior]["likert"] for p in profiles])
        summary.append(row)
        themes[behavior] = tag_rationales(
            [text for p in profiles
             for text in p["behaviors"][behavior]["rationales"]], lexicon)

    risk = {"r3_mean_level": _mean([r["level"] for r, _ in outcomes])}
    for observed_round in ("R1", "R2"):
        records = dataset.get(observed_round) or []
        risk["{}_mean_level".format(observed_round.lower())] = _mean(
            [risk_level_from_survey(r["risk_items"])["level"]
             for r in records])

    return {
        "condition": condition,
        "summary": summary,
        "risk": risk,
        "themes": themes,
        "profiles": profile_rows(profiles)
    }


def profile_rows(profiles: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """
    Flatten behavior profiles into one row per persona and behavior.
    """
    rows = []
    for profile in profiles:
        for behavior, values in profile["behaviors"].items():
            rows.append({
                "persona": profile["persona"],
                "condition": profile["condition"],
                "risk_level": profile["risk"]["level"],
                "behavior": behavior,
                "mean_probability": values["mean_probability"],
                "likert": values["likert"]
            })
    return rows


###############################################################################
# Internal functions
###############################################################################
def _fraction(value: Any) -> Fraction:
    try:
        fraction = Fraction(str(value)) if isinstance(value, str) \
            else Fraction(value).limit_denominator(10 ** 6)
    except (ValueError, TypeError, ZeroDivisionError):
        raise InvalidConfiguration(
            "split fraction '{}' is not a number".format(value))
    if not 0 < fraction < 1:
        raise InvalidConfiguration(
            "split fraction must be within (0, 1), got {}".format(value))
    return fraction


def _admission(spec: StrategySpec, priors: Dict[str, ValidationReport],
               settings: Settings) -> Tuple[List[str], List[str]]:
    catalog = behavior_ids(settings)
    admitted = set(catalog)
    for required in spec.get("requires") or []:
        if required not in priors:
            raise InvalidStrategy(
                "strategy '{}' requires '{}' to run first".format(
                    spec.get("name"), required))
        admitted &= set(gate(priors[required], spec["mode"]))
    return ([b for b in catalog if b in admitted],
            [b for b in catalog if b not in admitted])


def _selected(item: Dict[str, Any], selector: Dict[str, Any]) -> bool:
    survey_round = selector.get("round")
    if survey_round and item["round"] != survey_round:
        return False
    tiers = selector.get("tiers")
    return not tiers or item["tier"] in tiers


def _partition(spec: StrategySpec, items: List[Dict[str, Any]],
               seed: int) -> Tuple[List[Any], List[Any]]:
    test = [i for i in items if _selected(i, spec["test"])]
    if spec["kind"] == "zero_shot":
        return [], test
    if spec["kind"] == "few_shot":
        pool = [i for i in test if _selected(i, spec["reference"])]
        return split_reference(
            pool, spec.get("fraction", DEFAULT_FRACTION), seed)
    reference = [i for i in items if _selected(i, spec["reference"])]
    return reference, test


def _static_exemplar(subject: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "persona": subject["persona"],
        "condition": subject["condition"],
        "risk": subject["risk"],
        "observed": subject["observed"]
    }


def _static_exemplar_t2(case: Dict[str, Any]) -> Dict[str, Any]:
    transition = case["transition"]
    return {
        "persona": transition["persona"],
        "condition": transition["condition_t2"],
        "risk": {"score": None, "level": case["observed_risk"],
                 "round": "T2"},
        "observed": case["observed"]
    }


def _dynamic_exemplar(case: Dict[str, Any]) -> Dict[str, Any]:
    transition = case["transition"]
    return {
        "persona": transition["persona"],
        "condition_t1": transition["condition_t1"],
        "condition_t2": transition["condition_t2"],
        "risk_t1": transition["risk_t1"],
        "observed_risk": case["observed_risk"],
        "observed": case["observed"]
    }


def _round_subjects(dataset: Dict[str, List[Record]], survey_round: str,
                    seed: int, corpus: Sequence[str], settings: Settings,
                    personas: int = None) -> List[Dict[str, Any]]:
    records = dataset.get(survey_round) or []
    if not records:
        raise InvalidConfiguration(
            "the dataset holds no {} record".format(survey_round))
    subjects = static_subjects(
        records, seed,
        corpus if corpus is not None else load_name_corpus(
            settings.get("names")),
        settings)
    return subjects[:personas] if personas else subjects


def _move(subject: Dict[str, Any],
          condition: Dict[str, Any]) -> Dict[str, Any]:
    return {
        "persona": subject["persona"],
        "condition_t1": subject["condition"],
        "condition_t2": condition,
        "risk_t1": dict(subject["risk"], round="T1")
    }


def _histogram(values: Sequence[int], points: int) -> List[int]:
    counts = np.bincount(np.asarray(values, dtype=int), minlength=points + 1)
    return [int(c) for c in counts[1:points + 1]]


def _row(behavior: str, passed: bool, ks: Any, simulated: Sequence[int],
         observed: Sequence[int], points: int) -> Dict[str, Any]:
    return {
        "behavior": behavior,
        "statistic": ks.statistic,
        "p_value": ks.p_value,
        "n_simulated": ks.n1,
        "n_observed": ks.n2,
        "passed": passed,
        "simulated_mean": _mean(simulated),
        "observed_mean": _mean(observed),
        "histogram": {
            "simulated": _histogram(simulated, points),
            "observed": _histogram(observed, points)
        }
    }


def _mean(values: Sequence[float]) -> float:
    if not values:
        return None
    return math.fsum(values) / len(values)
