# -*- coding: utf-8 -*-
"""
Epidemic conditions the experiments place personas in: the pandemic context
of each survey round, the scenario grid and the policy-relaxation condition.
"""
from itertools import product
from numbers import Number
from typing import Any, Dict, List

from logzero import logger

from ipbsim.domain import TIERS, intervention_labels, make_condition, \
    make_context, make_measures
from ipbsim.exceptions import InvalidConfiguration
from ipbsim.settings import get_loaded_settings
from ipbsim.types import EpidemicCondition, GridSpec, PandemicContext, \
    Settings

__all__ = ["round_context", "make_grid", "grid_size", "default_grid",
           "ensure_grid_is_valid", "policy_relaxation_condition",
           "grid_label", "DEFAULT_ROUNDS"]

# Illustrative values for the two surveyed waves, both can be replaced from
# the `rounds` section of the settings.
DEFAULT_ROUNDS = {
    "R1": {
        "r0": 2.2,
        "cfr": 0.02,
        "pathways": ["respiratory droplets",
                     "contact with contaminated surfaces",
                     "imported cold-chain goods"],
        "confirmed": 1,
        "fatalities": 0,
        "policy_notes": "ancestral strain, sporadic local clusters under "
                        "regular prevention and control"
    },
    "R2": {
        "r0": 5.0,
        "cfr": 0.01,
        "pathways": ["respiratory droplets", "aerosols in enclosed spaces",
                     "contact with contaminated surfaces"],
        "confirmed": 40,
        "fatalities": 0,
        "policy_notes": "Delta variant wave, communities placed under "
                        "isolation or self-health monitoring when exposed"
    }
}

DEFAULT_GRID = {
    "cfr_levels": [0.001, 0.005, 0.015, 0.03, 0.05],
    "r0_levels": [0.8, 2.0, 3.0, 5.0, 7.0, 10.0],
    "tiers": list(TIERS)
}

RELAXATION_POLICY_NOTES = (
    "Since December 7, 2022 the optimized prevention and control measures "
    "apply: no more mass nucleic acid testing or venue code checks, "
    "infected people with mild symptoms recover at home, risk areas and "
    "community lockdowns are lifted and cross-region travel is unrestricted. "
    "Residents are responsible for their own health.")


def round_context(survey_round: str,
                  settings: Settings = None) -> PandemicContext:
    """
    Pandemic context of a survey round, the `rounds` section of the settings
    overriding the defaults key by key.
    """
    settings = settings if settings is not None else get_loaded_settings()
    overrides = ((settings or {}).get("rounds") or {}).get(survey_round) or {}
    if survey_round not in DEFAULT_ROUNDS and not overrides:
        raise InvalidConfiguration(
            "no pandemic context is defined for round '{}'".format(
                survey_round))

    values = dict(DEFAULT_ROUNDS.get(survey_round, {}))
    values.update(overrides)
    return make_context(
        values["r0"], values["cfr"], values.get("pathways"),
        confirmed=values.get("confirmed"),
        fatalities=values.get("fatalities"),
        descriptors=values.get("descriptors"),
        policy_notes=values.get("policy_notes"))


def default_grid() -> GridSpec:
    return {k: list(v) for k, v in DEFAULT_GRID.items()}


def ensure_grid_is_valid(spec: GridSpec):
    for key in ("cfr_levels", "r0_levels", "tiers"):
        levels = spec.get(key)
        if not levels:
            raise InvalidConfiguration(
                "grid '{}' must list at least one level".format(key))
        if len(set(levels)) != len(levels):
            raise InvalidConfiguration(
                "grid '{}' lists duplicate levels".format(key))

    for cfr in spec["cfr_levels"]:
        if not isinstance(cfr, Number) or not 0 <= cfr < 1:
            raise InvalidConfiguration(
                "grid CFR levels are fractions in [0, 1), got {}".format(cfr))
    for r0 in spec["r0_levels"]:
        if not isinstance(r0, Number) or r0 <= 0:
            raise InvalidConfiguration(
                "grid R0 levels must be positive, got {}".format(r0))
    for tier in spec["tiers"]:
        if tier not in TIERS:
            raise InvalidConfiguration(
                "grid tier '{}' is not a control tier".format(tier))


def grid_size(spec: GridSpec) -> int:
    return len(spec["cfr_levels"]) * len(spec["r0_levels"]) * \
        len(spec["tiers"])


def grid_label(cfr: float, r0: float, tier: str) -> str:
    return "cfr{:g}_r0{:g}_{}".format(cfr, r0, tier)


def make_grid(spec: GridSpec = None, context: Dict[str, Any] = None,
              settings: Settings = None) -> List[EpidemicCondition]:
    """
    Every combination of CFR level, R0 level and control tier, ordered by
    CFR first, then R0, then tier. The rest of the pandemic context comes
    from `context`, the R2 round's context by default.
    """
    settings = settings if settings is not None else get_loaded_settings()
    spec = spec if spec is not None else default_grid()
    ensure_grid_is_valid(spec)
    base = context or round_context("R2", settings)

    conditions = []
    for cfr, r0, tier in product(
            spec["cfr_levels"], spec["r0_levels"], spec["tiers"]):
        burden = base["burden"]
        conditions.append(make_condition(
            make_context(
                r0, cfr, base["pathways"],
                confirmed=burden.get("confirmed"),
                fatalities=burden.get("fatalities"),
                descriptors=burden.get("descriptors"),
                policy_notes=base.get("policy_notes")),
            make_measures(tier, settings=settings),
            grid_label(cfr, r0, tier)))

    logger.debug("Scenario grid holds {} conditions".format(len(conditions)))
    return conditions


def policy_relaxation_condition(
        settings: Settings = None) -> EpidemicCondition:
    """
    The December 2022 policy relaxation: a highly transmissible, low
    lethality variant, no official case counts anymore and every community
    intervention cancelled.
    """
    context = make_context(
        10.0, 0.0005,
        ["respiratory droplets", "aerosols in enclosed spaces",
         "contact with contaminated surfaces"],
        descriptors=["rapid widespread infection", "surging case numbers"],
        policy_notes=RELAXATION_POLICY_NOTES)
    measures = make_measures(
        "NoPC", interventions={
            i: "Cancelled" for i in intervention_labels(settings)
        }, settings=settings)
    return make_condition(context, measures, "R3-policy-relaxation")
