# -*- coding: utf-8 -*-
"""
Shared vocabulary of the simulator: the prevention behavior catalog, the
Likert scales behaviors and risk perceptions are measured on, and the
epidemic conditions (pandemic context plus community control measures)
personas are placed in.
"""
from collections import namedtuple
import math
from numbers import Number
from typing import Any, Dict, List, Sequence

from logzero import logger

from ipbsim.exceptions import DomainError, InvalidConfiguration
from ipbsim.settings import get_loaded_settings
from ipbsim.types import ControlMeasures, EpidemicCondition, \
    PandemicContext, Settings

__all__ = ["BehaviorSpec", "behavior_catalog", "behavior_ids",
           "lookup_behavior", "discretize", "likert_midpoint",
           "make_context", "make_measures", "make_condition",
           "ensure_condition_is_valid", "intervention_labels", "TIERS",
           "tier_rank", "tier_label", "CATEGORIES", "BEHAVIOR_POINTS",
           "RISK_POINTS", "BEHAVIOR_ANCHORS", "RISK_ANCHORS"]

BEHAVIOR_POINTS = 5
RISK_POINTS = 6

BEHAVIOR_ANCHORS = {1: "Never adopted", 5: "Always adopted"}
RISK_ANCHORS = {1: "unclear/unconcerned", 6: "extremely concerned"}

CATEGORIES = (
    "respiratory protection",
    "personal hygiene",
    "disinfection (routine)",
    "disinfection (situational)",
    "food safety",
    "environmental maintenance",
)

# ordered from the loosest to the strictest community regime
TIERS = ("NoPC", "RegularPC", "SelfHealthMonitoring", "Isolation")
TIER_LABELS = {
    "NoPC": "No Prevention & Control",
    "RegularPC": "Regular Prevention & Control",
    "SelfHealthMonitoring": "Self-Health Monitoring",
    "Isolation": "Isolation",
}
# community enforcement score used when no survey aggregate is available
TIER_DEFAULT_INTENSITY = {
    "NoPC": 1.0,
    "RegularPC": 2.5,
    "SelfHealthMonitoring": 3.5,
    "Isolation": 4.5,
}

STATUSES = ("Active", "Cancelled")

BehaviorSpec = namedtuple("BehaviorSpec", ["id", "label", "category"])

_CATALOG = (
    BehaviorSpec("mask_green_space",
                 "mask wearing in community green spaces",
                 "respiratory protection"),
    BehaviorSpec("mask_elevator", "mask wearing in elevators",
                 "respiratory protection"),
    BehaviorSpec("hand_washing", "hand washing after returning home",
                 "personal hygiene"),
    BehaviorSpec("toilet_lid", "closing toilet lids when flushing",
                 "personal hygiene"),
    BehaviorSpec("drain_disinfection",
                 "regularly disinfecting drain water seals",
                 "disinfection (routine)"),
    BehaviorSpec("home_disinfection",
                 "regularly disinfecting home environment",
                 "disinfection (routine)"),
    BehaviorSpec("item_disinfection", "disinfecting items carried outside",
                 "disinfection (situational)"),
    BehaviorSpec("package_disinfection",
                 "disinfecting online purchase packaging",
                 "disinfection (situational)"),
    BehaviorSpec("serving_utensils", "using separate serving utensils",
                 "food safety"),
    BehaviorSpec("frozen_food_avoidance", "avoiding frozen food purchases",
                 "food safety"),
    BehaviorSpec("drain_seal_maintenance", "maintaining drain water seals",
                 "environmental maintenance"),
)

# The first four labels are the interventions named in public reporting of
# the Chinese community regime, the remaining five are placeholders until the
# full instrument is available. All of them may be relabelled from settings.
_INTERVENTIONS = (
    ("nucleic_acid_testing", "nucleic acid testing"),
    ("venue_code_scanning", "venue code scanning"),
    ("capacity_restrictions", "public-space capacity restrictions"),
    ("community_lockdown", "community lockdown protocols"),
    ("entry_registration", "community entry registration"),
    ("temperature_checks", "temperature checks at community gates"),
    ("delivery_restrictions", "contactless delivery requirements"),
    ("gathering_restrictions", "restrictions on gatherings"),
    ("home_quarantine", "home quarantine of close contacts"),
)

_TIER_ACTIVE = {
    "NoPC": (),
    "RegularPC": ("venue_code_scanning", "entry_registration",
                  "temperature_checks"),
    "SelfHealthMonitoring": ("nucleic_acid_testing", "venue_code_scanning",
                             "entry_registration", "temperature_checks",
                             "delivery_restrictions",
                             "gathering_restrictions"),
    "Isolation": tuple(i for i, _ in _INTERVENTIONS),
}


def behavior_catalog(settings: Settings = None) -> List[BehaviorSpec]:
    """
    Return the eleven prevention behaviors in their canonical order. Every
    prompt, response block and report follows this order.

    Labels may be overridden through the `catalog` section of the settings,
    a mapping of behavior id to label. Ids and categories are fixed.
    """
    settings = settings if settings is not None else get_loaded_settings()
    overrides = (settings or {}).get("catalog") or {}
    if not overrides:
        return list(_CATALOG)

    unknown = set(overrides) - {b.id for b in _CATALOG}
    if unknown:
        raise InvalidConfiguration(
            "catalog overrides unknown behaviors: {}".format(
                ", ".join(sorted(unknown))))

    return [b._replace(label=overrides.get(b.id, b.label)) for b in _CATALOG]


def behavior_ids(settings: Settings = None) -> List[str]:
    return [b.id for b in behavior_catalog(settings)]


def lookup_behavior(key: str, settings: Settings = None) -> BehaviorSpec:
    """
    Find a behavior by its id or by its label, case-insensitively.
    """
    needle = (key or "").strip().lower()
    for behavior in behavior_catalog(settings):
        if needle in (behavior.id, behavior.label.lower()):
            return behavior
    raise DomainError("unknown behavior '{}'".format(key))


def discretize(p: float, points: int) -> int:
    """
    Map a probability onto a Likert scale of `points` equidistant bins.

    Bin `k` covers `[(k - 1) / points, k / points)`, the top bin is closed at
    1.0. Comparisons are done against the bin edges themselves so values
    sitting exactly on an edge always land in the upper bin.
    """
    if points not in (BEHAVIOR_POINTS, RISK_POINTS):
        raise DomainError(
            "scale must have 5 or 6 points, not {}".format(points))

    if isinstance(p, bool) or not isinstance(p, Number) or math.isnan(p):
        raise DomainError("probability must be a number, got {}".format(p))

    if p < 0.0 or p > 1.0:
        raise DomainError(
            "probability {} is outside of [0, 1]".format(p))

    k = min(int(math.floor(p * points)), points - 1)
    while k < points - 1 and p >= (k + 1) / points:
        k += 1
    while k > 0 and p < k / points:
        k -= 1
    return k + 1


def likert_midpoint(level: float, points: int) -> float:
    """
    Probability at the middle of the bin of a Likert `level`. Fractional
    levels, such as cohort means, are accepted.
    """
    return (level - 0.5) / points


def tier_rank(tier: str) -> int:
    try:
        return TIERS.index(tier)
    except ValueError:
        raise DomainError(
            "'{}' is not a control tier, expected one of: {}".format(
                tier, ", ".join(TIERS)))


def tier_label(tier: str) -> str:
    tier_rank(tier)
    return TIER_LABELS[tier]


def intervention_labels(settings: Settings = None) -> Dict[str, str]:
    """
    The nine intervention slots as an ordered mapping of slot id to label,
    honoring the `interventions` overrides from the settings.
    """
    settings = settings if settings is not None else get_loaded_settings()
    overrides = (settings or {}).get("interventions") or {}
    known = {i for i, _ in _INTERVENTIONS}
    unknown = set(overrides) - known
    if unknown:
        raise InvalidConfiguration(
            "interventions overrides unknown slots: {}".format(
                ", ".join(sorted(unknown))))
    return {i: overrides.get(i, label) for i, label in _INTERVENTIONS}


def make_context(r0: float, cfr: float, pathways: Sequence[str] = None,
                 confirmed: int = None, fatalities: int = None,
                 descriptors: Sequence[str] = None,
                 policy_notes: str = "") -> PandemicContext:
    """
    Build a pandemic context. The epidemic burden is numeric when
    `confirmed`/`fatalities` are given and qualitative when `descriptors`
    are, never both.
    """
    if descriptors:
        burden = {"kind": "qualitative", "descriptors": list(descriptors)}
    else:
        burden = {
            "kind": "numeric",
            "confirmed": confirmed or 0,
            "fatalities": fatalities or 0
        }

    context = {
        "r0": float(r0),
        "cfr": float(cfr),
        "pathways": list(pathways or ["respiratory droplets",
                                      "contact with contaminated surfaces"]),
        "burden": burden,
        "policy_notes": policy_notes or ""
    }
    ensure_context_is_valid(context)
    return context


def make_measures(tier: str, intensity: float = None,
                  interventions: Dict[str, str] = None,
                  settings: Settings = None) -> ControlMeasures:
    """
    Build the community control measures for a tier. Unless explicitly
    given, intervention statuses derive from the tier: nothing is active
    without prevention and control, everything is under isolation.
    """
    tier_rank(tier)
    slots = intervention_labels(settings)
    statuses = {
        i: "Active" if i in _TIER_ACTIVE[tier] else "Cancelled"
        for i in slots
    }
    if interventions:
        statuses.update(interventions)

    measures = {
        "tier": tier,
        "interventions": statuses,
        "intensity": float(TIER_DEFAULT_INTENSITY[tier]
                           if intensity is None else intensity)
    }
    ensure_measures_are_valid(measures)
    return measures


def make_condition(context: PandemicContext, measures: ControlMeasures,
                   label: str) -> EpidemicCondition:
    condition = {"label": label, "context": context, "measures": measures}
    ensure_condition_is_valid(condition)
    return condition


def ensure_context_is_valid(context: PandemicContext):
    r0 = context.get("r0")
    if not isinstance(r0, Number) or r0 <= 0:
        raise DomainError("R0 must be a positive number, got {}".format(r0))

    cfr = context.get("cfr")
    if not isinstance(cfr, Number) or not 0 <= cfr < 1:
        raise DomainError(
            "CFR must be a fraction in [0, 1), got {}".format(cfr))

    burden = context.get("burden") or {}
    kind = burden.get("kind")
    if kind == "numeric":
        if burden.get("descriptors"):
            raise DomainError(
                "epidemic burden cannot be both numeric and qualitative")
        for key in ("confirmed", "fatalities"):
            if not isinstance(burden.get(key), int) or burden[key] < 0:
                raise DomainError(
                    "numeric burden requires a non-negative '{}'".format(key))
    elif kind == "qualitative":
        if "confirmed" in burden or "fatalities" in burden:
            raise DomainError(
                "epidemic burden cannot be both numeric and qualitative")
        if not burden.get("descriptors"):
            raise DomainError("qualitative burden requires descriptors")
    else:
        raise DomainError(
            "epidemic burden must be 'numeric' or 'qualitative'")


def ensure_measures_are_valid(measures: ControlMeasures):
    tier = measures.get("tier")
    tier_rank(tier)

    interventions = measures.get("interventions") or {}
    if len(interventions) != len(_INTERVENTIONS):
        raise DomainError(
            "control measures must declare exactly {} interventions, "
            "got {}".format(len(_INTERVENTIONS), len(interventions)))

    for slot, status in interventions.items():
        if status not in STATUSES:
            raise DomainError(
                "intervention '{}' has an invalid status '{}'".format(
                    slot, status))

    if tier == "NoPC" and any(s == "Active" for s in interventions.values()):
        raise DomainError(
            "no intervention can be active without prevention and control")

    intensity = measures.get("intensity")
    if not isinstance(intensity, Number):
        raise DomainError("control intensity must be a number")


def ensure_condition_is_valid(condition: EpidemicCondition):
    """
    Validate an epidemic condition and raise :exc:`DomainError` whenever one
    of its constituents breaks its invariants.
    """
    if not condition:
        raise DomainError("an empty condition is not a condition")

    if not condition.get("label"):
        raise DomainError("a condition requires a label")

    ensure_context_is_valid(condition.get("context") or {})
    ensure_measures_are_valid(condition.get("measures") or {})
    logger.debug("Condition '{}' looks valid".format(condition["label"]))


def describe_change(before: Any, after: Any) -> str:
    if before == after:
        return "no change"
    return "{} -> {}".format(before, after)
