# -*- coding: utf-8 -*-
"""
Prompt construction and response parsing.

The static prompt speaks in the first person through five sections: basic
information, pandemic context, community control measures, environmental
risk perception and the task. The dynamic prompt has four: basic
information, shift of pandemic context, community control measure changes
and the task. Reference examples, when any, are rendered right before the
task section.

Models are asked to answer with a single fenced block labelled
`static-response` or `dynamic-response`, the only part of the answer the
parsers read.
"""
from functools import lru_cache
import io
import math
import os.path
import re
from typing import Any, Dict, List, Sequence

from logzero import logger

from ipbsim import substitute
from ipbsim.domain import BEHAVIOR_ANCHORS, BEHAVIOR_POINTS, RISK_ANCHORS, \
    RISK_POINTS, behavior_catalog, describe_change, intervention_labels, \
    tier_label
from ipbsim.exceptions import DomainError, InvalidConfiguration, \
    ResponseParseError
from ipbsim.settings import get_loaded_settings
from ipbsim.types import DynamicResponse, EpidemicCondition, Exemplar, \
    Persona, RiskPerception, Settings, StaticResponse

__all__ = ["build_static_prompt", "build_dynamic_prompt",
           "parse_static_response", "parse_dynamic_response",
           "render_static_response", "render_dynamic_response",
           "format_reminder", "format_number", "format_percent",
           "STATIC_MARKER", "DYNAMIC_MARKER"]

STATIC_MARKER = "static-response"
DYNAMIC_MARKER = "dynamic-response"
TEMPLATES_DIR = os.path.join(os.path.dirname(__file__), "templates")

STATIC_BLOCK = re.compile(
    r"```" + STATIC_MARKER + r"[ \t]*\r?\n(.*?)```", re.DOTALL)
DYNAMIC_BLOCK = re.compile(
    r"```" + DYNAMIC_MARKER + r"[ \t]*\r?\n(.*?)```", re.DOTALL)
STATIC_LINE = re.compile(
    r"^\s*([A-Za-z0-9_]+)\s*:\s*([^|]*?)\s*\|\s*(.*?)\s*$")
FIELD_LINE = re.compile(r"^\s*([A-Za-z_]+)\s*:\s*(.*?)\s*$")
DYNAMIC_FIELDS = ("risk_score", "rationale")


###############################################################################
# Templates
###############################################################################
def template_path(kind: str, settings: Settings = None) -> str:
    settings = settings if settings is not None else get_loaded_settings()
    templates = (settings or {}).get("templates") or {}
    return templates.get(kind) or os.path.join(
        TEMPLATES_DIR, "{}.txt".format(kind))


@lru_cache(maxsize=16)
def read_template(path: str) -> str:
    if not os.path.exists(path):
        raise InvalidConfiguration(
            'Prompt template "{}" does not exist.'.format(path))
    with io.open(path, encoding="utf-8") as f:
        return f.read()


###############################################################################
# Formatting helpers
###############################################################################
def format_number(value: float) -> str:
    return "{:g}".format(value)


def format_percent(fraction: float) -> str:
    return "{:g}%".format(round(fraction * 100, 6))


def render_basic_information(persona: Persona) -> str:
    return (
        "I am {name}, a {age}-year-old {gender} living in community "
        "{community}.\n"
        "My education level is: {education}.\n"
        "My occupation is: {occupation}.\n"
        "I answer every question as myself, from my own point of "
        "view.".format(
            name=persona["virtual_name"], age=persona["age"],
            gender=persona["gender"], community=persona["community_id"],
            education=persona["education"],
            occupation=persona["occupation"]))


def render_burden(burden: Dict[str, Any]) -> List[str]:
    if burden["kind"] == "qualitative":
        return ["Epidemic situation: {}".format(
            "; ".join(burden["descriptors"]))]
    return [
        "Confirmed cases: {}".format(burden["confirmed"]),
        "Fatalities: {}".format(burden["fatalities"])
    ]


def render_pandemic_context(condition: EpidemicCondition) -> str:
    context = condition["context"]
    lines = [
        "Basic reproduction number (R0): {}".format(
            format_number(context["r0"])),
        "Case fatality rate (CFR): {}".format(format_percent(context["cfr"])),
        "Transmission pathways: {}".format("; ".join(context["pathways"]))
    ]
    lines.extend(render_burden(context["burden"]))
    if context.get("policy_notes"):
        lines.append("Policy notes: {}".format(context["policy_notes"]))
    return "\n".join(lines)


def render_control_measures(condition: EpidemicCondition,
                            settings: Settings = None) -> str:
    measures = condition["measures"]
    labels = intervention_labels(settings)
    lines = [
        "Community control tier: {}".format(tier_label(measures["tier"])),
        "Enforcement intensity in my community: {:.2f} on a 1-5 "
        "scale".format(measures["intensity"]),
        "Interventions:"
    ]
    for slot, label in labels.items():
        lines.append("- {}: {}".format(label, measures["interventions"][slot]))
    return "\n".join(lines)


def render_risk_perception(risk: RiskPerception) -> str:
    text = (
        "My environmental risk perception level is {level} on a {points}-"
        "point scale (1 = {low}, {points} = {high}).".format(
            level=risk["level"], points=RISK_POINTS,
            low=RISK_ANCHORS[1], high=RISK_ANCHORS[RISK_POINTS]))
    return text


def render_observed(observed: Dict[str, int], settings: Settings) -> str:
    return ", ".join(
        "{}={}".format(b.id, observed[b.id])
        for b in behavior_catalog(settings) if b.id in observed)


def render_resident(persona: Persona) -> str:
    return "{}-year-old {}, {}, {}".format(
        persona["age"], persona["gender"], persona["education"],
        persona["occupation"])


def render_static_exemplars(exemplars: Sequence[Exemplar],
                            settings: Settings = None) -> str:
    if not exemplars:
        return ""

    blocks = ["", "## Reference Examples"]
    for k, exemplar in enumerate(exemplars, start=1):
        condition = exemplar["condition"]
        blocks.append(
            "### Reference example {k}\n"
            "Resident: {resident}\n"
            "Situation: R0 {r0}, CFR {cfr}, control tier {tier}, risk "
            "perception level {risk}\n"
            "Observed behavior (1 = {low}, 5 = {high}): {observed}".format(
                k=k, resident=render_resident(exemplar["persona"]),
                r0=format_number(condition["context"]["r0"]),
                cfr=format_percent(condition["context"]["cfr"]),
                tier=tier_label(condition["measures"]["tier"]),
                risk=exemplar["risk"]["level"],
                low=BEHAVIOR_ANCHORS[1],
                high=BEHAVIOR_ANCHORS[BEHAVIOR_POINTS],
                observed=render_observed(exemplar["observed"], settings)))
    return "\n".join(blocks) + "\n"


def render_dynamic_exemplars(exemplars: Sequence[Exemplar],
                             settings: Settings = None) -> str:
    if not exemplars:
        return ""

    blocks = ["", "## Reference Examples"]
    for k, exemplar in enumerate(exemplars, start=1):
        before = exemplar["condition_t1"]
        after = exemplar["condition_t2"]
        lines = [
            "### Reference example {}".format(k),
            "Resident: {}".format(render_resident(exemplar["persona"])),
            "Shift: R0 {}, CFR {}, control tier {}".format(
                describe_change(format_number(before["context"]["r0"]),
                                format_number(after["context"]["r0"])),
                describe_change(format_percent(before["context"]["cfr"]),
                                format_percent(after["context"]["cfr"])),
                describe_change(tier_label(before["measures"]["tier"]),
                                tier_label(after["measures"]["tier"]))),
            "Risk perception level at T1: {}".format(
                exemplar["risk_t1"]["level"]),
            "Observed risk perception level at T2: {}".format(
                exemplar["observed_risk"])
        ]
        if exemplar.get("observed"):
            lines.append("Observed behavior at T2: {}".format(
                render_observed(exemplar["observed"], settings)))
        blocks.append("\n".join(lines))
    return "\n".join(blocks) + "\n"


def render_static_task(settings: Settings = None) -> str:
    catalog = behavior_catalog(settings)
    lines = [
        "Considering who I am, the pandemic context, my community's control "
        "measures and my risk perception, estimate the probability (a number "
        "between 0 and 1) that I carry out each of the following prevention "
        "behaviors, with a one-sentence rationale for each:"
    ]
    lines.extend("- {}: {}".format(b.id, b.label) for b in catalog)
    lines.append(
        "Answer with exactly one fenced block labelled {m}, one line per "
        "behavior in the order above, formatted as "
        "`<behavior id>: <probability> | <rationale>`:".format(
            m=STATIC_MARKER))
    lines.append("```" + STATIC_MARKER)
    lines.extend(
        "{}: <probability> | <rationale>".format(b.id) for b in catalog)
    lines.append("```")
    return "\n".join(lines)


def render_dynamic_task(risk_t1: RiskPerception) -> str:
    return "\n".join([
        "At T1 my environmental risk perception level was {level} on a "
        "{points}-point scale (1 = {low}, {points} = {high}).".format(
            level=risk_t1["level"], points=RISK_POINTS,
            low=RISK_ANCHORS[1], high=RISK_ANCHORS[RISK_POINTS]),
        "Considering the changes above, estimate my environmental risk "
        "perception at T2 as a continuous score between 0 (not concerned at "
        "all) and 1 (extremely concerned), and explain why.",
        "Answer with exactly one fenced block labelled {}:".format(
            DYNAMIC_MARKER),
        "```" + DYNAMIC_MARKER,
        "risk_score: <score>",
        "rationale: <rationale>",
        "```"
    ])


def render_pandemic_shift(before: EpidemicCondition,
                          after: EpidemicCondition) -> str:
    b, a = before["context"], after["context"]
    lines = [
        "Basic reproduction number (R0): {}".format(
            _shift(format_number(b["r0"]), format_number(a["r0"]))),
        "Case fatality rate (CFR): {}".format(
            _shift(format_percent(b["cfr"]), format_percent(a["cfr"]))),
        "Transmission pathways: {}".format(
            _shift("; ".join(b["pathways"]), "; ".join(a["pathways"]))),
        "Epidemic burden: {}".format(
            _shift(" / ".join(render_burden(b["burden"])),
                   " / ".join(render_burden(a["burden"])))),
        "Policy notes: {}".format(
            _shift(b.get("policy_notes") or "none",
                   a.get("policy_notes") or "none"))
    ]
    return "\n".join(lines)


def render_control_changes(before: EpidemicCondition,
                           after: EpidemicCondition,
                           settings: Settings = None) -> str:
    b, a = before["measures"], after["measures"]
    lines = [
        "Community control tier: {}".format(
            _shift(tier_label(b["tier"]), tier_label(a["tier"]))),
        "Enforcement intensity in my community: {}".format(
            _shift("{:.2f}".format(b["intensity"]),
                   "{:.2f}".format(a["intensity"]))),
        "Interventions:"
    ]
    for slot, label in intervention_labels(settings).items():
        lines.append("- {}: {}".format(label, _shift(
            b["interventions"][slot], a["interventions"][slot])))
    return "\n".join(lines)


def _shift(before: str, after: str) -> str:
    if before == after:
        return "no change ({})".format(before)
    return describe_change(before, after)


###############################################################################
# Builders
###############################################################################
def ensure_exemplar_scores_are_valid(exemplars: Sequence[Exemplar]):
    for exemplar in exemplars or []:
        for behavior, score in (exemplar.get("observed") or {}).items():
            if isinstance(score, bool) or not isinstance(score, int) or \
                    not 1 <= score <= BEHAVIOR_POINTS:
                raise DomainError(
                    "exemplar score for '{}' must be within 1..{}, "
                    "got {}".format(behavior, BEHAVIOR_POINTS, score))


def build_static_prompt(inputs: Dict[str, Any],
                        settings: Settings = None) -> str:
    """
    Build the five-section static prompt from a mapping holding the
    `persona`, its `condition`, its `risk` perception and the (possibly
    empty) list of reference `exemplars`.
    """
    settings = settings if settings is not None else get_loaded_settings()
    exemplars = inputs.get("exemplars") or []
    ensure_exemplar_scores_are_valid(exemplars)

    template = read_template(template_path("static", settings))
    return substitute(template, {
        "basic_information": render_basic_information(inputs["persona"]),
        "pandemic_context": render_pandemic_context(inputs["condition"]),
        "control_measures": render_control_measures(
            inputs["condition"], settings),
        "risk_perception": render_risk_perception(inputs["risk"]),
        "exemplars": render_static_exemplars(exemplars, settings),
        "task": render_static_task(settings)
    })


def build_dynamic_prompt(inputs: Dict[str, Any],
                         settings: Settings = None) -> str:
    """
    Build the four-section dynamic prompt from a mapping holding the
    `persona`, the `shift` as a `(condition_t1, condition_t2)` pair, the
    `risk_t1` perception and the list of reference `exemplars`.
    """
    settings = settings if settings is not None else get_loaded_settings()
    risk_t1 = inputs["risk_t1"]
    if risk_t1.get("round") != "T1":
        raise DomainError("the starting risk perception must be tagged T1")

    exemplars = inputs.get("exemplars") or []
    ensure_exemplar_scores_are_valid(exemplars)

    before, after = inputs["shift"]
    template = read_template(template_path("dynamic", settings))
    return substitute(template, {
        "basic_information": render_basic_information(inputs["persona"]),
        "pandemic_shift": render_pandemic_shift(before, after),
        "control_changes": render_control_changes(before, after, settings),
        "exemplars": render_dynamic_exemplars(exemplars, settings),
        "task": render_dynamic_task(risk_t1)
    })


def format_reminder(kind: str, reason: str) -> str:
    """
    Text appended to a prompt when the previous answer could not be parsed.
    """
    marker = STATIC_MARKER if kind == "static" else DYNAMIC_MARKER
    return (
        "\n\nYour previous answer could not be read ({}). Reply again with "
        "only the fenced {} block, exactly in the requested format.".format(
            reason, marker))


###############################################################################
# Parsers
###############################################################################
def _probability(value: str, what: str, raw: str) -> float:
    try:
        p = float(value)
    except (TypeError, ValueError):
        raise ResponseParseError(
            "{} is not a number: '{}'".format(what, value), raw)
    if math.isnan(p) or not 0.0 <= p <= 1.0:
        raise ResponseParseError(
            "{} is outside of [0, 1]: {}".format(what, value), raw)
    return p


def _last_block(pattern: re.Pattern, text: str, marker: str) -> str:
    blocks = pattern.findall(text or "")
    if not blocks:
        raise ResponseParseError(
            "no fenced {} block found".format(marker), text)
    if len(blocks) > 1:
        logger.debug("Answer holds {} {} blocks, reading the last one".format(
            len(blocks), marker))
    return blocks[-1]


def parse_static_response(text: str,
                          settings: Settings = None) -> StaticResponse:
    """
    Extract the behavior probabilities and rationales from a model answer.

    Raises :exc:`ResponseParseError`, carrying the raw text, when the block is
    missing, a behavior is unknown, missing or duplicated, or a probability
    is not a number in [0, 1].
    """
    catalog = behavior_catalog(settings)
    known = [b.id for b in catalog]
    block = _last_block(STATIC_BLOCK, text, STATIC_MARKER)

    probabilities, rationales = {}, {}
    for line in block.splitlines():
        if not line.strip():
            continue
        m = STATIC_LINE.match(line)
        if not m:
            raise ResponseParseError(
                "unreadable line in response block: '{}'".format(
                    line.strip()), text)
        behavior, value, rationale = m.groups()
        if behavior not in known:
            raise ResponseParseError(
                "unknown behavior '{}'".format(behavior), text)
        if behavior in probabilities:
            raise ResponseParseError(
                "behavior '{}' is answered twice".format(behavior), text)
        probabilities[behavior] = _probability(
            value, "probability of '{}'".format(behavior), text)
        rationales[behavior] = rationale

    missing = [b for b in known if b not in probabilities]
    if missing:
        raise ResponseParseError(
            "missing behavior(s): {}".format(", ".join(missing)), text)

    return {
        "probabilities": {b: probabilities[b] for b in known},
        "rationales": {b: rationales[b] for b in known}
    }


def parse_dynamic_response(text: str) -> DynamicResponse:
    """
    Extract the updated risk score and its rationale from a model answer.
    Lines after the `rationale` field that start no field of their own
    continue the rationale. Raises :exc:`ResponseParseError` as
    :func:`parse_static_response` does.
    """
    block = _last_block(DYNAMIC_BLOCK, text, DYNAMIC_MARKER)

    fields, current = {}, None
    for line in block.splitlines():
        if not line.strip():
            continue
        m = FIELD_LINE.match(line)
        key = m.group(1).lower() if m else None
        if key not in DYNAMIC_FIELDS:
            if current != "rationale":
                raise ResponseParseError(
                    "unreadable line in response block: '{}'".format(
                        line.strip()), text)
            fields[current] = " ".join(
                part for part in (fields[current], line.strip()) if part)
            continue
        if key in fields:
            raise ResponseParseError(
                "field '{}' is answered twice".format(key), text)
        fields[key] = m.group(2)
        current = key

    for key in DYNAMIC_FIELDS:
        if key not in fields:
            raise ResponseParseError(
                "missing field '{}'".format(key), text)

    return {
        "risk_score": _probability(fields["risk_score"], "risk score", text),
        "rationale": fields["rationale"]
    }


def render_static_response(response: StaticResponse,
                           settings: Settings = None) -> str:
    """
    Render a static response the way models are asked to answer. Floats are
    written with `repr` so parsing the result gives back the same values.
    """
    lines = ["```" + STATIC_MARKER]
    for b in behavior_catalog(settings):
        lines.append("{}: {!r} | {}".format(
            b.id, float(response["probabilities"][b.id]),
            " ".join(response["rationales"][b.id].split())))
    lines.append("```")
    return "\n".join(lines)


def render_dynamic_response(response: DynamicResponse) -> str:
    return "\n".join([
        "```" + DYNAMIC_MARKER,
        "risk_score: {!r}".format(float(response["risk_score"])),
        "rationale: {}".format(" ".join(response["rationale"].split())),
        "```"
    ])

