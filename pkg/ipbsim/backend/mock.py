# -*- coding: utf-8 -*-
"""
A deterministic stand-in for a live model, used by tests and dry runs.

It reads the values a prompt carries (control tier, risk level, R0, CFR,
reference examples) and answers through a small rule layer whose only purpose
is to move in the directions perceived-risk theory expects:

* static answers: every behavior probability is a persona-specific baseline
  plus `0.05` per step of control tier strictness plus `0.06` per risk level
  above 1
* dynamic answers: the T2 risk score starts from the middle of the T1
  level's bin with a persona-specific offset, and moves on the logit scale
  by `0.25 * log2(R0 ratio)`, `0.1 * log2(CFR ratio)` and `0.2` per step
  of tier change, so it never saturates

With reference examples, answers are pulled half-way towards what the
examples observed. Persona-specific terms hash the basic information section
only, so two prompts that differ in their environment share them.

None of this is a behavioral claim, it is a test oracle.
"""
import math
import re
from typing import List, Optional

from ipbsim.domain import BEHAVIOR_POINTS, RISK_POINTS, TIER_LABELS, \
    behavior_catalog, likert_midpoint, tier_rank
from ipbsim.exceptions import DomainError
from ipbsim.prompt import DYNAMIC_MARKER, \
    render_dynamic_response, render_static_response
from ipbsim.seeding import derive_seed
from ipbsim.types import CompletionRequest, CompletionResult

__all__ = ["mock_complete", "risk_baseline", "behavior_baseline"]

TIER_STEP = 0.05
RISK_STEP = 0.06
R0_WEIGHT = 0.25
CFR_WEIGHT = 0.1
TIER_SHIFT_STEP = 0.2
EXEMPLAR_WEIGHT = 0.5
CFR_FLOOR = 1e-4

SECTION = re.compile(r"^## (.+)$", re.MULTILINE)
TIER_LINE = re.compile(r"^Community control tier: (.+)$", re.MULTILINE)
RISK_LINE = re.compile(r"risk perception level is (\d)")
T1_RISK_LINE = re.compile(r"risk perception level was (\d)")
OBSERVED_LINE = re.compile(r"^Observed behavior \([^)]*\): (.*)$",
                           re.MULTILINE)
OBSERVED_RISK_LINE = re.compile(
    r"^Observed risk perception level at T2: (\d)$", re.MULTILINE)
PAIR = re.compile(r"([a-z0-9_]+)=(\d)")
# "{:g}" renders large and tiny values with an exponent
NUMBER = r"[-+]?\d*\.?\d+(?:[eE][-+]?\d+)?"

RATIONALES = {
    "risk": [
        "the risk of getting infected around me feels {level}",
        "I worry that the virus keeps spreading in my neighbourhood",
        "viruses may propagate through drainage systems in my building",
    ],
    "habit": [
        "it has become part of my daily routine and is easy to maintain",
        "it is a low cost habit I kept from earlier waves",
    ],
    "guidance": [
        "official guidance in my community still recommends it",
        "the community committee reminds residents to do so",
    ],
    "cost": [
        "it costs me extra time and money every week",
        "it is inconvenient and adds to my daily expenses",
    ],
}
LABEL_TO_TIER = {label: tier for tier, label in TIER_LABELS.items()}


def section(prompt: str, title: str) -> str:
    """
    Text of the section named `title`, up to the next section heading.
    """
    matches = list(SECTION.finditer(prompt))
    for i, m in enumerate(matches):
        if m.group(1).strip() == title:
            end = matches[i + 1].start() if i + 1 < len(matches) else None
            return prompt[m.end():end].strip()
    return ""


def unit(*parts) -> float:
    return derive_seed(*parts) / float(2 ** 63)


def clamp(value: float) -> float:
    return max(0.0, min(1.0, value))


def mean(values: List[float]) -> Optional[float]:
    return math.fsum(values) / len(values) if values else None


def behavior_baseline(prompt: str, seed: int, behavior: str) -> float:
    identity = section(prompt, "Basic Information")
    return 0.15 + 0.40 * unit("behavior", identity, seed, behavior)


def risk_baseline(prompt: str, seed: int) -> float:
    """
    Score the oracle gives when nothing changes between T1 and T2.
    """
    identity = section(prompt, "Basic Information")
    m = T1_RISK_LINE.search(prompt)
    level = int(m.group(1)) if m else 1
    offset = 0.08 * (unit("risk", identity, seed) - 0.5)
    return clamp(likert_midpoint(level, RISK_POINTS) + offset)


def _tier_of(label: str) -> str:
    return LABEL_TO_TIER.get(label.strip(), "RegularPC")


def _shift(prompt: str, field: str, percent: bool = False) -> (float, float):
    pattern = re.compile(
        r"^" + re.escape(field) + r": (?:no change \(({n})%?\)|"
        r"({n})%? -> ({n})%?)$".format(n=NUMBER), re.MULTILINE)
    m = pattern.search(prompt)
    if not m:
        raise DomainError(
            "the dynamic prompt carries no readable '{}' line".format(field))
    if m.group(1) is not None:
        before = after = float(m.group(1))
    else:
        before, after = float(m.group(2)), float(m.group(3))
    if percent:
        before, after = before / 100.0, after / 100.0
    return before, after


def _rationale(identity: str, seed: int, key: str, level: str) -> str:
    themes = sorted(RATIONALES)
    theme = themes[derive_seed("theme", identity, seed, key) % len(themes)]
    phrases = RATIONALES[theme]
    phrase = phrases[derive_seed("phrase", identity, seed, key) % len(phrases)]
    return phrase.format(level=level)


def _static_answer(prompt: str, seed: int) -> str:
    identity = section(prompt, "Basic Information")
    controls = section(prompt, "Community Control Measures")
    m = TIER_LINE.search(controls)
    rank = tier_rank(_tier_of(m.group(1))) if m else 0
    m = RISK_LINE.search(prompt)
    level = int(m.group(1)) if m else 1

    observed = {}
    for line in OBSERVED_LINE.findall(prompt):
        for behavior, score in PAIR.findall(line):
            observed.setdefault(behavior, []).append(
                likert_midpoint(int(score), BEHAVIOR_POINTS))

    probabilities, rationales = {}, {}
    for behavior in behavior_catalog():
        p = clamp(behavior_baseline(prompt, seed, behavior.id) +
                  TIER_STEP * rank + RISK_STEP * (level - 1))
        target = mean(observed.get(behavior.id, []))
        if target is not None:
            p = (1 - EXEMPLAR_WEIGHT) * p + EXEMPLAR_WEIGHT * target
        probabilities[behavior.id] = round(clamp(p), 3)
        rationales[behavior.id] = _rationale(
            identity, seed, behavior.id, "high" if level > 3 else "low")

    return render_static_response(
        {"probabilities": probabilities, "rationales": rationales})


def _dynamic_answer(prompt: str, seed: int) -> str:
    identity = section(prompt, "Basic Information")
    r0_before, r0_after = _shift(prompt, "Basic reproduction number (R0)")
    cfr_before, cfr_after = _shift(
        prompt, "Case fatality rate (CFR)", percent=True)

    controls = section(prompt, "Community Control Measure Changes")
    m = TIER_LINE.search(controls)
    tier_change = 0
    if m:
        value = m.group(1)
        if value.startswith("no change"):
            tier_change = 0
        elif " -> " in value:
            before, after = value.split(" -> ", 1)
            tier_change = tier_rank(_tier_of(after)) - \
                tier_rank(_tier_of(before))

    baseline = risk_baseline(prompt, seed)
    base_logit = math.log(baseline / (1.0 - baseline))
    logit = base_logit
    logit += R0_WEIGHT * math.log2(r0_after / r0_before)
    logit += CFR_WEIGHT * math.log2(
        max(cfr_after, CFR_FLOOR) / max(cfr_before, CFR_FLOOR))
    logit += TIER_SHIFT_STEP * tier_change
    # unchanged environments answer the baseline itself
    score = baseline if logit == base_logit else \
        1.0 / (1.0 + math.exp(-logit))

    target = mean([
        likert_midpoint(int(level), RISK_POINTS)
        for level in OBSERVED_RISK_LINE.findall(prompt)
    ])
    if target is not None:
        score = (1 - EXEMPLAR_WEIGHT) * score + EXEMPLAR_WEIGHT * target

    return render_dynamic_response({
        "risk_score": round(clamp(score), 3),
        "rationale": _rationale(
            identity, seed, "risk", "higher" if score > 0.5 else "lower")
    })


def mock_complete(request: CompletionRequest,
                  seed: int = None) -> CompletionResult:
    """
    Answer a prompt deterministically: the same prompt and seed always give
    byte-identical text. Dynamic prompts are recognized by their
    `dynamic-response` block request, anything else gets a static answer.
    """
    prompt = request["prompt"]
    seed = 0 if seed is None else seed
    identity = section(prompt, "Basic Information")
    name = identity.split(",", 1)[0].replace("I am ", "") or "resident"

    if DYNAMIC_MARKER in prompt:
        block = _dynamic_answer(prompt, seed)
    else:
        block = _static_answer(prompt, seed)

    text = "Speaking as {}, here is my assessment.\n\n{}\n".format(
        name, block)
    return {
        "text": text,
        "usage": {"prompt_characters": len(prompt),
                  "completion_characters": len(text)},
        "model": "mock",
        "attempts": 1,
        "latency": 0.0
    }
