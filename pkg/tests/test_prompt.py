# -*- coding: utf-8 -*-
import io
import os.path

import numpy as np
import pytest

from ipbsim.domain import behavior_ids
from ipbsim.exceptions import DomainError, InvalidConfiguration, \
    ResponseParseError
from ipbsim.prompt import build_dynamic_prompt, build_static_prompt, \
    format_reminder, parse_dynamic_response, parse_static_response, \
    render_dynamic_response, render_static_response
from ipbsim.scenario import policy_relaxation_condition

from fixtures import population, responses

STATIC_SECTIONS = ["## Basic Information", "## Pandemic Context",
                   "## Community Control Measures",
                   "## Environmental Risk Perception", "## Task Setting"]
DYNAMIC_SECTIONS = ["## Basic Information", "## Shift of Pandemic Context",
                    "## Community Control Measure Changes",
                    "## Task Setting"]


def static_inputs(**overrides):
    inputs = {
        "persona": population.persona(),
        "condition": population.condition(),
        "risk": {"score": None, "level": 3, "round": "T1"},
        "exemplars": []
    }
    inputs.update(overrides)
    return inputs


def test_static_prompt_has_its_five_sections_in_order():
    prompt = build_static_prompt(static_inputs(), {})
    positions = [prompt.index(s) for s in STATIC_SECTIONS]
    assert positions == sorted(positions)
    assert "## Reference Examples" not in prompt
    assert "I am Lin Wei, a 42-year-old female" in prompt
    assert "Case fatality rate (CFR): 1.5%" in prompt
    assert "Community control tier: Regular Prevention & Control" in prompt
    assert "risk perception level is 3 on a 6-point scale" in prompt
    for behavior in behavior_ids():
        assert "{}: <probability> | <rationale>".format(behavior) in prompt


def test_static_prompt_lists_every_intervention():
    prompt = build_static_prompt(static_inputs(), {})
    assert prompt.count(": Active") + prompt.count(": Cancelled") == 9


def test_static_prompt_renders_exemplars_before_the_task():
    exemplar = {
        "persona": population.persona("R1-0002", "Zhang Wei"),
        "condition": population.condition(),
        "risk": {"score": None, "level": 5, "round": "T1"},
        "observed": {b: 4 for b in behavior_ids()}
    }
    prompt = build_static_prompt(static_inputs(exemplars=[exemplar]), {})
    assert prompt.index("## Reference Examples") < \
        prompt.index("## Task Setting")
    assert "Reference example 1" in prompt
    assert "hand_washing=4" in prompt


def test_exemplar_scores_must_be_on_the_five_point_scale():
    exemplar = {
        "persona": population.persona("R1-0002"),
        "condition": population.condition(),
        "risk": {"score": None, "level": 5, "round": "T1"},
        "observed": {"hand_washing": 6}
    }
    with pytest.raises(DomainError):
        build_static_prompt(static_inputs(exemplars=[exemplar]), {})


def test_qualitative_burden_is_rendered_as_descriptors():
    prompt = build_static_prompt(
        static_inputs(condition=policy_relaxation_condition({})), {})
    assert "Epidemic situation: rapid widespread infection; surging case " \
        "numbers" in prompt
    assert "Confirmed cases" not in prompt
    assert "Basic reproduction number (R0): 10" in prompt
    assert "Case fatality rate (CFR): 0.05%" in prompt


def snapshot(name: str) -> str:
    path = os.path.join(
        os.path.dirname(__file__), "fixtures", "prompts", name)
    with io.open(path, encoding="utf-8") as f:
        return f.read()


def test_static_prompt_matches_its_snapshot():
    exemplars = [{
        "persona": dict(population.persona("R1-0002"), age=67,
                        occupation="retired"),
        "condition": population.condition("Isolation", r0=5.0, cfr=0.001),
        "risk": {"score": None, "level": 5, "round": "T1"},
        "observed": {"hand_washing": 5, "mask_elevator": 4}
    }, {
        "persona": dict(population.persona("R1-0003"), age=29,
                        gender="male", education="high school",
                        occupation="student"),
        "condition": population.condition("NoPC", r0=0.8, cfr=0.05),
        "risk": {"score": None, "level": 2, "round": "T1"},
        "observed": {"toilet_lid": 2, "mask_green_space": 1}
    }]
    prompt = build_static_prompt(static_inputs(exemplars=exemplars), {})
    assert prompt == snapshot("static.txt")


def test_dynamic_prompt_matches_its_snapshot():
    transition = population.transition(
        after=population.condition("Isolation", r0=5.0))
    exemplar = {
        "persona": dict(population.persona("R1-0002"), age=67,
                        occupation="retired"),
        "condition_t1": population.condition("NoPC", r0=0.8, cfr=0.05),
        "condition_t2": population.condition(
            "SelfHealthMonitoring", r0=3.0, cfr=0.005),
        "risk_t1": {"score": None, "level": 2, "round": "T1"},
        "observed_risk": 4,
        "observed": {"home_disinfection": 3}
    }
    prompt = build_dynamic_prompt({
        "persona": transition["persona"],
        "shift": (transition["condition_t1"], transition["condition_t2"]),
        "risk_t1": transition["risk_t1"],
        "exemplars": [exemplar]
    }, {})
    assert prompt == snapshot("dynamic.txt")


def test_dynamic_prompt_has_its_four_sections_in_order():
    transition = population.transition(
        after=population.condition("Isolation", r0=5.0))
    prompt = build_dynamic_prompt({
        "persona": transition["persona"],
        "shift": (transition["condition_t1"], transition["condition_t2"]),
        "risk_t1": transition["risk_t1"],
        "exemplars": []
    }, {})
    positions = [prompt.index(s) for s in DYNAMIC_SECTIONS]
    assert positions == sorted(positions)
    assert "Basic reproduction number (R0): 2 -> 5" in prompt
    assert "Case fatality rate (CFR): no change (1.5%)" in prompt
    assert "Community control tier: Regular Prevention & Control -> " \
        "Isolation" in prompt
    assert "risk perception level was 3" in prompt


def test_dynamic_prompt_requires_a_t1_risk_perception():
    transition = population.transition()
    with pytest.raises(DomainError):
        build_dynamic_prompt({
            "persona": transition["persona"],
            "shift": (transition["condition_t1"],
                      transition["condition_t2"]),
            "risk_t1": {"score": 0.5, "level": 4, "round": "T2"},
            "exemplars": []
        }, {})


def test_template_files_can_be_replaced(tmp_path):
    template = tmp_path / "static.txt"
    template.write_text("${basic_information}\n${task}\n")
    prompt = build_static_prompt(
        static_inputs(), {"templates": {"static": str(template)}})
    assert prompt.startswith("I am Lin Wei")
    assert "## Pandemic Context" not in prompt

    with pytest.raises(InvalidConfiguration):
        build_static_prompt(
            static_inputs(), {"templates": {"static": "/tmp/nope.txt"}})


def test_parse_static_response():
    parsed = parse_static_response(responses.StaticAnswer, {})
    assert list(parsed["probabilities"]) == behavior_ids()
    assert parsed["probabilities"]["hand_washing"] == 1.0
    assert parsed["probabilities"]["drain_seal_maintenance"] == 0.0
    assert parsed["rationales"]["mask_elevator"] == \
        "I keep doing it out of habit"


def test_parse_static_response_reads_the_last_block():
    parsed = parse_static_response(responses.StaticAnswerWithProse, {})
    assert parsed["probabilities"]["mask_elevator"] == 0.85


@pytest.mark.parametrize("answer,reason", [
    (responses.NoBlockAnswer, "no fenced static-response block"),
    (responses.StaticAnswerMissingBehavior, "missing behavior"),
    (responses.StaticAnswerOutOfRange, "outside of [0, 1]"),
    (responses.StaticAnswerUnknownBehavior, "unknown behavior 'juggling'"),
])
def test_malformed_static_response_carries_the_raw_text(answer, reason):
    with pytest.raises(ResponseParseError) as x:
        parse_static_response(answer, {})
    assert reason in str(x.value)
    assert x.value.raw == answer


def test_parse_dynamic_response():
    parsed = parse_dynamic_response(responses.DynamicAnswer)
    assert parsed == {
        "risk_score": 0.72,
        "rationale": "the virus spreads much faster now"
    }

    with pytest.raises(ResponseParseError) as x:
        parse_dynamic_response(responses.DynamicAnswerMissingScore)
    assert "risk_score" in str(x.value)


def test_rendered_static_response_parses_back():
    parsed = parse_static_response(responses.StaticAnswer, {})
    text = render_static_response(parsed, {})
    assert parse_static_response(text, {}) == parsed


def test_reminder_names_the_expected_block():
    assert "static-response" in format_reminder("static", "bad")
    assert "dynamic-response" in format_reminder("dynamic", "bad")


RATIONALE_WORDS = ("I", "worry", "about", "my", "family", "note:",
                   "either|or", "masks", "100%", "risk", "is", "low")


def random_rationale(rng: np.random.Generator) -> str:
    size = int(rng.integers(1, 12))
    return " ".join(rng.choice(RATIONALE_WORDS, size=size).tolist())


def random_probability(rng: np.random.Generator) -> float:
    return float(rng.choice([0.0, 1.0, rng.random(), rng.random()]))


@pytest.mark.parametrize("seed", range(20))
def test_random_static_responses_parse_back(seed):
    rng = np.random.default_rng(seed)
    response = {
        "probabilities": {b: random_probability(rng) for b in behavior_ids()},
        "rationales": {b: random_rationale(rng) for b in behavior_ids()}
    }
    text = "Here is my answer.\n\n{}\n".format(
        render_static_response(response, {}))
    assert parse_static_response(text, {}) == response


@pytest.mark.parametrize("seed", range(20))
def test_random_dynamic_responses_parse_back(seed):
    rng = np.random.default_rng(seed)
    response = {
        "risk_score": random_probability(rng),
        "rationale": random_rationale(rng)
    }
    text = render_dynamic_response(response)
    assert parse_dynamic_response(text) == response


def test_dynamic_rationale_may_span_several_lines():
    parsed = parse_dynamic_response(
        "```dynamic-response\n"
        "risk_score: 0.4\n"
        "rationale: the tier was relaxed\n"
        "and cases stay low\n"
        "\n"
        "so I worry less\n"
        "```")
    assert parsed == {
        "risk_score": 0.4,
        "rationale": "the tier was relaxed and cases stay low so I worry less"
    }


def test_dynamic_block_rejects_text_before_any_field():
    with pytest.raises(ResponseParseError) as x:
        parse_dynamic_response(
            "```dynamic-response\n"
            "I think so\n"
            "risk_score: 0.4\n"
            "rationale: the tier was relaxed\n"
            "```")
    assert "unreadable line" in str(x.value)


def test_dynamic_score_cannot_be_continued_by_free_text():
    with pytest.raises(ResponseParseError) as x:
        parse_dynamic_response(
            "```dynamic-response\n"
            "risk_score: 0.4\n"
            "which is moderate\n"
            "rationale: the tier was relaxed\n"
            "```")
    assert "unreadable line" in str(x.value)
