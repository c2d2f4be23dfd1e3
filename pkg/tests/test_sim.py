# -*- coding: utf-8 -*-
import json
import threading
from typing import Callable, Dict

import pytest

from ipbsim.backend import Backend
from ipbsim.domain import behavior_ids
from ipbsim.exceptions import DomainError, InvalidConfiguration, \
    SimulationFailed, TransientBackendFailure
from ipbsim.prompt import render_dynamic_response, render_static_response
from ipbsim.sim import RunLog, ensure_sim_config_is_valid, replay_profile, \
    replay_risk, repetition_seed, simulate_cohort, simulate_dynamic, \
    simulate_static, simulate_transitions, transition_label, update_risk

from fixtures import config, population, responses

RISK = {"score": None, "level": 3, "round": "T1"}


class FakeBackend:
    """
    Answers through `answer(request, call)`, `call` being the 0-based index
    of the calls made with the same seed.
    """

    def __init__(self, answer: Callable[[Dict, int], str]):
        self.config = {"max_concurrency": 10}
        self.answer = answer
        self.requests = []
        self._calls = {}
        self._lock = threading.Lock()

    def complete(self, request: Dict) -> Dict:
        with self._lock:
            self.requests.append(request)
            call = self._calls.get(request["seed"], 0)
            self._calls[request["seed"]] = call + 1
        return {"text": self.answer(request, call), "usage": {},
                "model": "fake", "attempts": 1, "latency": 0.0}


class FailingBackend:
    config = {"max_concurrency": 10}

    def complete(self, request: Dict) -> Dict:
        raise TransientBackendFailure("completion failed after 6 attempts")


def static_text(p: float) -> str:
    return render_static_response({
        "probabilities": {b: p for b in behavior_ids()},
        "rationales": {b: "it feels {}".format(p) for b in behavior_ids()}
    })


def test_same_seed_gives_the_same_profile():
    persona, condition = population.persona(), population.condition()
    first = simulate_static(persona, condition, RISK, [],
                            config.FastSimulation, Backend(), settings={})
    second = simulate_static(persona, condition, RISK, [],
                             config.FastSimulation, Backend(), settings={})
    assert first == second
    assert first["repetitions"] == 2
    assert list(first["behaviors"]) == behavior_ids()


def test_probabilities_are_averaged_before_discretizing():
    persona, condition = population.persona(), population.condition()
    values = {
        repetition_seed(42, persona["id"], condition["label"], "static", 0):
            0.0,
        repetition_seed(42, persona["id"], condition["label"], "static", 1):
            0.78
    }
    backend = FakeBackend(
        lambda request, call: static_text(values[request["seed"]]))

    profile = simulate_static(persona, condition, RISK, [],
                              config.FastSimulation, backend, settings={})
    hand_washing = profile["behaviors"]["hand_washing"]
    assert hand_washing["mean_probability"] == pytest.approx(0.39)
    assert hand_washing["likert"] == 2
    assert hand_washing["rationales"] == ["it feels 0.0", "it feels 0.78"]


def test_repetitions_use_distinct_seeds():
    backend = FakeBackend(lambda request, call: static_text(0.5))
    simulate_static(population.persona(), population.condition(), RISK, [],
                    dict(config.FastSimulation, repetitions=5), backend,
                    settings={})
    assert len({r["seed"] for r in backend.requests}) == 5


def test_unreadable_answers_are_asked_again_with_a_reminder():
    backend = FakeBackend(
        lambda request, call: responses.NoBlockAnswer if call == 0
        else static_text(0.5))
    run_log = RunLog()

    profile = simulate_static(population.persona(), population.condition(),
                              RISK, [], config.FastSimulation, backend,
                              run_log, settings={})
    assert profile["behaviors"]["toilet_lid"]["likert"] == 3
    assert len(backend.requests) == 4
    retried = [r for r in backend.requests if "could not be read" in
               r["prompt"]]
    assert len(retried) == 2

    records = run_log.records()
    assert [r["error"] is None for r in records].count(False) == 2
    assert all(r["raw"] for r in records)


def test_simulation_fails_once_parse_retries_are_exhausted():
    backend = FakeBackend(lambda request, call: responses.NoBlockAnswer)
    with pytest.raises(SimulationFailed) as x:
        simulate_static(population.persona(), population.condition(), RISK,
                        [], dict(config.FastSimulation, parse_retries=1),
                        backend, settings={})
    assert "could not be parsed after 2 attempts" in str(x.value)
    assert "R1-0001" in str(x.value)


def test_backend_failures_stop_the_simulation():
    run_log = RunLog()
    with pytest.raises(SimulationFailed) as x:
        simulate_static(population.persona(), population.condition(), RISK,
                        [], config.FastSimulation, FailingBackend(), run_log,
                        settings={})
    assert "RegularPC-r02-cfr0.015" in str(x.value)
    assert all(r["error"] for r in run_log.records())


def test_dynamic_profile_is_the_static_profile_at_t2():
    transition = population.transition()
    backend = Backend()
    risk_t2, profile = simulate_dynamic(
        transition, [], [], config.FastSimulation, backend, settings={})

    assert risk_t2["round"] == "T2"
    assert 1 <= risk_t2["level"] <= 6
    assert profile == simulate_static(
        transition["persona"], transition["condition_t2"], risk_t2, [],
        config.FastSimulation, backend, settings={})


@pytest.mark.parametrize("case", range(50))
def test_dynamic_profile_matches_a_direct_static_run(case: int):
    transition = population.random_transition(case)
    backend = Backend()
    risk_t2, profile = simulate_dynamic(
        transition, [], [], config.FastSimulation, backend, settings={})

    direct = simulate_static(
        transition["persona"], transition["condition_t2"], risk_t2, [],
        config.FastSimulation, backend, settings={})
    assert json.dumps(profile, sort_keys=True) == \
        json.dumps(direct, sort_keys=True)


def test_risk_update_requires_a_t1_starting_point():
    transition = population.transition()
    transition["risk_t1"] = {"score": 0.4, "level": 3, "round": "T2"}
    with pytest.raises(DomainError):
        update_risk(transition, [], config.FastSimulation, Backend(),
                    settings={})


def test_risk_score_is_the_mean_of_the_repetitions():
    backend = FakeBackend(lambda request, call: render_dynamic_response(
        {"risk_score": 0.72, "rationale": "faster spread"}))
    risk = update_risk(population.transition(), [], config.FastSimulation,
                       backend, settings={})
    assert risk == {"score": 0.72, "level": 5, "round": "T2"}


def test_profiles_can_be_replayed_from_the_run_log(tmp_path):
    transition = population.transition()
    run_log = RunLog()
    risk_t2, profile = simulate_dynamic(
        transition, [], [], config.FastSimulation, Backend(), run_log,
        settings={})

    path = str(tmp_path / "run-log.jsonl")
    run_log.write(path)
    records = RunLog.load(path).records()

    assert replay_risk(records, transition["persona"]["id"],
                       transition_label(transition)) == risk_t2
    assert replay_profile(records, transition["persona"]["id"],
                          transition["condition_t2"]["label"],
                          risk_t2, {}) == profile


def test_replay_without_completions_is_an_error():
    with pytest.raises(DomainError):
        replay_risk([], "R1-0001", "nothing")


def test_run_log_does_not_depend_on_completion_order(tmp_path):
    jobs = [{
        "persona": population.persona("R1-{:04d}".format(i)),
        "condition": population.condition(),
        "risk": RISK,
        "exemplars": []
    } for i in range(6)]

    paths = []
    for workers in (1, 6):
        run_log = RunLog()
        simulate_cohort(jobs, dict(config.FastSimulation, workers=workers),
                        Backend(), run_log, settings={})
        path = tmp_path / "run-log-{}.jsonl".format(workers)
        run_log.write(str(path))
        paths.append(path)

    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_cohort_profiles_follow_job_order():
    jobs = [{
        "persona": population.persona("R1-{:04d}".format(i)),
        "condition": population.condition(),
        "risk": RISK
    } for i in range(5)]
    profiles = simulate_cohort(jobs, config.FastSimulation, Backend(),
                               settings={})
    assert [p["persona"] for p in profiles] == \
        ["R1-{:04d}".format(i) for i in range(5)]


def test_transitions_come_back_in_order():
    transitions = [population.transition(pid="R2-{:04d}".format(i))
                   for i in range(3)]
    results = simulate_transitions(transitions, [], [],
                                   config.FastSimulation, Backend(),
                                   settings={})
    assert [profile["persona"] for _, profile in results] == \
        ["R2-0000", "R2-0001", "R2-0002"]


def test_scoped_log_tags_its_records():
    run_log = RunLog()
    simulate_static(population.persona(), population.condition(), RISK, [],
                    config.FastSimulation, Backend(),
                    run_log.scoped("zero_shot_static"), settings={})
    assert len(run_log) == 2
    assert {r["scope"] for r in run_log.records()} == {"zero_shot_static"}


@pytest.mark.parametrize("overrides", [
    {"repetitions": 0},
    {"repetitions": 2.5},
    {"parse_retries": -1},
    {"workers": 0},
    {"seed": "abc"},
])
def test_invalid_simulation_config(overrides: dict):
    c = dict(config.FastSimulation)
    c.update(overrides)
    with pytest.raises(InvalidConfiguration):
        ensure_sim_config_is_valid(c)
