# -*- coding: utf-8 -*-
from fractions import Fraction
import os

import pytest

from ipbsim.backend import Backend
from ipbsim.domain import behavior_ids
from ipbsim.exceptions import InvalidConfiguration, InvalidStrategy
from ipbsim.experiment import DEFAULT_STRATEGIES, build_transitions, gate, \
    load_dataset, profile_rows, run_chain, run_grid, run_relaxation, \
    run_strategy, select_exemplars, split_reference, static_subjects, \
    strategy_order, strategy_specs
from ipbsim.report import write_validation
from ipbsim.sim import RunLog

from fixtures import config, surveys

SIM = {"repetitions": 2, "seed": 42, "workers": 4, "exemplar_limit": 5}


def failing_prior(name: str) -> dict:
    return {
        "strategy": name,
        "rows": [{"behavior": b, "passed": False} for b in behavior_ids()]
    }


@pytest.mark.parametrize("n,reference,test", [(9, 3, 6), (10, 3, 7),
                                              (2, 0, 2)])
def test_split_sets_a_third_aside(n: int, reference: int, test: int):
    items = list(range(n))
    ref, rest = split_reference(items, "1/3", seed=5)
    assert (len(ref), len(rest)) == (reference, test)
    assert sorted(ref + rest) == items
    assert ref == sorted(ref) and rest == sorted(rest)
    assert split_reference(items, Fraction(1, 3), seed=5) == (ref, rest)


@pytest.mark.parametrize("fraction", [0, 1, "half", -0.5])
def test_split_fraction_must_be_a_proper_fraction(fraction):
    with pytest.raises(InvalidConfiguration):
        split_reference([1, 2, 3], fraction)


def test_gate_admits_passing_behaviors_only():
    prior = {"strategy": "few_shot_static", "rows": [
        {"behavior": "hand_washing", "passed": True},
        {"behavior": "toilet_lid", "passed": False},
        {"behavior": "mask_elevator", "passed": True}
    ]}
    assert gate(prior) == ["hand_washing", "mask_elevator"]
    assert gate(failing_prior("few_shot_static"), "static") == []


def test_default_strategies_are_valid():
    specs = strategy_specs({})
    assert set(specs) == set(DEFAULT_STRATEGIES)
    assert specs["few_shot_static"]["name"] == "few_shot_static"


def test_strategies_can_be_added_and_overridden():
    specs = strategy_specs(
        {"strategies": {"few_shot_static": {"fraction": "1/2"}}},
        {"strategies": {"few_shot_r2": {
            "kind": "few_shot", "mode": "static",
            "reference": {"round": "R2"}, "test": {"round": "R2"}
        }}})
    assert specs["few_shot_static"]["fraction"] == "1/2"
    assert specs["few_shot_r2"]["kind"] == "few_shot"
    assert specs["few_shot_r2"]["name"] == "few_shot_r2"


@pytest.mark.parametrize("overrides,message", [
    ({"kind": "many_shot"}, "unknown kind 'many_shot'"),
    ({"mode": "sideways"}, "unknown mode 'sideways'"),
    ({"reference": {"round": "R1"}}, "cannot have a reference"),
    ({"test": None}, "requires a test selector"),
    ({"test": {"tiers": ["Lockdown"]}}, "unknown tier 'Lockdown'"),
])
def test_invalid_strategy(overrides: dict, message: str):
    with pytest.raises(InvalidStrategy) as x:
        strategy_specs({"strategies": {"zero_shot_static": overrides}})
    assert message in str(x.value)


def test_prerequisites_run_first():
    assert strategy_order("transfer_dynamic", DEFAULT_STRATEGIES) == [
        "few_shot_static", "transfer_static", "few_shot_dynamic",
        "transfer_dynamic"]
    assert strategy_order("zero_shot_static", DEFAULT_STRATEGIES) == [
        "zero_shot_static"]


def test_unknown_strategy_lists_the_defined_ones():
    with pytest.raises(InvalidStrategy) as x:
        strategy_order("best_shot", DEFAULT_STRATEGIES)
    assert "few_shot_dynamic, few_shot_static" in str(x.value)


def test_cyclic_requirements_are_rejected():
    specs = {"a": {"requires": ["b"]}, "b": {"requires": ["a"]}}
    with pytest.raises(InvalidStrategy) as x:
        strategy_order("a", specs)
    assert "a -> b -> a" in str(x.value)


def test_dataset_rounds_must_match(survey_files):
    dataset = load_dataset(survey_files)
    assert len(dataset["R1"]) == surveys.FIRST_WAVE
    assert len(dataset["R2"]) == surveys.SECOND_WAVE

    with pytest.raises(InvalidConfiguration) as x:
        load_dataset({"R2": survey_files["R1"]})
    assert "holds records of another round" in str(x.value)


def test_subjects_carry_their_surveyed_condition(dataset):
    subjects = static_subjects(dataset["R2"], 42, settings={})
    assert len(subjects) == surveys.SECOND_WAVE
    first = subjects[0]
    assert first["condition"]["measures"]["tier"] == first["tier"]
    assert first["condition"]["context"]["r0"] == 5.0
    assert first["risk"]["round"] == "T1"
    assert first["observed"] == first["record"]["behavior_scores"]


def test_transitions_pair_r2_residents_with_r1_matches(dataset):
    cases = build_transitions(dataset, 42, settings={})
    assert len(cases) == surveys.SECOND_WAVE
    assert len({c["match"] for c in cases}) == surveys.SECOND_WAVE
    for case in cases:
        transition = case["transition"]
        assert transition["persona"]["id"] == case["id"]
        assert transition["condition_t1"]["label"].startswith("R1-")
        assert transition["condition_t2"]["label"].startswith("R2-")
        assert transition["risk_t1"]["round"] == "T1"
        assert 1 <= case["observed_risk"] <= 6


def test_transitions_require_both_rounds(dataset):
    with pytest.raises(InvalidConfiguration):
        build_transitions({"R2": dataset["R2"]}, 42, settings={})


def test_exemplars_are_capped_deterministically():
    items = list(range(20))
    picked = select_exemplars(items, 5, 1, "few_shot_static")
    assert len(picked) == 5
    assert picked == select_exemplars(items, 5, 1, "few_shot_static")
    assert select_exemplars(items[:3], 5, 1, "x") == [0, 1, 2]
    assert select_exemplars(items, 0, 1, "x") == []


def test_static_strategy_report(dataset):
    specs = strategy_specs({})
    report = run_strategy(specs["few_shot_static"], dataset, SIM, Backend(),
                          settings={})

    assert report["reference_n"] == 10
    assert report["test_n"] == 20
    assert [r["behavior"] for r in report["rows"]] == behavior_ids()
    assert report["risk"] is None
    for row in report["rows"]:
        assert row["n_simulated"] == row["n_observed"] == 20
        assert sum(row["histogram"]["simulated"]) == 20
        assert row["passed"] == (row["p_value"] > 0.001)
    assert len(report["profiles"]) == 20 * len(behavior_ids())
    assert report["pass_rate"] == round(
        100.0 * sum(r["passed"] for r in report["rows"]) / 11, 1)


def test_strategy_without_admitted_behavior_is_degenerate(dataset):
    specs = strategy_specs({})
    backend = Backend()
    report = run_strategy(
        specs["transfer_static"], dataset, SIM, backend, settings={},
        priors={"few_shot_static": failing_prior("few_shot_static")})

    assert report["gating"]["degenerate"]
    assert report["gating"]["excluded"] == behavior_ids()
    assert report["rows"] == []
    assert report["pass_rate"] is None
    assert backend.requests == 0


def test_strategy_requires_its_priors(dataset):
    specs = strategy_specs({})
    with pytest.raises(InvalidStrategy) as x:
        run_strategy(specs["transfer_static"], dataset, SIM, Backend(),
                     settings={})
    assert "requires 'few_shot_static' to run first" in str(x.value)


def test_dynamic_chain_validates_risk_perception(dataset):
    reports = run_chain("zero_shot_dynamic", strategy_specs({}), dataset,
                        SIM, Backend(), settings={})
    assert list(reports) == ["zero_shot_static", "zero_shot_dynamic"]

    report = reports["zero_shot_dynamic"]
    assert report["gating"]["admitted"] == \
        gate(reports["zero_shot_static"])
    if report["gating"]["degenerate"]:
        assert report["rows"] == []
    else:
        assert report["risk"]["behavior"] == "risk_perception"
        assert report["risk"]["n_simulated"] == surveys.SECOND_WAVE
        assert len(report["risk"]["histogram"]["simulated"]) == 6


def test_chain_is_reproducible(tmp_path, dataset):
    specs = strategy_specs({})
    outputs = []
    for run in ("first", "second"):
        run_dir = tmp_path / run
        run_dir.mkdir()
        run_log = RunLog()
        reports = run_chain("few_shot_static", specs, dataset, SIM,
                            Backend(), run_log, settings={})
        write_validation(str(run_dir), reports)
        run_log.write(str(run_dir / "run-log.jsonl"))
        outputs.append({
            name: (run_dir / name).read_bytes()
            for name in sorted(os.listdir(str(run_dir)))
        })

    assert outputs[0] == outputs[1]
    assert "validation-few_shot_static.json" in outputs[0]


def test_grid_covers_every_condition(dataset):
    sim = dict(SIM, repetitions=1)
    rows = run_grid(None, dataset, sim, Backend(), settings={}, personas=1)
    assert len(rows) == 120
    assert len({r["condition"] for r in rows}) == 120
    assert all(r["personas"] == 1 for r in rows)
    assert {r["tier"] for r in rows} == {
        "NoPC", "RegularPC", "SelfHealthMonitoring", "Isolation"}
    for row in rows:
        for behavior in behavior_ids():
            assert 1 <= row[behavior] <= 5


def test_single_condition_grid(dataset):
    spec = {"cfr_levels": [0.015], "r0_levels": [3.0],
            "tiers": ["Isolation"]}
    rows = run_grid(spec, dataset, SIM, Backend(), settings={})
    assert len(rows) == 1
    assert rows[0]["condition"] == "cfr0.015_r03_Isolation"
    assert rows[0]["personas"] == surveys.SECOND_WAVE
    assert 1 <= rows[0]["mean_risk_level"] <= 6


def test_grid_requires_the_surveyed_round(dataset):
    with pytest.raises(InvalidConfiguration):
        run_grid(None, {"R1": dataset["R1"]}, SIM, Backend(), settings={})


def test_policy_relaxation(dataset):
    result = run_relaxation(dataset, SIM, Backend(), settings={},
                            personas=4)

    condition = result["condition"]
    assert condition["context"]["r0"] == 10.0
    assert condition["context"]["cfr"] == 0.0005
    assert condition["context"]["burden"]["kind"] == "qualitative"
    assert condition["measures"]["tier"] == "NoPC"
    assert set(condition["measures"]["interventions"].values()) == \
        {"Cancelled"}
    assert len(condition["measures"]["interventions"]) == 9

    assert [r["behavior"] for r in result["summary"]] == behavior_ids()
    for row in result["summary"]:
        assert 1 <= row["r1_mean"] <= 5
        assert 1 <= row["r2_mean"] <= 5
        assert 1 <= row["r3_mean"] <= 5
    assert set(result["themes"]) == set(behavior_ids())
    for table in result["themes"].values():
        assert set(table) == {"risk perception", "habit formation",
                              "official guidance", "cost"}
    assert len(result["profiles"]) == 4 * len(behavior_ids())
    assert set(result["risk"]) == {"r1_mean_level", "r2_mean_level",
                                   "r3_mean_level"}


def test_profile_rows_flatten_profiles():
    rows = profile_rows([{
        "persona": "R1-0001",
        "condition": "R1-C01-RegularPC",
        "risk": {"level": 4},
        "behaviors": {"hand_washing": {"mean_probability": 0.9,
                                       "likert": 5}}
    }])
    assert rows == [{
        "persona": "R1-0001", "condition": "R1-C01-RegularPC",
        "risk_level": 4, "behavior": "hand_washing",
        "mean_probability": 0.9, "likert": 5
    }]
