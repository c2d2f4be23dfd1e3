# -*- coding: utf-8 -*-
import json
import tempfile

import pytest
import requests_mock

from ipbsim.exceptions import InvalidSource
from ipbsim.loader import ensure_experiment_is_valid, load_experiment, \
    parse_experiment_from_file
from ipbsim.types import Settings

from fixtures import experiments


def test_load_from_file(generic_experiment: str):
    experiment = load_experiment(generic_experiment)
    assert experiment["title"] == "Few-shot on the first wave"
    assert experiment["strategies"]["few_shot_static"]["test"]["round"] == \
        "R1"
    assert experiment["configuration"]["wave"] == "R1"
    assert experiment["seed"] == 7


def test_load_invalid_filepath():
    with pytest.raises(InvalidSource) as x:
        load_experiment("/tmp/xyuzye.txt")
    assert 'Path "/tmp/xyuzye.txt" does not exist.' in str(x.value)


def test_only_json_and_yaml_files_are_supported():
    with tempfile.NamedTemporaryFile(suffix=".toml") as f:
        f.write(b"title = 'nope'")
        f.seek(0)
        with pytest.raises(InvalidSource):
            parse_experiment_from_file(f.name)


@pytest.mark.parametrize("experiment,message", [
    (experiments.EmptyExperiment, "requires a title"),
    (experiments.MissingTitleExperiment, "requires a title"),
    (experiments.UnknownSectionExperiment, "unknown experiment section"),
    ({"title": "t", "grid": [1, 2]}, "'grid' must be a mapping"),
    ([1, 2], "must be a mapping"),
])
def test_invalid_experiments(experiment, message: str):
    with pytest.raises(InvalidSource) as x:
        ensure_experiment_is_valid(experiment)
    assert message in str(x.value)


def test_load_from_http_without_auth():
    with requests_mock.mock() as m:
        m.get(
            'http://example.com/experiment.json', status_code=200,
            headers={"Content-Type": "application/json"},
            json=experiments.Experiment
        )
        experiment = load_experiment('http://example.com/experiment.json')
    assert experiment["grid"]["tiers"] == ["RegularPC"]


def test_load_from_http_with_missing_auth():
    with requests_mock.mock() as m:
        m.get('http://example.com/experiment.json', status_code=401)
        with pytest.raises(InvalidSource):
            load_experiment('http://example.com/experiment.json')


def test_load_from_http_with_auth(settings: Settings):
    with requests_mock.mock() as m:
        m.get(
            'http://example.com/experiment.json', status_code=200,
            request_headers={
                "Authorization": "bearer XYZ",
                "Accept": "application/json, application/x-yaml"
            },
            headers={"Content-Type": "application/json"},
            json=experiments.Experiment)
        experiment = load_experiment(
            'http://example.com/experiment.json', settings)
    assert experiment["title"] == "Few-shot on the first wave"


def test_unsupported_scheme():
    with pytest.raises(InvalidSource) as x:
        load_experiment('ftp://example.com/experiment.json')
    assert "'ftp' is not a supported source scheme." in str(x.value)


def test_yaml_safe_load_from_file():
    with tempfile.NamedTemporaryFile(suffix=".yaml") as f:
        f.write(experiments.UnsafeYamlExperiment.encode('utf-8'))
        f.seek(0)

        with pytest.raises(InvalidSource):
            parse_experiment_from_file(f.name)


def test_yaml_safe_load_from_http():
    with requests_mock.mock() as m:
        m.get(
            'http://example.com/experiment.yaml', status_code=200,
            headers={"Content-Type": "application/x-yaml"},
            text=experiments.UnsafeYamlExperiment
        )
        with pytest.raises(InvalidSource):
            load_experiment('http://example.com/experiment.yaml')


def test_can_load_yaml_from_plain_text_http():
    with requests_mock.mock() as m:
        m.get(
            'http://example.com/experiment.yaml', status_code=200,
            headers={"Content-Type": "text/plain; charset=utf-8"},
            text=experiments.YamlExperiment
        )
        experiment = load_experiment('http://example.com/experiment.yaml')
    assert experiment["strategies"]["few_shot_static"]["test"]["round"] == \
        "R1"
    assert experiment["grid"]["r0_levels"] == [2, 5]


def test_can_load_json_from_plain_text_http():
    with requests_mock.mock() as m:
        m.get(
            'http://example.com/experiment.json', status_code=200,
            headers={"Content-Type": "text/plain; charset=utf-8"},
            text=json.dumps(experiments.Experiment)
        )
        experiment = load_experiment('http://example.com/experiment.json')
    assert experiment["simulation"] == {"repetitions": 2}


def test_http_loads_fails_when_known_type():
    with requests_mock.mock() as m:
        m.get(
            'http://example.com/experiment.yaml', status_code=200,
            headers={"Content-Type": "text/css"},
            text="body {}"
        )
        with pytest.raises(InvalidSource):
            load_experiment('http://example.com/experiment.yaml')
