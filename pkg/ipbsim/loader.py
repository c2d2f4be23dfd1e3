# -*- coding: utf-8 -*-
"""
Experiment definitions: declarative files naming the strategies, dataset
files, seeds and grid levels of a run, for instance:

```yaml
title: Few-shot on the first wave
configuration:
  wave: R1
datasets:
  R1: surveys/r1.csv
  R2: surveys/r2.csv
simulation:
  repetitions: 10
strategies:
  few_shot_static:
    test:
      round: ${wave}
grid:
  r0_levels: [2, 5]
```

Values of the `configuration` section, after environment references are
resolved, replace the `${name}` forms of the rest of the definition.
"""
import io
import json
import os.path
from urllib.parse import urlparse

from logzero import logger
import requests
import yaml

from ipbsim import substitute
from ipbsim.configuration import load_configuration
from ipbsim.exceptions import InvalidSource
from ipbsim.types import Experiment, Settings

__all__ = ["load_experiment", "ensure_experiment_is_valid"]

SECTIONS = ("title", "description", "configuration", "datasets",
            "simulation", "strategies", "grid", "relax", "seed")


def parse_experiment_from_file(path: str) -> Experiment:
    """
    Parse the given experiment from `path` and return it.
    """
    with io.open(path, encoding="utf-8") as f:
        p, ext = os.path.splitext(path)
        if ext in (".yaml", ".yml"):
            try:
                return yaml.safe_load(f)
            except yaml.YAMLError as ye:
                raise InvalidSource(
                    "Failed parsing YAML experiment: {}".format(str(ye)))
        elif ext == ".json":
            try:
                return json.load(f)
            except ValueError as x:
                raise InvalidSource(
                    "Failed parsing JSON experiment: {}".format(str(x)))

    raise InvalidSource(
        "only files with json, yaml or yml extensions are supported")


def parse_experiment_from_http(response: requests.Response) -> Experiment:
    content_type = response.headers.get("Content-Type") or ""

    if 'application/json' in content_type:
        return response.json()
    elif 'application/x-yaml' in content_type or 'text/yaml' in content_type:
        try:
            return yaml.safe_load(response.text)
        except yaml.YAMLError as ye:
            raise InvalidSource(
                "Failed parsing YAML experiment: {}".format(str(ye)))
    elif 'text/plain' in content_type:
        content = response.text
        try:
            return json.loads(content)
        except ValueError:
            try:
                return yaml.safe_load(content)
            except yaml.YAMLError:
                pass

    raise InvalidSource(
        "only json or yaml experiment definitions are supported")


def ensure_experiment_is_valid(experiment: Experiment):
    """
    Raise :exc:`InvalidSource` when an experiment definition is not a
    mapping, has no title or declares unknown sections.
    """
    if not isinstance(experiment, dict):
        raise InvalidSource("an experiment definition must be a mapping")
    if not experiment.get("title"):
        raise InvalidSource("an experiment definition requires a title")

    unknown = sorted(set(experiment) - set(SECTIONS))
    if unknown:
        raise InvalidSource(
            "unknown experiment section(s): {}".format(", ".join(unknown)))

    for section in ("datasets", "simulation", "strategies", "grid",
                    "relax", "configuration"):
        value = experiment.get(section)
        if value is not None and not isinstance(value, dict):
            raise InvalidSource(
                "experiment section '{}' must be a mapping".format(section))


def load_experiment(experiment_source: str,
                    settings: Settings = None) -> Experiment:
    """
    Load an experiment definition from a local file or a HTTP(s) URL. If the
    endpoint requires authentication, set the matching entry under the
    `auths` section of the settings, keyed by domain:

    ```yaml
    auths:
      mydomain.com:
        type: bearer
        value: XYZ
    ```
    """
    if os.path.exists(experiment_source):
        parsed = parse_experiment_from_file(experiment_source)
    else:
        p = urlparse(experiment_source)
        if not p.scheme and not os.path.exists(p.path):
            raise InvalidSource('Path "{}" does not exist.'.format(p.path))

        if p.scheme not in ("http", "https"):
            raise InvalidSource(
                "'{}' is not a supported source scheme.".format(p.scheme))

        headers = {
            "Accept": "application/json, application/x-yaml"
        }
        auths = (settings or {}).get("auths") or {}
        auth = auths.get(p.netloc)
        if auth:
            headers["Authorization"] = '{} {}'.format(
                auth["type"], auth["value"])

        r = requests.get(experiment_source, headers=headers)
        if r.status_code != 200:
            raise InvalidSource(
                "Failed to fetch the experiment: {}".format(r.text))

        logger.debug("Fetched experiment: \n{}".format(r.text))
        parsed = parse_experiment_from_http(r)

    ensure_experiment_is_valid(parsed)
    configuration = load_configuration(parsed.get("configuration") or {})
    experiment = substitute(
        {k: v for k, v in parsed.items() if k != "configuration"},
        configuration)
    experiment["configuration"] = configuration
    logger.info("Loaded experiment: {}".format(experiment["title"]))
    return experiment
