# -*- coding: utf-8 -*-
import os
from typing import Any, Dict

from logzero import logger

from ipbsim.exceptions import InvalidConfiguration
from ipbsim.types import Configuration

__all__ = ["load_configuration"]


def load_configuration(config_info: Dict[str, Any]) -> Configuration:
    """
    Resolve a configuration mapping. Each value is either used as-is or, when
    it is a dictionary with a `type` key set to `env`, fetched from the
    environment variable named by its `key`. An optional `default` is used
    when the variable is not set.

    Here is a sample of what the `backend` section looks like:

    ```
    {
        "endpoint": "https://api.openai.com/v1",
        "api_key": {
            "type": "env",
            "key": "OPENAI_API_KEY"
        }
    }
    ```

    Nested mappings without a `type` key are resolved recursively.
    """
    logger.debug("Loading configuration...")
    env = os.environ
    conf = {}

    for (key, value) in (config_info or {}).items():
        if isinstance(value, dict) and "type" in value:
            if value["type"] == "env":
                env_key = value["key"]
                if env_key not in env:
                    if "default" in value:
                        conf[key] = value["default"]
                        continue
                    raise InvalidConfiguration(
                        "Configuration makes reference to an environment key"
                        " that does not exist: {}".format(env_key))
                conf[key] = env.get(env_key)
            else:
                conf[key] = value
        elif isinstance(value, dict):
            conf[key] = load_configuration(value)
        else:
            conf[key] = value

    return conf
