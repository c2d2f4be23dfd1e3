# -*- coding: utf-8 -*-
import os
import os.path

import contextvars
from logzero import logger
import yaml

from ipbsim.types import Settings

__all__ = ["get_loaded_settings", "load_settings", "save_settings",
           "apply_env_overrides"]
IPBSIM_CONFIG_PATH = os.path.abspath(
    os.path.expanduser("~/.ipbsim/settings.yaml"))
loaded_settings = contextvars.ContextVar('loaded_settings', default={})

# environment variable -> top-level settings key
ENV_OVERRIDES = {
    "IPBSIM_SEED": ("seed", int),
    "IPBSIM_BACKEND": ("backend.type", str),
}


def load_settings(settings_path: str = IPBSIM_CONFIG_PATH) -> Settings:
    """
    Load the harness settings as a mapping of key/values or return `None`
    when the file could not be found or is not valid YAML.
    """
    if not os.path.exists(settings_path):
        logger.debug("The ipbsim settings file could not be found at "
                     "'{c}'.".format(c=settings_path))
        return

    with open(settings_path) as f:
        try:
            settings = yaml.safe_load(f.read()) or {}
        except yaml.YAMLError as ye:
            logger.error("Failed parsing YAML settings: {}".format(str(ye)))
            return

    settings = apply_env_overrides(settings)
    loaded_settings.set(settings)
    return settings


def apply_env_overrides(settings: Settings) -> Settings:
    """
    Override a few settings from the environment, the seed and the backend
    kind mostly, so a CI job can reuse a committed settings file.
    """
    for env_key, (path, cast) in ENV_OVERRIDES.items():
        value = os.environ.get(env_key)
        if value is None:
            continue
        logger.debug("Settings '{}' overridden from ${}".format(path, env_key))
        target = settings
        keys = path.split(".")
        for key in keys[:-1]:
            target = target.setdefault(key, {})
        target[keys[-1]] = cast(value)
    return settings


def save_settings(settings: Settings,
                  settings_path: str = IPBSIM_CONFIG_PATH):
    """
    Save the harness settings as a mapping of key/values, overwriting any file
    that may already be present.
    """
    loaded_settings.set(settings)
    settings_dir = os.path.dirname(settings_path)
    if settings_dir and not os.path.isdir(settings_dir):
        os.makedirs(settings_dir)

    with open(settings_path, 'w') as outfile:
        yaml.safe_dump(settings, outfile, default_flow_style=False)


def get_loaded_settings() -> Settings:
    """
    Settings that have been loaded in the current context.
    """
    return loaded_settings.get()
