# -*- coding: utf-8 -*-
"""
Completion backends. A backend turns a prompt into the raw text of a model
answer. Two kinds are supported:

* `live`: an OpenAI-compatible chat-completions endpoint over HTTP
* `mock`: a deterministic oracle that answers without any model

Both are reached through :class:`Backend`, which also enforces the cap on
in-flight requests shared by every caller of a given backend.
"""
from contextlib import contextmanager
from copy import deepcopy
from numbers import Number
import threading
import time
from typing import Iterator

from logzero import logger

from ipbsim.backend.http import complete_http
from ipbsim.backend.mock import mock_complete
from ipbsim.configuration import load_configuration
from ipbsim.exceptions import InvalidConfiguration
from ipbsim.types import BackendConfig, CompletionRequest, CompletionResult

__all__ = ["Backend", "DEFAULT_BACKEND", "ensure_backend_config_is_valid",
           "complete", "mock_complete"]

DEFAULT_BACKEND = {
    "type": "mock",
    "endpoint": "https://api.openai.com/v1",
    "model": "gpt-4o-2024-08-06",
    "api_key": {
        "type": "env",
        "key": "OPENAI_API_KEY",
        "default": None
    },
    # left to the endpoint default unless set
    "temperature": None,
    "max_tokens": None,
    "system_prompt": None,
    "send_seed": True,
    "max_concurrency": 10,
    "max_retries": 5,
    "backoff_base": 1.0,
    "backoff_cap": 60.0,
    "timeout": 120.0
}


def ensure_backend_config_is_valid(config: BackendConfig):
    """
    Validate a backend configuration and raise :exc:`InvalidConfiguration`
    when it does not respect the expectations.
    """
    backend_type = config.get("type")
    if backend_type not in ("live", "mock"):
        raise InvalidConfiguration(
            "unknown backend type '{}', expected 'live' or 'mock'".format(
                backend_type))

    cap = config.get("max_concurrency")
    if isinstance(cap, bool) or not isinstance(cap, int) or cap < 1:
        raise InvalidConfiguration(
            "backend max_concurrency must be an integer >= 1")

    retries = config.get("max_retries")
    if isinstance(retries, bool) or not isinstance(retries, int) or \
            retries < 0:
        raise InvalidConfiguration(
            "backend max_retries must be an integer >= 0")

    temperature = config.get("temperature")
    if temperature is not None and (
            not isinstance(temperature, Number) or temperature < 0):
        raise InvalidConfiguration("backend temperature must be >= 0")

    for key in ("backoff_base", "backoff_cap", "timeout"):
        value = config.get(key)
        if not isinstance(value, Number) or value < 0:
            raise InvalidConfiguration(
                "backend {} must be a non-negative duration".format(key))

    if backend_type == "live":
        if not config.get("endpoint"):
            raise InvalidConfiguration("a live backend requires an endpoint")
        if not config.get("model"):
            raise InvalidConfiguration("a live backend requires a model")


class Backend:
    """
    A shareable completion backend. Any number of threads may call
    :meth:`complete` concurrently, at most `max_concurrency` requests are in
    flight at any instant.
    """

    def __init__(self, config: BackendConfig = None):
        merged = deepcopy(DEFAULT_BACKEND)
        merged.update(config or {})
        self.config = load_configuration(merged)
        ensure_backend_config_is_valid(self.config)

        self._slots = threading.BoundedSemaphore(
            self.config["max_concurrency"])
        self._lock = threading.Lock()
        self.in_flight = 0
        self.peak_in_flight = 0
        self.requests = 0
        logger.debug("Using the {} backend (model '{}', max {} in flight)"
                     .format(self.config["type"], self.config["model"],
                             self.config["max_concurrency"]))

    @property
    def kind(self) -> str:
        return self.config["type"]

    @contextmanager
    def slot(self) -> Iterator[None]:
        """
        Hold one of the in-flight slots for the duration of the block.
        """
        self._slots.acquire()
        with self._lock:
            self.in_flight += 1
            self.requests += 1
            self.peak_in_flight = max(self.peak_in_flight, self.in_flight)
        try:
            yield
        finally:
            with self._lock:
                self.in_flight -= 1
            self._slots.release()

    def complete(self, request: CompletionRequest) -> CompletionResult:
        """
        Complete the prompt of `request` and return the model text verbatim
        along with usage metadata, the number of attempts and the latency.
        """
        if self.kind == "mock":
            with self.slot():
                started = time.monotonic()
                result = mock_complete(request, request.get("seed"))
                result["latency"] = time.monotonic() - started
            return result

        return complete_http(request, self.config, self.slot)

    def metadata(self) -> dict:
        """
        Provenance of the completions, recorded in run metadata. Secrets are
        never part of it.
        """
        return {
            "type": self.kind,
            "model": self.config["model"] if self.kind == "live" else "mock",
            "endpoint": self.config["endpoint"]
            if self.kind == "live" else None,
            "temperature": self.config.get("temperature"),
            "max_tokens": self.config.get("max_tokens"),
            "max_concurrency": self.config["max_concurrency"],
            "max_retries": self.config["max_retries"],
            "backoff_base": self.config["backoff_base"]
        }


def complete(request: CompletionRequest,
             config: BackendConfig = None) -> CompletionResult:
    """
    One-off completion through a throw-away backend.
    """
    return Backend(config).complete(request)
