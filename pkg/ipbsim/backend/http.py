# -*- coding: utf-8 -*-
import time
from typing import Any, Callable, ContextManager, Dict

from logzero import logger
import requests

from ipbsim.exceptions import BackendTimeout, PermanentBackendFailure, \
    TransientBackendFailure
from ipbsim.types import BackendConfig, CompletionRequest, CompletionResult


__all__ = ["complete_http", "backoff_delay", "build_payload"]

RETRYABLE_STATUSES = (429, 500, 502, 503, 504)


def backoff_delay(attempt: int, config: BackendConfig) -> float:
    """
    Delay to wait after the failed attempt of index `attempt` (0-based):
    `base * 2 ** attempt`, capped. No jitter is applied so retries are
    reproducible.
    """
    return min(config["backoff_base"] * (2 ** attempt), config["backoff_cap"])


def build_payload(request: CompletionRequest,
                  config: BackendConfig) -> Dict[str, Any]:
    """
    Build the chat-completions payload. Per-request `overrides` win over
    the backend configuration.
    """
    overrides = request.get("overrides") or {}
    messages = []
    system_prompt = overrides.get("system_prompt", config.get("system_prompt"))
    if system_prompt:
        messages.append({"role": "system", "content": system_prompt})
    messages.append({"role": "user", "content": request["prompt"]})

    payload = {
        "model": overrides.get("model", config["model"]),
        "messages": messages
    }
    temperature = overrides.get("temperature", config.get("temperature"))
    if temperature is not None:
        payload["temperature"] = temperature
    max_tokens = overrides.get("max_tokens", config.get("max_tokens"))
    if max_tokens is not None:
        payload["max_tokens"] = max_tokens
    if config.get("send_seed") and request.get("seed") is not None:
        payload["seed"] = request["seed"]
    return payload


def complete_http(request: CompletionRequest, config: BackendConfig,
                  slot: Callable[[], ContextManager]) -> CompletionResult:
    """
    Complete a prompt against an OpenAI-compatible chat-completions endpoint.

    Rate-limited (429), server-side (5xx) and connection failures are retried
    up to `max_retries` times, waiting `base * 2 ** k` seconds after the
    k-th failed attempt. Every attempt holds one of the backend's in-flight
    slots, waits between attempts do not.

    Raises :exc:`TransientBackendFailure` when retries are exhausted,
    :exc:`PermanentBackendFailure` on any other 4xx answer and
    :exc:`BackendTimeout` when the endpoint does not answer in time.
    """
    url = "{}/chat/completions".format(config["endpoint"].rstrip("/"))
    headers = {"Content-Type": "application/json"}
    if config.get("api_key"):
        headers["Authorization"] = "Bearer {}".format(config["api_key"])
    payload = build_payload(request, config)
    max_attempts = config["max_retries"] + 1
    started = time.monotonic()

    last_error = None
    for attempt in range(max_attempts):
        if attempt:
            delay = backoff_delay(attempt - 1, config)
            logger.debug("Retrying in {:.3f}s (attempt {}/{})".format(
                delay, attempt + 1, max_attempts))
            time.sleep(delay)

        with slot():
            try:
                with requests.Session() as s:
                    r = s.post(url, json=payload, headers=headers,
                               timeout=config["timeout"])
            except requests.exceptions.Timeout:
                raise BackendTimeout(
                    "completion took more than {}s".format(config["timeout"]))
            except requests.exceptions.ConnectionError as cex:
                last_error = "failed to connect to {u}: {x}".format(
                    u=url, x=str(cex))
                logger.warning(last_error)
                continue

        if r.status_code in RETRYABLE_STATUSES:
            last_error = "endpoint answered {}: {}".format(
                r.status_code, r.text[:200])
            logger.warning(
                "Completion attempt {} was rejected with status {}".format(
                    attempt + 1, r.status_code))
            continue

        if r.status_code > 399:
            raise PermanentBackendFailure(
                "endpoint answered {}: {}".format(r.status_code, r.text))

        try:
            body = r.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise PermanentBackendFailure(
                "endpoint answered with an unexpected payload: {}".format(
                    r.text[:200]))

        return {
            "text": text,
            "usage": body.get("usage") or {},
            "model": body.get("model", payload["model"]),
            "attempts": attempt + 1,
            "latency": time.monotonic() - started
        }

    raise TransientBackendFailure(
        "completion failed after {} attempts: {}".format(
            max_attempts, last_error))
