# -*- coding: utf-8 -*-

EmptyConfig = {}

SomeConfig = {
    "name": "Jane",
    "age": 34,
    "path": {
        "type": "env",
        "key": "PATH"
    }
}

MockBackend = {
    "type": "mock"
}

LiveBackend = {
    "type": "live",
    "endpoint": "http://localhost:8000/v1",
    "model": "gpt-4o-2024-08-06",
    "api_key": "sk-test",
    "max_retries": 2,
    "backoff_base": 0.0,
    "backoff_cap": 0.0,
    "timeout": 5.0
}

FastSimulation = {
    "repetitions": 2,
    "seed": 42,
    "parse_retries": 2,
    "exemplar_limit": 5,
    "workers": 4
}
