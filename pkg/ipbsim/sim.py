# -*- coding: utf-8 -*-
"""
Simulation orchestration.

A static simulation asks the backend `repetitions` times, with distinct
repetition seeds, for the probability a persona carries out each behavior,
averages the probabilities and discretizes the mean once onto the 5-point
scale. A dynamic simulation first updates the persona's risk perception from
T1 to T2 the same way and then runs the static simulation at T2 with it.

Every completion, parsed or not, is appended to a :class:`RunLog` so the
aggregates can be recomputed from the log alone.
"""
from concurrent.futures import ThreadPoolExecutor
from copy import deepcopy
import hashlib
import io
import json
import math
import threading
from typing import Any, Callable, Dict, List, Sequence, Tuple

from logzero import logger

from ipbsim.backend import Backend
from ipbsim.domain import BEHAVIOR_POINTS, RISK_POINTS, behavior_ids, \
    discretize, ensure_condition_is_valid
from ipbsim.exceptions import BackendError, DomainError, \
    InvalidConfiguration, ResponseParseError, SimulationFailed
from ipbsim.prompt import build_dynamic_prompt, build_static_prompt, \
    format_reminder, parse_dynamic_response, parse_static_response
from ipbsim.seeding import derive_seed
from ipbsim.settings import get_loaded_settings
from ipbsim.types import BehaviorProfile, EpidemicCondition, Exemplar, \
    Persona, RiskPerception, Settings, SimConfig, Transition

__all__ = ["simulate_static", "update_risk", "simulate_dynamic",
           "simulate_cohort", "simulate_transitions", "RunLog",
           "replay_profile", "replay_risk", "repetition_seed",
           "transition_label", "ensure_sim_config_is_valid",
           "ensure_transition_is_valid", "DEFAULT_SIM"]

DEFAULT_SIM = {
    "repetitions": 10,
    "seed": 0,
    "parse_retries": 2,
    "exemplar_limit": 10,
    "workers": 10
}


class RunLog:
    """
    Append-only record of every completion of a run. Safe to share between
    threads. Records are kept in memory and written as JSON-lines, sorted so
    the file does not depend on completion order.
    """

    def __init__(self, records: List[Dict[str, Any]] = None,
                 scope: str = None):
        self._records = list(records or [])
        self._lock = threading.Lock()
        self.scope = scope

    def scoped(self, scope: str) -> "RunLog":
        """
        A view of this log tagging the records it receives with `scope`,
        such as the strategy they were produced for.
        """
        view = RunLog(scope=scope)
        view._records = self._records
        view._lock = self._lock
        return view

    def __len__(self) -> int:
        return len(self._records)

    def append(self, record: Dict[str, Any]):
        record = dict(record, scope=self.scope)
        with self._lock:
            self._records.append(record)

    def records(self) -> List[Dict[str, Any]]:
        with self._lock:
            return sorted(self._records, key=_record_key)

    def write(self, path: str):
        with io.open(path, "w", encoding="utf-8") as f:
            for record in self.records():
                f.write(json.dumps(record, sort_keys=True))
                f.write("\n")
        logger.debug("Wrote {} run log records to '{}'".format(
            len(self), path))

    @staticmethod
    def load(path: str) -> "RunLog":
        with io.open(path, encoding="utf-8") as f:
            return RunLog([json.loads(line) for line in f if line.strip()])


def ensure_sim_config_is_valid(config: SimConfig):
    """
    Raise :exc:`InvalidConfiguration` when the simulation settings are not
    usable.
    """
    for key, lowest in (("repetitions", 1), ("parse_retries", 0),
                        ("exemplar_limit", 0), ("workers", 1)):
        value = config.get(key)
        if isinstance(value, bool) or not isinstance(value, int) or \
                value < lowest:
            raise InvalidConfiguration(
                "simulation {} must be an integer >= {}".format(key, lowest))

    seed = config.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise InvalidConfiguration("simulation seed must be an integer")


def ensure_transition_is_valid(transition: Transition):
    if not transition.get("persona"):
        raise DomainError("a transition requires a persona")
    ensure_condition_is_valid(transition.get("condition_t1") or {})
    ensure_condition_is_valid(transition.get("condition_t2") or {})
    risk = transition.get("risk_t1") or {}
    if risk.get("round") != "T1":
        raise DomainError("the starting risk perception must be tagged T1")


def repetition_seed(master: int, persona_id: str, condition_label: str,
                    kind: str, repetition: int) -> int:
    return derive_seed(master, persona_id, condition_label, kind, repetition)


def transition_label(transition: Transition) -> str:
    return "{}=>{}".format(transition["condition_t1"]["label"],
                           transition["condition_t2"]["label"])


def simulate_static(persona: Persona, condition: EpidemicCondition,
                    risk: RiskPerception, exemplars: Sequence[Exemplar],
                    config: SimConfig = None, backend: Backend = None,
                    run_log: RunLog = None,
                    settings: Settings = None) -> BehaviorProfile:
    """
    Simulate the behavior profile of a persona under a condition.

    The profile holds, per behavior, the mean probability over the
    repetitions, its 5-point discretization and every repetition's
    rationale. Raises :exc:`SimulationFailed` naming the persona, condition
    and repetition when one repetition cannot be completed.
    """
    settings = settings if settings is not None else get_loaded_settings()
    config = _sim_config(config)
    backend = backend or Backend(settings.get("backend"))
    ensure_condition_is_valid(condition)

    prompt = build_static_prompt({
        "persona": persona,
        "condition": condition,
        "risk": risk,
        "exemplars": exemplars
    }, settings)

    responses = _repeat(
        "static", prompt, persona["id"], condition["label"], config, backend,
        run_log, lambda text: parse_static_response(text, settings))

    return aggregate_static(
        persona["id"], condition["label"], risk, responses, settings)


def update_risk(transition: Transition, exemplars: Sequence[Exemplar],
                config: SimConfig = None, backend: Backend = None,
                run_log: RunLog = None,
                settings: Settings = None) -> RiskPerception:
    """
    Update the risk perception of the persona of `transition` from T1 to T2.
    The T2 score is the mean of the repetitions' scores, its level the
    6-point discretization of that mean.
    """
    settings = settings if settings is not None else get_loaded_settings()
    config = _sim_config(config)
    backend = backend or Backend(settings.get("backend"))
    ensure_transition_is_valid(transition)

    persona = transition["persona"]
    prompt = build_dynamic_prompt({
        "persona": persona,
        "shift": (transition["condition_t1"], transition["condition_t2"]),
        "risk_t1": transition["risk_t1"],
        "exemplars": exemplars
    }, settings)

    responses = _repeat(
        "dynamic", prompt, persona["id"], transition_label(transition),
        config, backend, run_log, parse_dynamic_response)
    return aggregate_risk(responses)


def simulate_dynamic(transition: Transition,
                     static_exemplars: Sequence[Exemplar],
                     dynamic_exemplars: Sequence[Exemplar],
                     config: SimConfig = None, backend: Backend = None,
                     run_log: RunLog = None,
                     settings: Settings = None) -> Tuple[RiskPerception,
                                                         BehaviorProfile]:
    """
    Update the risk perception of a persona then simulate its behaviors at
    T2 with it. The profile is exactly what :func:`simulate_static` returns
    when called with the T2 condition and risk.
    """
    risk_t2 = update_risk(
        transition, dynamic_exemplars, config, backend, run_log, settings)
    profile = simulate_static(
        transition["persona"], transition["condition_t2"], risk_t2,
        static_exemplars, config, backend, run_log, settings)
    return risk_t2, profile


def simulate_cohort(jobs: Sequence[Dict[str, Any]], config: SimConfig = None,
                    backend: Backend = None, run_log: RunLog = None,
                    settings: Settings = None) -> List[BehaviorProfile]:
    """
    Run many static simulations concurrently. Each job is a mapping of the
    `persona`, `condition`, `risk` and `exemplars` to simulate. Profiles come
    back in the order of the jobs.
    """
    settings = settings if settings is not None else get_loaded_settings()
    config = _sim_config(config)
    backend = backend or Backend(settings.get("backend"))

    def run(job):
        return simulate_static(
            job["persona"], job["condition"], job["risk"],
            job.get("exemplars") or [], config, backend, run_log, settings)

    return _map(run, jobs, config)


def simulate_transitions(transitions: Sequence[Transition],
                         static_exemplars: Sequence[Exemplar],
                         dynamic_exemplars: Sequence[Exemplar],
                         config: SimConfig = None, backend: Backend = None,
                         run_log: RunLog = None,
                         settings: Settings = None) -> List[Tuple[
                             RiskPerception, BehaviorProfile]]:
    settings = settings if settings is not None else get_loaded_settings()
    config = _sim_config(config)
    backend = backend or Backend(settings.get("backend"))

    def run(transition):
        return simulate_dynamic(
            transition, static_exemplars, dynamic_exemplars, config, backend,
            run_log, settings)

    return _map(run, transitions, config)


def aggregate_static(persona_id: str, condition_label: str,
                     risk: RiskPerception,
                     responses: Sequence[Dict[str, Any]],
                     settings: Settings = None) -> BehaviorProfile:
    behaviors = {}
    for behavior in behavior_ids(settings):
        probabilities = [r["probabilities"][behavior] for r in responses]
        mean = _mean(probabilities)
        behaviors[behavior] = {
            "mean_probability": mean,
            "likert": discretize(mean, BEHAVIOR_POINTS),
            "rationales": [r["rationales"][behavior] for r in responses]
        }

    return {
        "persona": persona_id,
        "condition": condition_label,
        "repetitions": len(responses),
        "risk": deepcopy(risk),
        "behaviors": behaviors
    }


def aggregate_risk(responses: Sequence[Dict[str, Any]]) -> RiskPerception:
    score = _mean([r["risk_score"] for r in responses])
    return {
        "score": score,
        "level": discretize(score, RISK_POINTS),
        "round": "T2"
    }


def replay_profile(records: Sequence[Dict[str, Any]], persona_id: str,
                   condition_label: str, risk: RiskPerception = None,
                   settings: Settings = None,
                   scope: str = None) -> BehaviorProfile:
    """
    Recompute a behavior profile from run log records alone, re-parsing the
    raw text of the successful attempt of each repetition.
    """
    texts = _replayable(
        records, "static", persona_id, condition_label, scope)
    responses = [parse_static_response(t, settings) for t in texts]
    return aggregate_static(
        persona_id, condition_label, risk, responses, settings)


def replay_risk(records: Sequence[Dict[str, Any]], persona_id: str,
                label: str, scope: str = None) -> RiskPerception:
    texts = _replayable(records, "dynamic", persona_id, label, scope)
    return aggregate_risk([parse_dynamic_response(t) for t in texts])


###############################################################################
# Internal functions
###############################################################################
def _sim_config(config: SimConfig = None) -> SimConfig:
    merged = dict(DEFAULT_SIM)
    merged.update(config or {})
    ensure_sim_config_is_valid(merged)
    return merged


def _mean(values: Sequence[float]) -> float:
    # fsum keeps the mean within the bounds of the values
    mean = math.fsum(values) / len(values)
    return min(max(mean, min(values)), max(values))


def _map(func: Callable, items: Sequence[Any], config: SimConfig) -> List:
    if not items:
        return []
    with ThreadPoolExecutor(min(config["workers"], len(items))) as pool:
        futures = [pool.submit(func, item) for item in items]
        return [f.result() for f in futures]


def _repeat(kind: str, prompt: str, persona_id: str, label: str,
            config: SimConfig, backend: Backend, run_log: RunLog,
            parse: Callable[[str], Dict[str, Any]]) -> List[Dict[str, Any]]:
    repetitions = config["repetitions"]
    logger.debug("Simulating {} '{}' under '{}' ({} repetitions)".format(
        kind, persona_id, label, repetitions))

    def run(k: int) -> Dict[str, Any]:
        seed = repetition_seed(config["seed"], persona_id, label, kind, k)
        return _complete(kind, prompt, seed, k, persona_id, label, config,
                         backend, run_log, parse)

    # results are keyed by repetition index, never by completion order
    workers = min(repetitions, backend.config["max_concurrency"])
    with ThreadPoolExecutor(workers) as pool:
        futures = {k: pool.submit(run, k) for k in range(repetitions)}
        return [futures[k].result() for k in range(repetitions)]


def _complete(kind: str, prompt: str, seed: int, repetition: int,
              persona_id: str, label: str, config: SimConfig,
              backend: Backend, run_log: RunLog,
              parse: Callable[[str], Dict[str, Any]]) -> Dict[str, Any]:
    where = "persona '{}' under '{}', repetition {}".format(
        persona_id, label, repetition)
    text = prompt
    attempts = config["parse_retries"] + 1

    for attempt in range(attempts):
        record = {
            "kind": kind,
            "persona": persona_id,
            "condition": label,
            "repetition": repetition,
            "attempt": attempt,
            "seed": seed,
            "prompt_hash": hashlib.sha256(
                text.encode("utf-8")).hexdigest(),
            "raw": None,
            "parsed": None,
            "error": None
        }
        try:
            result = backend.complete({"prompt": text, "seed": seed})
        except BackendError as x:
            record["error"] = str(x)
            _log(run_log, record)
            raise SimulationFailed(
                "{} {} failed: {}".format(kind, where, str(x))) from x

        record["raw"] = result["text"]
        try:
            parsed = parse(result["text"])
        except ResponseParseError as x:
            record["error"] = str(x)
            _log(run_log, record)
            logger.warning("Could not read the answer for {} ({}), "
                           "attempt {}/{}".format(
                               where, str(x), attempt + 1, attempts))
            text = prompt + format_reminder(kind, str(x))
            continue

        record["parsed"] = parsed
        _log(run_log, record)
        return parsed

    raise SimulationFailed(
        "{} {} could not be parsed after {} attempts".format(
            kind, where, attempts))


def _log(run_log: RunLog, record: Dict[str, Any]):
    if run_log is not None:
        run_log.append(record)


def _record_key(record: Dict[str, Any]) -> Tuple:
    return (record.get("scope") or "", record["kind"], record["persona"],
            record["condition"], record["repetition"], record["attempt"],
            record["prompt_hash"], record["raw"] or "")


def _replayable(records: Sequence[Dict[str, Any]], kind: str,
                persona_id: str, label: str,
                scope: str = None) -> List[str]:
    texts = {}
    for record in records:
        if scope is not None and record.get("scope") != scope:
            continue
        if record["kind"] != kind or record["persona"] != persona_id or \
                record["condition"] != label or record["parsed"] is None:
            continue
        texts[record["repetition"]] = record["raw"]

    if not texts:
        raise DomainError(
            "the run log holds no {} completion for '{}' under '{}'".format(
                kind, persona_id, label))
    return [texts[k] for k in sorted(texts)]
