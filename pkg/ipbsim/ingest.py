# -*- coding: utf-8 -*-
"""
Survey ingestion: load survey-shaped resident records from CSV, enrich them
into personas the prompts can speak for and aggregate community enforcement
intensities.

The canonical CSV is UTF-8 with a header row made of, in this order:

* `participant_id`, `round` (`R1` or `R2`), `age_range` (`lo-hi`),
  `gender`, `education`, `occupation`, `community_id`, `measure_tier`
  (one of the control tiers) and `enforcement_score` (the resident's answer
  to the enforcement strictness scale, 1 to 5)
* `risk_pathway_1` to `risk_pathway_4` and `risk_scenario_1` to
  `risk_scenario_10`, the 6-point risk perception items
* one 5-point column per behavior, named after the behavior id
"""
from fractions import Fraction
import io
import math
import os.path
import re
from typing import Dict, Iterable, List, Sequence

from logzero import logger
import numpy as np
import pandas as pd

from ipbsim import decode_bytes
from ipbsim.domain import BEHAVIOR_POINTS, RISK_POINTS, TIERS, \
    TIER_DEFAULT_INTENSITY, behavior_ids
from ipbsim.exceptions import DomainError, InvalidConfiguration, \
    InvalidSurvey
from ipbsim.seeding import derive_seed, rng_for
from ipbsim.types import Persona, RiskPerception, SurveyRecord

__all__ = ["load_survey", "write_survey", "concretize_age",
           "assign_virtual_name", "assign_virtual_names", "load_name_corpus",
           "community_intensity", "community_intensities",
           "risk_level_from_survey", "enrich", "synthetic_survey",
           "survey_columns"]

BASE_COLUMNS = ["participant_id", "round", "age_range", "gender",
                "education", "occupation", "community_id", "measure_tier",
                "enforcement_score"]
RISK_COLUMNS = ["risk_pathway_{}".format(i) for i in range(1, 5)] + \
    ["risk_scenario_{}".format(i) for i in range(1, 11)]
DEMOGRAPHICS = ("age_range", "gender", "education", "occupation",
                "community_id")
ROUNDS = ("R1", "R2")
DEFAULT_CORPUS = os.path.join(
    os.path.dirname(__file__), "data", "names.txt")

AGE_BRACKET = re.compile(r"^\s*(\d+)\s*-\s*(\d+)\s*$")

SYNTHETIC_LEVELS = {
    "age_range": ["18-30", "31-45", "46-60", "61-75"],
    "gender": ["female", "male"],
    "education": ["secondary or below", "college", "postgraduate"],
    "occupation": ["service worker", "office worker", "student", "retired"],
}


def survey_columns() -> List[str]:
    return BASE_COLUMNS + RISK_COLUMNS + behavior_ids()


def load_survey(path: str) -> List[SurveyRecord]:
    """
    Load and validate every row of a survey CSV. Any schema or range
    violation raises :exc:`InvalidSurvey` naming the row and the field, rows
    are never silently dropped.
    """
    if not os.path.exists(path):
        raise InvalidSurvey('Survey file "{}" does not exist.'.format(path))

    with open(path, "rb") as f:
        text = decode_bytes(f.read())

    try:
        frame = pd.read_csv(
            io.StringIO(text), dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise InvalidSurvey(
            "Survey file '{}' has no header row".format(path))
    except pd.errors.ParserError as x:
        raise InvalidSurvey(
            "Failed parsing survey file '{}': {}".format(path, str(x)))

    expected = survey_columns()
    missing = [c for c in expected if c not in frame.columns]
    if missing:
        raise InvalidSurvey(
            "Survey file '{}' misses columns: {}".format(
                path, ", ".join(missing)))
    extra = [c for c in frame.columns if c not in expected]
    if extra:
        raise InvalidSurvey(
            "Survey file '{}' has unexpected columns: {}".format(
                path, ", ".join(extra)))

    records = [
        parse_survey_row(row, index + 1)
        for index, row in enumerate(frame.to_dict(orient="records"))
    ]
    logger.info("Loaded {} survey records from '{}'".format(
        len(records), path))
    return records


def parse_survey_row(row: Dict[str, str], line: int) -> SurveyRecord:
    def text(field: str) -> str:
        value = (row.get(field) or "").strip()
        if not value:
            raise InvalidSurvey(
                "row {}: field '{}' is missing".format(line, field))
        return value

    def scale(field: str, points: int) -> int:
        value = text(field)
        try:
            number = int(value)
        except ValueError:
            raise InvalidSurvey(
                "row {}: field '{}' must be an integer, got '{}'".format(
                    line, field, value))
        if not 1 <= number <= points:
            raise InvalidSurvey(
                "row {}: field '{}' must be within 1..{}, got {}".format(
                    line, field, points, number))
        return number

    survey_round = text("round")
    if survey_round not in ROUNDS:
        raise InvalidSurvey(
            "row {}: field 'round' must be one of {}, got '{}'".format(
                line, ", ".join(ROUNDS), survey_round))

    tier = text("measure_tier")
    if tier not in TIERS:
        raise InvalidSurvey(
            "row {}: field 'measure_tier' must be one of {}, "
            "got '{}'".format(line, ", ".join(TIERS), tier))

    score = text("enforcement_score")
    try:
        enforcement = float(score)
    except ValueError:
        raise InvalidSurvey(
            "row {}: field 'enforcement_score' must be a number, "
            "got '{}'".format(line, score))
    if math.isnan(enforcement) or not 1 <= enforcement <= BEHAVIOR_POINTS:
        raise InvalidSurvey(
            "row {}: field 'enforcement_score' must be within 1..{}, "
            "got {}".format(line, BEHAVIOR_POINTS, score))

    record = {
        "participant_id": text("participant_id"),
        "round": survey_round,
        "measure_tier": tier,
        "enforcement_score": enforcement,
        "risk_items": [scale(c, RISK_POINTS) for c in RISK_COLUMNS],
        "behavior_scores": {
            b: scale(b, BEHAVIOR_POINTS) for b in behavior_ids()
        }
    }
    for field in DEMOGRAPHICS:
        record[field] = text(field)
    parse_age_bracket(record["age_range"], line)
    return record


def write_survey(path: str, records: Iterable[SurveyRecord]):
    """
    Write records in the canonical survey CSV layout.
    """
    rows = []
    for record in records:
        row = {c: record[c] for c in BASE_COLUMNS}
        row.update(zip(RISK_COLUMNS, record["risk_items"]))
        row.update(record["behavior_scores"])
        rows.append(row)
    frame = pd.DataFrame(rows, columns=survey_columns())
    frame.to_csv(path, index=False, encoding="utf-8")
    logger.debug("Wrote {} survey records to '{}'".format(len(rows), path))


def parse_age_bracket(bracket: str, line: int = None) -> (int, int):
    m = AGE_BRACKET.match(bracket or "")
    where = "row {}: ".format(line) if line else ""
    if not m:
        raise InvalidSurvey(
            "{}age range '{}' is not a 'lo-hi' bracket".format(
                where, bracket))
    lo, hi = int(m.group(1)), int(m.group(2))
    if lo > hi:
        raise InvalidSurvey(
            "{}age range '{}' has its bounds reversed".format(where, bracket))
    return lo, hi


def concretize_age(bracket: str, rng: np.random.Generator) -> int:
    """
    Draw a concrete age uniformly within a categorical age bracket such as
    `"20-30"`, bounds included.
    """
    lo, hi = parse_age_bracket(bracket)
    return int(rng.integers(lo, hi, endpoint=True))


def load_name_corpus(path: str = None) -> List[str]:
    """
    Read a name corpus, one name per line. Blank lines and lines starting
    with `#` are skipped.
    """
    path = path or DEFAULT_CORPUS
    if not os.path.exists(path):
        raise InvalidConfiguration(
            'Name corpus "{}" does not exist.'.format(path))
    with io.open(path, encoding="utf-8") as f:
        names = [
            line.strip() for line in f
            if line.strip() and not line.startswith("#")
        ]
    if not names:
        raise InvalidConfiguration(
            "Name corpus '{}' is empty".format(path))
    return names


def assign_virtual_name(participant_id: str, corpus: Sequence[str]) -> str:
    """
    Pick the virtual name of a participant: a stable hash of its id modulo
    the corpus size.
    """
    if not corpus:
        raise InvalidConfiguration("the name corpus cannot be empty")
    return corpus[derive_seed("name", participant_id) % len(corpus)]


def assign_virtual_names(participant_ids: Sequence[str],
                         corpus: Sequence[str]) -> Dict[str, str]:
    """
    Name a whole cohort. Participants whose ids hash to the same name are
    told apart by a numbered suffix, numbered in id order.
    """
    names = {pid: assign_virtual_name(pid, corpus) for pid in participant_ids}

    by_name = {}
    for pid, name in names.items():
        by_name.setdefault(name, []).append(pid)

    for name, pids in by_name.items():
        if len(pids) < 2:
            continue
        for k, pid in enumerate(sorted(pids), start=1):
            names[pid] = "{} ({})".format(name, k)
    return names


def community_intensity(records: Sequence[SurveyRecord]) -> float:
    """
    Community-level enforcement intensity: the mean enforcement score of the
    residents of a single community.
    """
    if not records:
        raise DomainError("cannot aggregate the intensity of no residents")

    communities = {r["community_id"] for r in records}
    if len(communities) > 1:
        raise DomainError(
            "records belong to several communities: {}".format(
                ", ".join(sorted(communities))))

    return math.fsum(r["enforcement_score"] for r in records) / len(records)


def community_intensities(
        records: Sequence[SurveyRecord]) -> Dict[str, float]:
    groups = {}
    for record in records:
        groups.setdefault(record["community_id"], []).append(record)
    return {c: community_intensity(g) for c, g in sorted(groups.items())}


def risk_level_from_survey(risk_items: Sequence[int]) -> RiskPerception:
    """
    Collapse the multi-item risk perception answers into a single 6-point
    level: the arithmetic mean rounded half up. Survey-sourced perceptions
    carry no continuous score.
    """
    if not risk_items:
        raise DomainError("risk perception requires at least one item")

    for item in risk_items:
        if isinstance(item, bool) or not isinstance(item, int) or \
                not 1 <= item <= RISK_POINTS:
            raise DomainError(
                "risk item {} is not within 1..{}".format(item, RISK_POINTS))

    mean = Fraction(sum(risk_items), len(risk_items))
    level = math.floor(mean + Fraction(1, 2))
    return {
        "score": None,
        "level": max(1, min(RISK_POINTS, level)),
        "round": "T1"
    }


def enrich(records: Sequence[SurveyRecord], seed: int,
           corpus: Sequence[str] = None) -> List[Persona]:
    """
    Turn survey records into personas: concrete age, virtual name and T1 risk
    perception level. The outcome only depends on the records and the seed,
    one persona per record, in the same order.
    """
    corpus = corpus if corpus is not None else load_name_corpus()
    names = assign_virtual_names(
        [r["participant_id"] for r in records], corpus)

    personas = []
    for record in records:
        pid = record["participant_id"]
        personas.append({
            "id": pid,
            "virtual_name": names[pid],
            "age": concretize_age(
                record["age_range"], rng_for(seed, "age", pid)),
            "age_range": record["age_range"],
            "gender": record["gender"],
            "education": record["education"],
            "occupation": record["occupation"],
            "community_id": record["community_id"],
            "risk_t1": risk_level_from_survey(record["risk_items"])
        })
    logger.debug("Enriched {} personas".format(len(personas)))
    return personas


def _skewed_choice(rng: np.random.Generator, levels: List[str],
                   skew: float) -> str:
    weights = np.exp(skew * np.linspace(0.0, 1.0, len(levels)))
    return levels[int(rng.choice(len(levels), p=weights / weights.sum()))]


def synthetic_survey(n: int, survey_round: str = "R1",
                     tiers: Sequence[str] = ("RegularPC",), seed: int = 0,
                     skew: float = 0.0, communities: int = 10,
                     id_prefix: str = None) -> List[SurveyRecord]:
    """
    Generate schema-valid survey records, used by the test-suite and for dry
    runs since the original instrument is not distributed.

    Communities are assigned tiers round-robin. A positive `skew` tilts every
    demographic covariate towards its later levels (older, more educated,
    more often retired), which is how a confounded treated group is built for
    matching tests. Risk items and behavior scores are drawn around a latent
    per-resident concern so they correlate with each other and with the tier.
    """
    for tier in tiers:
        if tier not in TIERS:
            raise DomainError("'{}' is not a control tier".format(tier))
    if survey_round not in ROUNDS:
        raise DomainError("'{}' is not a survey round".format(survey_round))

    prefix = id_prefix or survey_round
    records = []
    for i in range(n):
        pid = "{}-{:04d}".format(prefix, i + 1)
        rng = rng_for(seed, "synthetic", pid)
        community = i % max(1, communities)
        tier = tiers[community % len(tiers)]
        strictness = TIERS.index(tier) / (len(TIERS) - 1)

        record = {
            "participant_id": pid,
            "round": survey_round,
            "community_id": "C{:02d}".format(community + 1),
            "measure_tier": tier,
        }
        for field, levels in SYNTHETIC_LEVELS.items():
            record[field] = _skewed_choice(rng, levels, skew)

        enforcement = TIER_DEFAULT_INTENSITY[tier] + rng.normal(0.0, 0.5)
        record["enforcement_score"] = round(
            float(np.clip(enforcement, 1.0, BEHAVIOR_POINTS)), 1)

        concern = rng.uniform(0.2, 0.8) + 0.15 * strictness
        risk_center = 1 + concern * (RISK_POINTS - 1)
        record["risk_items"] = [
            int(np.clip(round(risk_center + rng.normal(0.0, 0.8)),
                        1, RISK_POINTS))
            for _ in RISK_COLUMNS
        ]
        record["behavior_scores"] = {
            b: int(np.clip(
                round(1 + concern * (BEHAVIOR_POINTS - 1) +
                      rng.normal(0.0, 0.9)), 1, BEHAVIOR_POINTS))
            for b in behavior_ids()
        }
        records.append(record)
    return records
