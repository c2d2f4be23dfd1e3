# -*- coding: utf-8 -*-
"""
Downstream analyses of simulated outcomes: which themes the decision
rationales mention and what a change in disinfection intensity means for
the environment.
"""
from numbers import Number
import re
from typing import Any, Dict, Sequence

from logzero import logger

from ipbsim.exceptions import DomainError, InvalidConfiguration
from ipbsim.settings import get_loaded_settings
from ipbsim.types import Lexicon, Settings

__all__ = ["tag_rationales", "default_lexicon", "environmental_impact",
           "default_coefficients", "DEFAULT_LEXICON"]

# A transparent keyword proxy of the themes, not a coding scheme.
DEFAULT_LEXICON = {
    "risk perception": [
        "risk", "infect", "virus", "viruses", "spread", "propagate",
        "transmission", "danger", "worry", "concern"
    ],
    "habit formation": [
        "habit", "routine", "easy to maintain", "ease of maintenance",
        "low cost", "used to", "daily"
    ],
    "official guidance": [
        "official", "guidance", "government", "policy", "recommend",
        "committee", "regulation"
    ],
    "cost": [
        "cost", "costs", "expensive", "money", "expense", "expenses",
        "inconvenient", "time-consuming"
    ]
}

# per capita and per year, for one unit of mean intensity on the 5-point
# scale; calibrated on a 2.62 -> 3.83 change giving 11.2 L and 13.4 mg
DEFAULT_COEFFICIENTS = {
    "volume_liters": 11.2 / 1.21,
    "dbp_milligrams": 13.4 / 1.21
}


def default_lexicon(settings: Settings = None) -> Lexicon:
    settings = settings if settings is not None else get_loaded_settings()
    themes = (settings or {}).get("themes")
    return {k: list(v) for k, v in (themes or DEFAULT_LEXICON).items()}


def default_coefficients(settings: Settings = None) -> Dict[str, float]:
    settings = settings if settings is not None else get_loaded_settings()
    coefficients = dict(DEFAULT_COEFFICIENTS)
    coefficients.update((settings or {}).get("impact") or {})
    return coefficients


def tag_rationales(rationales: Sequence[str],
                   lexicon: Lexicon = None) -> Dict[str, Dict[str, Any]]:
    """
    Count the rationales mentioning each theme of the lexicon. A rationale
    counts toward a theme when a word of it starts with one of the theme's
    keywords, regardless of case, and may count toward several themes.
    Percentages are over all rationales.
    """
    lexicon = lexicon if lexicon is not None else default_lexicon()
    if not lexicon:
        raise InvalidConfiguration("the theme lexicon cannot be empty")
    for theme, keywords in lexicon.items():
        if not keywords:
            raise InvalidConfiguration(
                "theme '{}' declares no keyword".format(theme))
        if any(not isinstance(k, str) or not k.strip() for k in keywords):
            raise InvalidConfiguration(
                "theme '{}' declares an empty keyword".format(theme))
    if not rationales:
        return {}

    patterns = {
        theme: re.compile(
            r"\b(?:{})".format("|".join(
                re.escape(k) for k in sorted(keywords, key=len,
                                             reverse=True))),
            re.IGNORECASE)
        for theme, keywords in lexicon.items()
    }

    table = {}
    total = len(rationales)
    for theme, pattern in patterns.items():
        count = sum(1 for r in rationales if pattern.search(r or ""))
        table[theme] = {
            "count": count,
            "percent": round(100.0 * count / total, 1)
        }
    logger.debug("Tagged {} rationales over {} themes".format(
        total, len(lexicon)))
    return table


def environmental_impact(intensity_from: float, intensity_to: float,
                         population: int,
                         coefficients: Dict[str, float] = None
                         ) -> Dict[str, Any]:
    """
    Yearly disinfectant volume and disinfection by-product mass released
    when the mean disinfection intensity of a population moves from
    `intensity_from` to `intensity_to`. Both grow linearly with the change.
    A negative change is avoided discharge and is flagged as a decrease.
    """
    for value in (intensity_from, intensity_to):
        if not isinstance(value, Number) or not 1 <= value <= 5:
            raise DomainError(
                "intensities are means on the 1-5 scale, got {}".format(
                    value))
    if not isinstance(population, Number) or population <= 0:
        raise DomainError("population must be positive")

    coefficients = coefficients or default_coefficients()
    delta = intensity_to - intensity_from
    volume = coefficients["volume_liters"] * delta
    dbp = coefficients["dbp_milligrams"] * delta
    return {
        "intensity_from": intensity_from,
        "intensity_to": intensity_to,
        "population": population,
        "per_capita_volume_liters": volume,
        "per_capita_dbp_milligrams": dbp,
        "total_volume_liters": volume * population,
        "total_dbp_milligrams": dbp * population,
        # at a density of 1 kg/L
        "total_volume_tons": volume * population / 1000.0,
        "decrease": delta < 0
    }
