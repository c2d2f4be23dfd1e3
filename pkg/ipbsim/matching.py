# -*- coding: utf-8 -*-
"""
Propensity-score matching of survey records.

Propensity scores come from a logistic regression of group membership on the
one-hot encoded covariates, fitted by Newton-Raphson ascent of the
log-likelihood. Treated records are then matched one-to-one, without
replacement, to the control record with the closest score, in a seeded
random order. No caliper is applied.

Balance is reported per covariate as the standardized mean difference of
the matched sets, the largest one across a covariate's levels.
"""
from collections import namedtuple
from typing import Any, Dict, List, Sequence, Tuple

from logzero import logger
import numpy as np
import pandas as pd

from ipbsim.exceptions import ConvergenceError, MatchingError
from ipbsim.seeding import rng_for
from ipbsim.types import Record

__all__ = ["MatchResult", "propensity_match", "propensity_scores",
           "encode_covariates", "standardized_mean_differences",
           "DEFAULT_COVARIATES", "BALANCE_THRESHOLD"]

DEFAULT_COVARIATES = ("age_range", "gender", "education", "occupation")
BALANCE_THRESHOLD = 0.1
TOLERANCE = 1e-8
MAX_ITERATIONS = 500
RIDGE = 1e-6

MatchResult = namedtuple("MatchResult", ["pairs", "smd", "details"])


def encode_covariates(records: Sequence[Record],
                      covariates: Sequence[str]) -> pd.DataFrame:
    """
    One-hot encode categorical covariates, one column per level named
    `covariate=level`. Levels are sorted so the encoding is stable.
    """
    for covariate in covariates:
        for i, record in enumerate(records):
            if covariate not in record:
                raise MatchingError(
                    "record {} has no covariate '{}'".format(
                        record.get("participant_id", i), covariate))

    frame = pd.DataFrame(
        [{c: str(r[c]) for c in covariates} for r in records],
        columns=list(covariates))
    columns = []
    for covariate in covariates:
        for level in sorted(frame[covariate].unique()):
            columns.append(
                (frame[covariate] == level).astype(float).rename(
                    "{}={}".format(covariate, level)))
    return pd.concat(columns, axis=1)


def propensity_scores(treated: Sequence[Record], control: Sequence[Record],
                      covariates: Sequence[str]) -> Tuple[np.ndarray,
                                                          np.ndarray]:
    """
    Fit the propensity model on both groups and return the scores of the
    treated and of the control records.
    """
    encoded = encode_covariates(list(treated) + list(control), covariates)
    # first level of each covariate is the reference
    design = []
    for covariate in covariates:
        levels = [c for c in encoded.columns
                  if c.startswith(covariate + "=")]
        design.extend(levels[1:])
    x = np.column_stack([np.ones(len(encoded)), encoded[design].values])
    y = np.concatenate([np.ones(len(treated)), np.zeros(len(control))])

    beta = _fit_logistic(x, y)
    scores = 1.0 / (1.0 + np.exp(-(x @ beta)))
    return scores[:len(treated)], scores[len(treated):]


def standardized_mean_differences(
        treated: Sequence[Record], control: Sequence[Record],
        covariates: Sequence[str]) -> Tuple[Dict[str, float],
                                             Dict[str, float]]:
    """
    Standardized mean difference of every covariate level,
    `|mean_t - mean_c| / sqrt((var_t + var_c) / 2)`, and per covariate the
    largest of its levels. A level constant and equal in both groups has a
    difference of zero.
    """
    encoded = encode_covariates(list(treated) + list(control), covariates)
    t = encoded.iloc[:len(treated)]
    c = encoded.iloc[len(treated):]

    levels = {}
    for column in encoded.columns:
        diff = abs(t[column].mean() - c[column].mean())
        pooled = np.sqrt((t[column].var(ddof=1) + c[column].var(ddof=1)) / 2)
        if not np.isfinite(pooled) or pooled == 0.0:
            levels[column] = 0.0 if diff == 0.0 else float("inf")
        else:
            levels[column] = float(diff / pooled)

    per_covariate = {
        covariate: max(v for k, v in levels.items()
                       if k.startswith(covariate + "="))
        for covariate in covariates
    }
    return per_covariate, levels


def propensity_match(treated: Sequence[Record], control: Sequence[Record],
                     covariates: Sequence[str] = DEFAULT_COVARIATES,
                     seed: int = 0,
                     id_field: str = "participant_id") -> MatchResult:
    """
    Match every treated record to one distinct control record.

    Raises :exc:`MatchingError` when the control pool is smaller than the
    treated group and :exc:`ConvergenceError`, carrying the log-likelihood
    trace, when the propensity model does not converge.
    """
    if not treated:
        raise MatchingError("there is no treated record to match")
    if len(control) < len(treated):
        raise MatchingError(
            "control pool of {} records cannot match {} treated "
            "records".format(len(control), len(treated)))

    scores_t, scores_c = propensity_scores(treated, control, covariates)
    order = rng_for(seed, "matching-order").permutation(len(treated))

    available = np.ones(len(control), dtype=bool)
    matches: Dict[int, int] = {}
    for i in order:
        distances = np.where(
            available, np.abs(scores_c - scores_t[i]), np.inf)
        # argmin keeps the lowest control index on ties
        j = int(np.argmin(distances))
        if not available[j]:
            raise MatchingError("control pool exhausted")
        available[j] = False
        matches[int(i)] = j

    pairs = [
        (treated[i][id_field], control[matches[i]][id_field])
        for i in range(len(treated))
    ]
    matched_control = [control[matches[i]] for i in range(len(treated))]
    smd, levels = standardized_mean_differences(
        treated, matched_control, covariates)

    unbalanced = [c for c, v in smd.items() if v >= BALANCE_THRESHOLD]
    if unbalanced:
        logger.warning("Matched groups remain unbalanced on: {}".format(
            ", ".join(unbalanced)))
    else:
        logger.info("Matched {} pairs, every covariate SMD is below "
                    "{}".format(len(pairs), BALANCE_THRESHOLD))

    details: Dict[str, Any] = {
        "level_smd": levels,
        "scores": {
            treated[i][id_field]: float(scores_t[i])
            for i in range(len(treated))
        },
        "distances": {
            treated[i][id_field]: float(
                abs(scores_t[i] - scores_c[matches[i]]))
            for i in range(len(treated))
        }
    }
    return MatchResult(pairs, smd, details)


###############################################################################
# Internal functions
###############################################################################
def _log_likelihood(x: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = x @ beta
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def _fit_logistic(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Maximum-likelihood logistic coefficients by Newton-Raphson: each
    iteration ascends the log-likelihood along its gradient scaled by the
    inverse of the (ridge-regularized) information matrix. Stops once no
    coefficient moves by more than `TOLERANCE`, or raises
    :exc:`ConvergenceError` after `MAX_ITERATIONS` with the log-likelihood
    reached at every iteration.
    """
    beta = np.zeros(x.shape[1])
    trace: List[float] = []
    ridge = RIDGE * np.eye(x.shape[1])

    for iteration in range(MAX_ITERATIONS):
        p = 1.0 / (1.0 + np.exp(-(x @ beta)))
        gradient = x.T @ (y - p) - RIDGE * beta
        hessian = (x * (p * (1.0 - p))[:, None]).T @ x + ridge
        try:
            step = np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError:
            raise ConvergenceError(
                "propensity model has a singular information matrix at "
                "iteration {}".format(iteration), trace)
        beta = beta + step
        trace.append(_log_likelihood(x, y, beta))
        if np.max(np.abs(step)) < TOLERANCE:
            logger.debug("Propensity model converged in {} iterations".format(
                iteration + 1))
            return beta

    raise ConvergenceError(
        "propensity model did not converge in {} iterations".format(
            MAX_ITERATIONS), trace)
