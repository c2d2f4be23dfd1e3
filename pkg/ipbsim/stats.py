# -*- coding: utf-8 -*-
"""
Distributional comparison of simulated and observed Likert samples.

The two-sample Kolmogorov-Smirnov statistic is the largest gap between the
empirical distribution functions of both samples. Its p-value comes from the
asymptotic Kolmogorov distribution evaluated at
`(sqrt(ne) + 0.12 + 0.11 / sqrt(ne)) * D` where `ne = n1 * n2 / (n1 + n2)`.

Likert data is heavily tied, which makes that p-value conservative. This is
the standard two-sample test nonetheless, no tie correction is applied.
"""
from collections import namedtuple
import math
from typing import List, Sequence, Tuple

from logzero import logger
import numpy as np

from ipbsim.exceptions import DomainError, InvalidConfiguration

__all__ = ["KsResult", "ks_two_sample", "ks_statistic", "kolmogorov_sf",
           "validate_behavior", "pass_rate", "DEFAULT_ALPHA"]

DEFAULT_ALPHA = 0.001
SERIES_TOLERANCE = 1e-12
EXACT_LIMIT = 10

KsResult = namedtuple("KsResult", ["statistic", "p_value", "n1", "n2"])


def ks_statistic(a: Sequence[float], b: Sequence[float]) -> float:
    """
    Largest absolute difference between the empirical distribution functions
    of `a` and `b`, evaluated at every pooled observation.
    """
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def kolmogorov_sf(x: float) -> float:
    """
    Survival function of the Kolmogorov distribution:
    `2 * sum((-1) ** (j - 1) * exp(-2 * j ** 2 * x ** 2))`.

    The alternating series converges too slowly near zero, where the
    equivalent theta-function form is used instead. Both are truncated once
    their terms fall below `1e-12`.
    """
    if x <= 0.0:
        return 1.0

    if x < 0.2:
        factor = math.sqrt(2.0 * math.pi) / x
        total, j = 0.0, 1
        while True:
            term = math.exp(-((2 * j - 1) ** 2) * math.pi ** 2 / (8 * x * x))
            total += term
            if term < SERIES_TOLERANCE:
                break
            j += 1
        return _clamp(1.0 - factor * total)

    total, j = 0.0, 1
    while True:
        term = math.exp(-2.0 * j * j * x * x)
        total += term if j % 2 else -term
        if term < SERIES_TOLERANCE:
            break
        j += 1
    return _clamp(2.0 * total)


def ks_two_sample(a: Sequence[float], b: Sequence[float],
                  method: str = "asymptotic") -> KsResult:
    """
    Two-sample Kolmogorov-Smirnov test.

    With `method="exact"` and an effective size below 10, the p-value is the
    share of all relabellings of the pooled sample whose statistic is at
    least the observed one. Larger samples fall back to the asymptotic
    p-value.
    """
    if not len(a) or not len(b):
        raise DomainError("the KS test requires two non-empty samples")
    if method not in ("asymptotic", "exact"):
        raise InvalidConfiguration(
            "unknown KS p-value method '{}'".format(method))

    n1, n2 = len(a), len(b)
    d = ks_statistic(a, b)
    ne = n1 * n2 / (n1 + n2)

    if method == "exact":
        if ne < EXACT_LIMIT:
            return KsResult(d, _exact_p_value(a, b, d), n1, n2)
        logger.warning(
            "Effective sample size {:.1f} is too large for the exact KS "
            "p-value, using the asymptotic one".format(ne))

    if d == 0.0:
        return KsResult(0.0, 1.0, n1, n2)

    sqrt_ne = math.sqrt(ne)
    p = kolmogorov_sf((sqrt_ne + 0.12 + 0.11 / sqrt_ne) * d)
    return KsResult(d, p, n1, n2)


def validate_behavior(simulated: Sequence[int], observed: Sequence[int],
                      alpha: float = DEFAULT_ALPHA,
                      method: str = "asymptotic") -> Tuple[bool, KsResult]:
    """
    Compare the simulated and observed Likert distributions of a behavior.
    The behavior passes when the p-value is strictly greater than `alpha`.
    """
    result = ks_two_sample(simulated, observed, method)
    return result.p_value > alpha, result


def pass_rate(flags: Sequence[bool]) -> float:
    """
    Percentage of passing behaviors, to one decimal.
    """
    if not flags:
        raise DomainError("cannot compute the pass rate of no behavior")
    passed = sum(1 for f in flags if f)
    return round(100.0 * passed / len(flags), 1)


###############################################################################
# Internal functions
###############################################################################
def _clamp(p: float) -> float:
    return max(0.0, min(1.0, p))


def _exact_p_value(a: Sequence[float], b: Sequence[float],
                   observed: float) -> float:
    """
    Share of the relabellings of the pooled sample whose statistic reaches
    `observed`.

    A relabelling is a lattice path from (0, 0) to (n1, n2) over the sorted
    pooled sample, one step per observation. Its statistic only shows at the
    end of a run of tied values, so paths are counted while they stay inside
    the band there.
    """
    n1, n2 = len(a), len(b)
    _, counts = np.unique(np.concatenate([
        np.asarray(a, dtype=float), np.asarray(b, dtype=float)]),
        return_counts=True)
    checkpoints = set(np.cumsum(counts).tolist())
    # ties with the observed value count as extreme
    bound = observed - 1e-12

    inside: List[int] = [0] * (n1 + 1)
    for j in range(n2 + 1):
        for i in range(n1 + 1):
            if i == 0 and j == 0:
                inside[0] = 1
                continue
            paths = (inside[i - 1] if i else 0) + (inside[i] if j else 0)
            if i + j in checkpoints and abs(i / n1 - j / n2) >= bound:
                paths = 0
            inside[i] = paths

    total = math.comb(n1 + n2, n1)
    return (total - inside[n1]) / total
