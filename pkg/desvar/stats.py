"""
@file stats.py
@brief Output analysis: sample moments, Bartlett's test, t half-widths
@details
Sample variances and covariances use the n - 1 divisor everywhere.

Bartlett's statistic for k groups with sizes n_i and variances s_i^2:

  s_p^2 = sum((n_i - 1) s_i^2) / (N - k)
  T     = ((N - k) ln s_p^2 - sum((n_i - 1) ln s_i^2)) / C
  C     = 1 + (sum(1 / (n_i - 1)) - 1 / (N - k)) / (3 (k - 1))

and is referred to a chi-square distribution with k - 1 degrees of freedom.
Normality of the groups is assumed, not tested.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Sequence

import numpy as np
from scipy import special
from scipy import stats as sps

from desvar.errors import DegenerateGroupError, InsufficientDataError, ValidationError
from desvar.logging import logger

# Groups smaller than this make the chi-square approximation shaky
BARTLETT_SMALL_GROUP = 5


class Decision(Enum):
    Reject = "reject"
    FailToReject = "fail to reject"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class Moments:
    n: int
    mean: float
    variance: float
    stdev: float


def _as_array(series, minimum=2, what="series") -> np.ndarray:
    values = np.asarray(series, dtype=float)
    if values.ndim != 1:
        raise ValidationError(f"{what} must be one dimensional")
    if len(values) < minimum:
        raise InsufficientDataError(
            f"insufficient data: {what} needs at least {minimum} values, got {len(values)}"
        )
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{what} contains non-finite values")
    return values


def sample_moments(series: Sequence[float]) -> Moments:
    values = _as_array(series)
    variance = float(np.var(values, ddof=1))
    return Moments(len(values), float(np.mean(values)), variance, math.sqrt(variance))


def sample_cov(a: Sequence[float], b: Sequence[float]) -> float:
    a = _as_array(a, what="first series")
    b = _as_array(b, what="second series")
    if len(a) != len(b):
        raise ValidationError(f"series lengths differ: {len(a)} and {len(b)}")
    return float(np.cov(a, b, ddof=1)[0, 1])


@dataclass(frozen=True)
class Group:
    label: str
    series: tuple


class GroupSet:
    """Groups whose variances are compared, in a fixed label order"""

    def __init__(self, groups: Dict[str, Sequence[float]]):
        self.groups: List[Group] = [
            Group(label, tuple(float(v) for v in series)) for label, series in groups.items()
        ]
        if len(self.groups) < 2:
            raise ValidationError("variance homogeneity needs at least two groups")
        for group in self.groups:
            if len(group.series) < 2:
                raise InsufficientDataError(
                    f"insufficient data: group {group.label} has {len(group.series)} values"
                )

    @property
    def labels(self) -> List[str]:
        return [g.label for g in self.groups]

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)


@dataclass(frozen=True)
class BartlettResult:
    statistic: float
    df: int
    p_value: float

    def decision_at(self, alpha: float) -> Decision:
        if not 0.0 < alpha < 1.0:
            raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
        return Decision.Reject if self.p_value < alpha else Decision.FailToReject


def bartlett_test(groups: GroupSet) -> BartlettResult:
    """Test whether every group shares one variance
    :param groups: GroupSet
    :return: BartlettResult
    """
    sizes = np.array([len(g.series) for g in groups], dtype=float)
    variances = np.array([sample_moments(g.series).variance for g in groups])
    for group, variance in zip(groups, variances):
        if variance <= 0.0:
            raise DegenerateGroupError(
                f"degenerate group: {group.label} has zero variance"
            )
    small = [g.label for g in groups if len(g.series) < BARTLETT_SMALL_GROUP]
    if small:
        logger.warning(
            "Bartlett's test with fewer than %d values in %s",
            BARTLETT_SMALL_GROUP,
            ", ".join(small),
        )

    k = len(groups)
    dof = sizes - 1.0
    total = float(np.sum(dof))
    pooled = float(np.sum(dof * variances)) / total
    raw = total * math.log(pooled) - float(np.sum(dof * np.log(variances)))
    correction = 1.0 + (float(np.sum(1.0 / dof)) - 1.0 / total) / (3.0 * (k - 1))
    # Equal variances cancel exactly in theory; rounding can leave -1e-16
    statistic = max(0.0, raw / correction)
    return BartlettResult(statistic, k - 1, chi_square_sf(statistic, k - 1))


def chi_square_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution, Q(df/2, x/2)"""
    if x < 0:
        raise ValidationError(f"chi-square statistic must be non-negative, got {x}")
    if df <= 0:
        raise ValidationError(f"degrees of freedom must be positive, got {df}")
    return float(special.gammaincc(df / 2.0, x / 2.0))


def t_quantile(probability: float, df: int) -> float:
    return float(sps.t.ppf(probability, df))


def ci_halfwidth(series: Sequence[float], alpha: float) -> float:
    """Half-width of the two-sided 1 - alpha Student-t interval for the mean"""
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    moments = sample_moments(series)
    return t_quantile(1.0 - alpha / 2.0, moments.n - 1) * moments.stdev / math.sqrt(
        moments.n
    )
