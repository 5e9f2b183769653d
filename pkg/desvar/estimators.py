"""
@file estimators.py
@brief Variance reduction estimators over replication series
@details
Common random numbers: variance of the paired difference D = X_a - X_b,
which decomposes as Var(X_a) + Var(X_b) - 2 Cov(X_a, X_b).

Antithetic variates: the pair average Y = (X + X') / 2, whose variance is
(Var(X) + Var(X') + 2 Cov(X, X')) / 4.

Control variates: Y - a (X - E[X]) with a = Cov(Y, X) / Var(X) estimated
from the same replications it adjusts.

Both decompositions are checked on every call; with a common n - 1 divisor
they hold up to rounding.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from desvar.errors import InsufficientDataError, StatisticsError, ValidationError
from desvar.logging import logger
from desvar.stats import sample_cov, sample_moments

IDENTITY_TOLERANCE = 1e-9


class PairedSeries:
    """(x, x') pairs: two alternatives under CRN or the two members of an AV pair"""

    def __init__(self, pairs: Sequence[Tuple[float, float]]):
        self.pairs = [(float(a), float(b)) for a, b in pairs]
        if len(self.pairs) < 2:
            raise InsufficientDataError(
                f"insufficient data: need at least 2 pairs, got {len(self.pairs)}"
            )

    @classmethod
    def from_series(cls, first: Sequence[float], second: Sequence[float]):
        if len(first) != len(second):
            raise ValidationError(f"series lengths differ: {len(first)} and {len(second)}")
        return cls(list(zip(first, second)))

    @property
    def first(self) -> np.ndarray:
        return np.array([a for a, _ in self.pairs])

    @property
    def second(self) -> np.ndarray:
        return np.array([b for _, b in self.pairs])

    def __len__(self):
        return len(self.pairs)


def _check_identity(name, lhs, rhs, scale):
    if not math.isclose(lhs, rhs, rel_tol=IDENTITY_TOLERANCE, abs_tol=IDENTITY_TOLERANCE * scale):
        raise StatisticsError(f"{name} identity does not hold: {lhs!r} != {rhs!r}")


@dataclass(frozen=True)
class CrnResult:
    d_series: List[float]
    var_d: float
    var_a: float
    var_b: float
    cov_ab: float


def crn_difference_variance(pairs: PairedSeries) -> CrnResult:
    a, b = pairs.first, pairs.second
    d = a - b
    var_a = sample_moments(a).variance
    var_b = sample_moments(b).variance
    cov_ab = sample_cov(a, b)
    var_d = sample_moments(d).variance
    _check_identity(
        "paired difference",
        var_d,
        var_a + var_b - 2.0 * cov_ab,
        max(1.0, var_a + var_b),
    )
    return CrnResult(d.tolist(), var_d, var_a, var_b, cov_ab)


@dataclass(frozen=True)
class AvResult:
    y_series: List[float]
    var_y: float
    var_x: float
    var_xp: float
    cov: float

    @property
    def mean_y(self) -> float:
        return float(np.mean(self.y_series))


def av_pair_series(pairs: PairedSeries) -> AvResult:
    x, xp = pairs.first, pairs.second
    y = (x + xp) / 2.0
    var_x = sample_moments(x).variance
    var_xp = sample_moments(xp).variance
    cov = sample_cov(x, xp)
    var_y = sample_moments(y).variance
    _check_identity(
        "pair average",
        var_y,
        (var_x + var_xp + 2.0 * cov) / 4.0,
        max(1.0, var_x + var_xp),
    )
    return AvResult(y.tolist(), var_y, var_x, var_xp, cov)


@dataclass(frozen=True)
class CvInput:
    y: Sequence[float]
    x: Sequence[float]
    expected_x: Optional[float] = None

    def __post_init__(self):
        if len(self.y) != len(self.x):
            raise ValidationError(
                f"response and control lengths differ: {len(self.y)} and {len(self.x)}"
            )
        if len(self.y) < 2:
            raise InsufficientDataError(
                f"insufficient data: need at least 2 observations, got {len(self.y)}"
            )

    @property
    def n(self) -> int:
        return len(self.y)


@dataclass(frozen=True)
class CvResult:
    a_hat: float
    adjusted_series: List[float]
    var_raw: float
    var_adjusted: float
    correlation: Optional[float]
    expected_x: float


def cv_adjust(cv_input: CvInput) -> CvResult:
    """Adjust y by its linear dependence on the control variate x
    :param cv_input: CvInput
    :return: CvResult
    """
    y = np.asarray(cv_input.y, dtype=float)
    x = np.asarray(cv_input.x, dtype=float)
    expected_x = float(np.mean(x)) if cv_input.expected_x is None else cv_input.expected_x
    var_x = sample_moments(x).variance
    var_y = sample_moments(y).variance
    cov = sample_cov(y, x)

    correlation = None
    if var_x <= 0.0:
        logger.warning("degenerate control: control variate has zero variance, a = 0")
        a_hat = 0.0
    else:
        a_hat = cov / var_x
        if var_y > 0.0:
            correlation = cov / math.sqrt(var_x * var_y)

    adjusted = y - a_hat * (x - expected_x)
    return CvResult(
        a_hat=a_hat,
        adjusted_series=adjusted.tolist(),
        var_raw=var_y,
        var_adjusted=sample_moments(adjusted).variance,
        correlation=correlation,
        expected_x=expected_x,
    )
