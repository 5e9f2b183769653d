"""
@file distributions.py
@brief Inverse-transform samplers
@details
Every sample consumes exactly one uniform and maps it through a
non-decreasing inverse CDF. That keeps common random numbers synchronized
when a model changes and lets antithetic draws act monotonically on the
sampled values. There are no acceptance-rejection samplers on purpose.

Literals look like EXPO(13), TRIA(1,3,6), UNIF(0.1,0.6) and CONST(2).
"""

import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

from desvar.errors import ParameterError

RE_LITERAL = re.compile(
    r"""
    ^\s*
    # 1: family name
    ([A-Za-z]+)
    \s*\(\s*
    # 2: comma separated parameters
    ([^()]*)
    \)\s*$
""",
    re.VERBOSE,
)


class DistributionKind(Enum):
    Expo = "EXPO"
    Tria = "TRIA"
    Unif = "UNIF"
    # Degenerate, still consumes one draw
    Const = "CONST"

    def __str__(self):
        return self.value


ARITY = {
    DistributionKind.Expo: 1,
    DistributionKind.Tria: 3,
    DistributionKind.Unif: 2,
    DistributionKind.Const: 1,
}


@dataclass(frozen=True)
class Distribution:
    kind: DistributionKind
    params: Tuple[float, ...]

    def __post_init__(self):
        if len(self.params) != ARITY[self.kind]:
            raise ParameterError(
                f"{self.kind} takes {ARITY[self.kind]} parameters, got {len(self.params)}"
            )
        if not all(math.isfinite(p) for p in self.params):
            raise ParameterError(f"{self}: parameters must be finite")
        if self.kind is DistributionKind.Expo and self.params[0] <= 0:
            raise ParameterError(f"{self}: mean must be positive")
        if self.kind is DistributionKind.Tria:
            low, mode, high = self.params
            if not (low <= mode <= high and low < high):
                raise ParameterError(f"{self}: need min <= mode <= max and min < max")
        if self.kind is DistributionKind.Unif and not self.params[0] < self.params[1]:
            raise ParameterError(f"{self}: need low < high")
        if self.kind is DistributionKind.Const and self.params[0] < 0:
            raise ParameterError(f"{self}: durations cannot be negative")

    @staticmethod
    def parse(literal: str) -> "Distribution":
        """Parse a config literal such as TRIA(1,3,6)"""
        if isinstance(literal, Distribution):
            return literal
        m = RE_LITERAL.match(str(literal))
        if not m:
            raise ParameterError(f"malformed distribution literal {literal!r}")
        try:
            kind = DistributionKind(m.group(1).upper())
        except ValueError:
            raise ParameterError(f"unknown distribution family in {literal!r}")
        try:
            params = tuple(float(p) for p in m.group(2).split(",") if p.strip())
        except ValueError:
            raise ParameterError(f"non-numeric parameter in {literal!r}")
        return Distribution(kind, params)

    @staticmethod
    def expo(mean):
        return Distribution(DistributionKind.Expo, (float(mean),))

    @staticmethod
    def tria(low, mode, high):
        return Distribution(DistributionKind.Tria, (float(low), float(mode), float(high)))

    @staticmethod
    def unif(low, high):
        return Distribution(DistributionKind.Unif, (float(low), float(high)))

    @staticmethod
    def const(value):
        return Distribution(DistributionKind.Const, (float(value),))

    def inverse_cdf(self, u: float) -> float:
        if not 0.0 < u < 1.0:
            raise ParameterError(f"uniform {u!r} is outside (0, 1)")
        if self.kind is DistributionKind.Expo:
            # -mean*ln(1-u) keeps the map increasing in u
            return -self.params[0] * math.log1p(-u)
        if self.kind is DistributionKind.Tria:
            low, mode, high = self.params
            width = high - low
            if u < (mode - low) / width:
                return low + math.sqrt(u * width * (mode - low))
            return high - math.sqrt((1.0 - u) * width * (high - mode))
        if self.kind is DistributionKind.Unif:
            low, high = self.params
            return low + u * (high - low)
        return self.params[0]

    def sample(self, stream) -> float:
        """Draw one value, consuming exactly one uniform from stream"""
        return self.inverse_cdf(stream.next_uniform())

    @property
    def mean(self) -> float:
        if self.kind is DistributionKind.Tria:
            return sum(self.params) / 3.0
        if self.kind is DistributionKind.Unif:
            return (self.params[0] + self.params[1]) / 2.0
        return self.params[0]

    @property
    def variance(self) -> float:
        if self.kind is DistributionKind.Expo:
            return self.params[0] ** 2
        if self.kind is DistributionKind.Tria:
            a, c, b = self.params
            return (a * a + b * b + c * c - a * b - a * c - b * c) / 18.0
        if self.kind is DistributionKind.Unif:
            return (self.params[1] - self.params[0]) ** 2 / 12.0
        return 0.0

    def scaled(self, factor: float) -> "Distribution":
        """Same family with every time parameter multiplied by factor"""
        if factor <= 0:
            raise ParameterError(f"scale factor must be positive, got {factor}")
        return Distribution(self.kind, tuple(p * factor for p in self.params))

    def __str__(self):
        return f"{self.kind}({','.join(f'{p:g}' for p in self.params)})"
