"""Point estimates with confidence intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.stats import norm

WILSON_THRESHOLD = 30


def _z(level):
    return float(norm.ppf(0.5 + 0.5 * level))


@dataclass(frozen=True)
class EstimateWithCI:
    value: float
    std_error: float
    n: int
    ci_level: float = 0.95
    ci_low: float = math.nan
    ci_high: float = math.nan

    def __post_init__(self):
        if self.std_error < 0 or self.n < 1:
            raise ValueError("std_error must be >= 0 and n >= 1")
        if math.isnan(self.ci_low):
            half = _z(self.ci_level) * self.std_error
            object.__setattr__(self, "ci_low", self.value - half)
            object.__setattr__(self, "ci_high", self.value + half)

    @classmethod
    def from_proportion(cls, successes, n, ci_level=0.95):
        """Binomial proportion; Wilson interval when either count is below 30."""
        p = successes / n
        se = math.sqrt(p * (1.0 - p) / n)
        if min(successes, n - successes) >= WILSON_THRESHOLD:
            return cls(p, se, n, ci_level)
        z = _z(ci_level)
        denom = 1.0 + z * z / n
        centre = (p + z * z / (2 * n)) / denom
        half = z / denom * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))
        low = 0.0 if successes == 0 else max(0.0, centre - half)
        high = 1.0 if successes == n else min(1.0, centre + half)
        return cls(p, se, n, ci_level, low, high)

    @classmethod
    def from_moments(cls, total, total_sq, n, ci_level=0.95):
        """Sample mean from running sums; standard error uses the unbiased variance."""
        mean = total / n
        var = max(total_sq / n - mean * mean, 0.0) * (n / (n - 1) if n > 1 else 0.0)
        return cls(mean, math.sqrt(var / n), n, ci_level)

    @property
    def half_width(self):
        return 0.5 * (self.ci_high - self.ci_low)

    def agrees_with(self, reference, n_sigma=3.0, extra_se=0.0):
        """True when ``reference`` lies within ``n_sigma`` combined standard errors."""
        se = math.hypot(self.std_error, extra_se)
        return abs(self.value - reference) <= n_sigma * se
