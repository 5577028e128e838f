"""Descriptive statistics for rating columns and the Pearson correlation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

import numpy as np


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class IndicatorSummary:
    indicator_number: int
    median: float
    mean: float
    sd: float


def summarize(column: Sequence[float], indicator_number: int = 0) -> IndicatorSummary:
    """Median, mean and sample (n-1) standard deviation of one column."""
    x = np.asarray(column, dtype=float).ravel()
    n = x.size
    if n == 0:
        raise StatsError("cannot summarize an empty column")
    s = np.sort(x)
    mid = n // 2
    median = float(s[mid]) if n % 2 else float((s[mid - 1] + s[mid]) / 2)
    mean = math.fsum(x) / n
    sd = math.sqrt(math.fsum((x - mean) ** 2) / (n - 1)) if n > 1 else 0.0
    return IndicatorSummary(indicator_number, median, mean, sd)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise StatsError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise StatsError("need at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    # relative threshold so that float noise on a constant column counts as constant
    if sxx <= 1e-28 * max(1.0, float(x @ x)) or syy <= 1e-28 * max(1.0, float(y @ y)):
        raise StatsError("zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def round_half_up(value: float, digits: int) -> float:
    """Round half away from zero at ``digits`` decimals, as printed tables do."""
    q = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_UP))


def fmt(value: float, digits: int = 2) -> str:
    """Half-up rounded fixed-point text; ``-0.00`` is printed as ``0.00``."""
    r = round_half_up(value, digits)
    if r == 0:
        r = 0.0
    return f"{r:.{digits}f}"
