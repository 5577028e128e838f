"""Regularized incomplete beta function and the F upper tail."""
from __future__ import annotations

import math

_TINY = 1e-300


def _betacf(a: float, b: float, x: float, rtol: float, max_iter: int) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < rtol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, rtol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not (a > 0 and b > 0):
        raise ValueError("betainc requires a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError("betainc requires 0 <= x <= 1")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    # the fraction converges fast only on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x, rtol, max_iter) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x, rtol, max_iter) / b


def f_cdf_complement(F: float, df1: float, df2: float) -> float:
    """Upper-tail probability P(F_{df1,df2} > F)."""
    for v in (F, df1, df2):
        if not math.isfinite(v):
            raise ValueError("f_cdf_complement requires finite arguments")
    if F < 0:
        raise ValueError("F must be nonnegative")
    if df1 <= 0 or df2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    if F == 0:
        return 1.0
    x = df2 / (df2 + df1 * F)
    return min(1.0, max(0.0, betainc(df2 / 2.0, df1 / 2.0, x)))
