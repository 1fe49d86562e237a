"""Gaussian moment integrals and combinatorial tables."""
from __future__ import annotations

import math
from functools import lru_cache

import mpmath
import numpy as np

from .errors import NonPositiveQuadratic, OrderCapExceeded

N_MAX_DEFAULT = 256


def gaussian_moment_table(n_max: int, a, b, *, mp: bool = False) -> list:
    """I(n, a, b) = int x^n exp(-a x^2 - b x) dx over the real line for n = 0..n_max.

    Two-term recurrence I(n) = [(n-1) I(n-2) - b I(n-1)] / (2a).
    """
    if not a > 0:
        raise NonPositiveQuadratic(f"quadratic coefficient must be positive, got {a}")
    if n_max > N_MAX_DEFAULT:
        raise OrderCapExceeded(f"moment order {n_max} exceeds {N_MAX_DEFAULT}")
    if mp:
        a, b = mpmath.mpf(a), mpmath.mpf(b)
        i0 = mpmath.sqrt(mpmath.pi / a) * mpmath.exp(b * b / (4 * a))
    else:
        a, b = float(a), float(b)
        i0 = math.sqrt(math.pi / a) * math.exp(b * b / (4 * a))
    out = [i0]
    if n_max >= 1:
        out.append(-b / (2 * a) * i0)
    for n in range(2, n_max + 1):
        out.append(((n - 1) * out[n - 2] - b * out[n - 1]) / (2 * a))
    return out


def gaussian_moment_I(n: int, a: float, b: float) -> float:
    if n < 0:
        raise ValueError("moment order must be nonnegative")
    return gaussian_moment_table(n, a, b)[n]


def gaussian_moment_hyp1f1(n: int, a: float, b: float, dps: int = 30) -> float:
    """Confluent-hypergeometric closed form of I(n, a, b); reference only."""
    with mpmath.workdps(dps):
        a, b = mpmath.mpf(a), mpmath.mpf(b)
        x = b * b / (4 * a)
        odd = (-1 + (-1) ** n) * b * mpmath.gamma(1 + mpmath.mpf(n) / 2) * mpmath.hyp1f1(1 + mpmath.mpf(n) / 2, 1.5, x)
        even = (1 + (-1) ** n) * mpmath.sqrt(a) * mpmath.gamma(mpmath.mpf(1 + n) / 2) * mpmath.hyp1f1(mpmath.mpf(1 + n) / 2, 0.5, x)
        return float((odd + even) / (2 * a ** (1 + mpmath.mpf(n) / 2)))


@lru_cache(maxsize=None)
def binomial_row(n: int) -> tuple[int, ...]:
    return tuple(math.comb(n, k) for k in range(n + 1))


def multinomial(n: int, a: int, b: int, c: int) -> int:
    """n! / (a! b! c! (n-a-b-c)!)."""
    return math.comb(n, a) * math.comb(n - a, b) * math.comb(n - a - b, c)


@lru_cache(maxsize=None)
def phase_grouped(n_cap: int, k_cap: int) -> tuple[tuple[int, int], ...]:
    """Gaussian-integer coefficients of x^s y^(n+k-s) in (x + iy)^k (x - iy)^n.

    Entry s is (re, im) of sum_{a+b=s} C(n,a) C(k,b) i^(a-n-b+k).
    """
    unit = [(1, 0), (0, 1), (-1, 0), (0, -1)]
    out = []
    for s in range(n_cap + k_cap + 1):
        re = im = 0
        for a in range(max(0, s - k_cap), min(n_cap, s) + 1):
            b = s - a
            w = math.comb(n_cap, a) * math.comb(k_cap, b)
            ur, ui = unit[(a - n_cap - b + k_cap) % 4]
            re += w * ur
            im += w * ui
        out.append((re, im))
    return tuple(out)
