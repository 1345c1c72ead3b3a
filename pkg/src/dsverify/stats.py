"""Statistics kernels: empirical-Bernstein sizing and the chi-square tail."""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "SizeBound",
    "bernstein_radius",
    "chi_square_pvalue",
    "regularized_gamma_p",
    "regularized_gamma_q",
    "required_sample_size",
]

_EPS = 1e-16
_MAX_ITER = 10_000
_TINY = 1e-300


@dataclass(frozen=True)
class SizeBound:
    epsilon: float
    delta: float
    sigma_hat: float
    range_R: float

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.sigma_hat >= 0:
            raise ValueError("sigma_hat must be non-negative")
        if not self.range_R > 0:
            raise ValueError("range_R must be positive")

    @property
    def required_n(self) -> int:
        return required_sample_size(self.epsilon, self.delta, self.sigma_hat, self.range_R)


def bernstein_radius(n: int, delta: float, sigma_hat: float, range_R: float) -> float:
    """Empirical-Bernstein half-width ``sigma*sqrt(2 ln(3/delta)/n) + 3 R ln(3/delta)/n``."""
    log_term = math.log(3.0 / delta)
    return sigma_hat * math.sqrt(2.0 * log_term / n) + 3.0 * range_R * log_term / n


def required_sample_size(epsilon: float, delta: float, sigma_hat: float, range_R: float) -> int:
    """Smallest ``n`` with ``bernstein_radius(n) <= epsilon``.

    The radius is ``a x^2 + b x`` in ``x = 1/sqrt(n)``, so the positive root of
    the quadratic gives the real threshold; the integer answer is then settled
    by evaluating the radius itself around the ceiling.
    """
    SizeBound(epsilon, delta, sigma_hat, range_R)
    log_term = math.log(3.0 / delta)
    a = 3.0 * range_R * log_term
    b = sigma_hat * math.sqrt(2.0 * log_term)
    # numerically stable positive root of a x^2 + b x - epsilon = 0
    x = 2.0 * epsilon / (b + math.sqrt(b * b + 4.0 * a * epsilon))
    n = max(1, math.ceil(1.0 / (x * x)))
    while n > 1 and bernstein_radius(n - 1, delta, sigma_hat, range_R) <= epsilon:
        n -= 1
    while bernstein_radius(n, delta, sigma_hat, range_R) > epsilon:
        n += 1
    return n


def _gamma_series(a: float, x: float) -> float:
    """Lower regularized gamma P(a, x) by its power series (x < a + 1)."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_continued_fraction(a: float, x: float) -> float:
    """Upper regularized gamma Q(a, x) by modified Lentz continued fraction (x >= a + 1)."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < _EPS:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma_p(a: float, x: float) -> float:
    if a <= 0 or x < 0:
        raise ValueError("need a > 0 and x >= 0")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_continued_fraction(a, x)


def regularized_gamma_q(a: float, x: float) -> float:
    if a <= 0 or x < 0:
        raise ValueError("need a > 0 and x >= 0")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_continued_fraction(a, x)


def chi_square_pvalue(statistic: float, dof: int) -> float:
    """Upper-tail probability ``P(X >= statistic)`` for a chi-square with ``dof`` degrees of freedom."""
    if statistic < 0 or math.isnan(statistic):
        raise ValueError("statistic must be non-negative")
    if dof < 1 or int(dof) != dof:
        raise ValueError("dof must be a positive integer")
    return regularized_gamma_q(dof / 2.0, statistic / 2.0)
