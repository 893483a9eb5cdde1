"""Analytic tail bounds backing the permutation-free p-value bounds.

All bounds return a probability in [0, 1], are nonincreasing in the deviation
argument, and upper-bound the corresponding exact tail (verified by Monte
Carlo dominance suites in the tests).  The one-dimensional suprema behind the
Chernoff bounds are solved numerically; a supremum reported at the search
boundary is a finite under-estimate, which keeps the bound valid (only more
conservative).  Everything here is pure and reentrant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .exceptions import ParameterError
from .models import ExponentialFamily

__all__ = [
    "FinitePopulation",
    "gaussian_survival_bound",
    "bernstein_swr",
    "chernoff_rank",
    "rank_rate",
    "chernoff_exp_family",
    "family_rate",
]

_LAMBDA_CAP = 1e9
_LAMBDA_XTOL = 1e-12


@dataclass(frozen=True)
class FinitePopulation:
    """A finite multiset of reals sampled without replacement.

    Summary statistics are recomputed from the values on every access, never
    cached, so they cannot go stale.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 1 or not np.all(np.isfinite(v)):
            raise ParameterError("population must be a nonempty finite 1-D multiset")
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def variance(self) -> float:
        return float(self.values.var())

    @property
    def max(self) -> float:
        return float(self.values.max())


def gaussian_survival_bound(x: float) -> float:
    """``exp(-x**2 / 2)``, an upper bound on the standard normal survival function."""
    if x < 0:
        raise ParameterError(f"bound defined for x >= 0, got {x}")
    return math.exp(-0.5 * x * x)


def bernstein_swr(pop: FinitePopulation, m: int, t: float) -> float:
    """Bernstein bound on P(mean of m draws without replacement >= pop mean + t).

    Returns ``exp(-m t^2 / (2 sigma^2 + (2/3)(z_max - z_mean) t))`` capped at 1.
    """
    if not (1 <= m <= pop.size):
        raise ParameterError(f"need 1 <= m <= {pop.size}, got m={m}")
    if t < 0:
        raise ParameterError(f"deviation must be >= 0, got t={t}")
    if t == 0:
        return 1.0
    var, spread = pop.variance, pop.max - pop.mean
    denom = 2.0 * var + (2.0 / 3.0) * spread * t
    if denom <= 0.0:
        return 0.0  # degenerate population: upward deviation is impossible
    return min(1.0, math.exp(-m * t * t / denom))


def _log_sinh(u: float) -> float:
    if u < 1e-4:
        return math.log(u) + u * u / 6.0
    if u < 20.0:
        return math.log(math.sinh(u))
    return u - math.log(2.0) + math.log1p(-math.exp(-2.0 * u))


def _coth(u: float) -> float:
    if u < 1e-5:
        return 1.0 / u + u / 3.0
    if u > 20.0:
        return 1.0
    return math.cosh(u) / math.sinh(u)


def _rank_log_mgf(lam: float, n: int) -> float:
    # log E exp(lam * (Z - mean)) for Z uniform on {1..n}
    if lam < 1e-5:
        return lam * lam * (n * n - 1.0) / 24.0
    return _log_sinh(lam * n / 2.0) - math.log(n) - _log_sinh(lam / 2.0)


def _rank_log_mgf_prime(lam: float, n: int) -> float:
    if lam < 1e-7:
        return lam * (n * n - 1.0) / 12.0
    return 0.5 * n * _coth(lam * n / 2.0) - 0.5 * _coth(lam / 2.0)


def rank_rate(n: int, t: float) -> tuple[float, float]:
    """Chernoff rate of a centered uniform draw from {1..n}: (sup value, argmax).

    The objective ``lam * t - log mgf(lam)`` is concave with derivative
    decreasing from t to ``t - (n-1)/2``; the stationary point is bracketed
    and solved by Brent's method.
    """
    if t <= 0.0:
        return 0.0, 0.0
    half_range = (n - 1) / 2.0
    if t > half_range:
        return math.inf, math.inf  # deviation beyond the support
    if t == half_range:
        return math.log(n), math.inf  # supremum attained in the limit

    def dpsi(lam: float) -> float:
        return t - _rank_log_mgf_prime(lam, n)

    lo, hi = 1.0, 1.0
    while dpsi(hi) > 0.0:
        hi *= 2.0
    while dpsi(lo) <= 0.0:
        lo /= 2.0
    lam = optimize.brentq(dpsi, lo, hi, xtol=_LAMBDA_XTOL)
    return lam * t - _rank_log_mgf(lam, n), lam


def chernoff_rank(n: int, m: int, t: float) -> float:
    """Chernoff bound on P(mean of m rank draws without replacement >= (n+1)/2 + t)."""
    if not (1 <= m <= n):
        raise ParameterError(f"need 1 <= m <= n, got m={m}, n={n}")
    if t < 0:
        raise ParameterError(f"deviation must be >= 0, got t={t}")
    sup, _ = rank_rate(n, t)
    if math.isinf(sup):
        return 0.0
    return min(1.0, math.exp(-m * sup))


def family_rate(family: ExponentialFamily, t: float) -> tuple[float, float]:
    """Rate function of the standardized null: sup over lam of ``lam*t - cgf(lam)``.

    Returns (sup value, argmax).  A supremum still rising at the search cap is
    returned at the cap, an under-estimate that keeps derived bounds valid.
    """
    if t <= 0.0:
        return 0.0, 0.0

    def f(lam: float) -> float:
        return lam * t - family.log_mgf_std(lam)

    hi = 1.0
    while hi < _LAMBDA_CAP and f(hi) > f(hi / 2.0):
        hi *= 2.0
    if hi >= _LAMBDA_CAP:
        return f(_LAMBDA_CAP), _LAMBDA_CAP
    res = optimize.minimize_scalar(
        lambda lam: -f(lam), bounds=(0.0, hi), method="bounded",
        options={"xatol": 1e-10},
    )
    lam = float(res.x)
    return max(0.0, f(lam)), lam


def chernoff_exp_family(family: ExponentialFamily, set_size: int, y: float) -> float:
    """Chernoff bound on P(standardized sum over a size-``set_size`` set >= y * sqrt(set_size)).

    Evaluates ``exp(-set_size * rate(y / sqrt(set_size)))``.  For y below 0
    the bound is the trivial 1; for deviations beyond the support the rate is
    infinite and the bound is 0.
    """
    if set_size < 1:
        raise ParameterError(f"set size must be >= 1, got {set_size}")
    t = y / math.sqrt(set_size)
    if t <= 0.0:
        return 1.0
    sup, _ = family_rate(family, t)
    if math.isinf(sup):
        return 0.0
    return min(1.0, math.exp(-set_size * sup))
