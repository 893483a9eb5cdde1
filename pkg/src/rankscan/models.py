"""Natural exponential-family models: null/alternative samplers and rank-signal moments.

Each family tilts a base null distribution F0 by a natural parameter
``theta >= 0``: the tilted law has density ``exp(theta * x - log mgf0(theta))``
relative to F0.  Shipped members: the unit-variance normal location model, the
Poisson model (base rate ``lam0``, tilted rate ``lam0 * exp(theta)``), and the
Bernoulli model (base success probability ``p0``).  Tilting is stochastically
increasing in ``theta`` for every member.

Quantities with "standardized" in their contract refer to the null rescaled
to zero mean and unit variance; rank and permutation procedures are invariant
to that rescaling, so it affects presentation only.

Known hard limit (Bernoulli-type data): under a fair-coin null, chance runs of
maximal values of length about ``log2 N`` occur, so no calibration can detect
anomalies shorter than a small multiple of ``log N`` in such data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .exceptions import ParameterError
from .intervals import Interval

__all__ = [
    "ExponentialFamily",
    "NormalFamily",
    "PoissonFamily",
    "BernoulliFamily",
    "make_family",
    "parse_family",
    "AlternativeSpec",
    "signal_theta",
    "sample_null",
    "sample_alternative",
    "exceedance_probability",
    "double_exceedance_probability",
    "half_expected_max",
    "mean_var_theta",
    "censor",
]

_DISCRETE_TAIL = 1e-13  # per-sum truncation; total truncation error < 1e-12


class ExponentialFamily:
    """Common surface of the shipped one-parameter families."""

    name: str
    theta_star: float = math.inf

    def _check_theta(self, theta: float) -> float:
        theta = float(theta)
        if not (0.0 <= theta < self.theta_star) or not math.isfinite(theta):
            raise ParameterError(
                f"theta={theta} outside [0, {self.theta_star}) for {self.name}"
            )
        return theta

    # raw null moments
    @property
    def null_mean(self) -> float:
        return self.mean_var(0.0)[0]

    @property
    def null_sd(self) -> float:
        return math.sqrt(self.mean_var(0.0)[1])

    def standardize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.null_mean) / self.null_sd

    def sample(self, theta: float, size: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def mean_var(self, theta: float) -> tuple[float, float]:
        """Exact raw mean and variance of the tilted law."""
        raise NotImplementedError

    def exceedance_probability(self, theta: float) -> float:
        """P(Y > X) + P(Y = X)/2 for X null and Y tilted, independent."""
        raise NotImplementedError

    def double_exceedance_probability(self, theta: float) -> float:
        """P(Y beats both of two independent nulls) under random tie-breaking.

        Equals P(Y > X1, Y > X2) + P(Y = X1 > X2) + P(Y = X1 = X2)/3; the
        second moment driver of an anomalous coordinate's rank.
        """
        raise NotImplementedError

    def half_expected_max(self) -> float:
        """E[max(X, Y)]/2 for X, Y independent draws of the standardized null."""
        raise NotImplementedError

    def log_mgf_std(self, lam: float) -> float:
        """Cumulant generating function of the standardized null."""
        raise NotImplementedError

    def token(self) -> str:
        """Canonical text form used in table headers and CLI round-trips."""
        raise NotImplementedError


@dataclass(frozen=True)
class NormalFamily(ExponentialFamily):
    name: str = "normal"

    def sample(self, theta, size, rng):
        theta = self._check_theta(theta)
        return rng.standard_normal(size) + theta

    def mean_var(self, theta):
        return self._check_theta(theta), 1.0

    def exceedance_probability(self, theta):
        # Y - X ~ N(theta, 2), so P(Y > X) = Phi(theta / sqrt(2)); no ties.
        theta = self._check_theta(theta)
        return 0.5 * math.erfc(-theta / 2.0)

    def double_exceedance_probability(self, theta):
        theta = self._check_theta(theta)
        val, _ = integrate.quad(
            lambda x: stats.norm.cdf(x) ** 2 * stats.norm.pdf(x - theta),
            -np.inf,
            np.inf,
        )
        return float(val)

    def half_expected_max(self):
        return 0.5 / math.sqrt(math.pi)

    def log_mgf_std(self, lam):
        return 0.5 * lam * lam

    def token(self):
        return "normal"


@dataclass(frozen=True)
class PoissonFamily(ExponentialFamily):
    lam0: float = 1.0
    name: str = "poisson"

    def __post_init__(self):
        if not (self.lam0 > 0 and math.isfinite(self.lam0)):
            raise ParameterError(f"poisson base rate must be positive, got {self.lam0}")

    def _rate(self, theta: float) -> float:
        return self.lam0 * math.exp(self._check_theta(theta))

    def _support(self, *rates: float) -> np.ndarray:
        hi = max(stats.poisson.isf(_DISCRETE_TAIL, r) for r in rates)
        return np.arange(0, int(hi) + 2)

    def sample(self, theta, size, rng):
        return rng.poisson(self._rate(theta), size)

    def mean_var(self, theta):
        lam = self._rate(theta)
        return lam, lam

    def exceedance_probability(self, theta):
        lam1 = self._rate(theta)
        k = self._support(self.lam0, lam1)
        pmf1 = stats.poisson.pmf(k, lam1)
        cdf0 = stats.poisson.cdf(k - 1, self.lam0)
        pmf0 = stats.poisson.pmf(k, self.lam0)
        return float(np.sum(pmf1 * (cdf0 + 0.5 * pmf0)))

    def double_exceedance_probability(self, theta):
        lam1 = self._rate(theta)
        k = self._support(self.lam0, lam1)
        pmf1 = stats.poisson.pmf(k, lam1)
        cdf0 = stats.poisson.cdf(k - 1, self.lam0)
        pmf0 = stats.poisson.pmf(k, self.lam0)
        return float(np.sum(pmf1 * (cdf0**2 + pmf0 * cdf0 + pmf0**2 / 3.0)))

    def half_expected_max(self):
        k = self._support(self.lam0)
        cdf = stats.poisson.cdf(k, self.lam0)
        cdf_prev = np.concatenate([[0.0], cdf[:-1]])
        e_max_raw = float(np.sum(k * (cdf**2 - cdf_prev**2)))
        return 0.5 * (e_max_raw - self.lam0) / math.sqrt(self.lam0)

    def log_mgf_std(self, lam):
        s = math.sqrt(self.lam0)
        # np.expm1 saturates to inf instead of raising on large arguments
        return float(self.lam0 * np.expm1(lam / s) - lam * s)

    def token(self):
        return f"poisson:lam0={self.lam0:g}"


@dataclass(frozen=True)
class BernoulliFamily(ExponentialFamily):
    p0: float = 0.5
    name: str = "bernoulli"

    def __post_init__(self):
        if not (0.0 < self.p0 < 1.0):
            raise ParameterError(f"bernoulli base probability must be in (0,1), got {self.p0}")

    def tilted_probability(self, theta: float) -> float:
        # strictly below 1 for every finite theta
        theta = self._check_theta(theta)
        e = math.exp(theta)
        return self.p0 * e / (1.0 - self.p0 + self.p0 * e)

    def sample(self, theta, size, rng):
        return rng.binomial(1, self.tilted_probability(theta), size)

    def mean_var(self, theta):
        p = self.tilted_probability(theta)
        return p, p * (1.0 - p)

    def exceedance_probability(self, theta):
        p0, p1 = self.p0, self.tilted_probability(theta)
        return p1 * (1.0 - p0) + 0.5 * (p1 * p0 + (1.0 - p1) * (1.0 - p0))

    def double_exceedance_probability(self, theta):
        p0, p1 = self.p0, self.tilted_probability(theta)
        q0 = 1.0 - p0
        # y=1: beats both iff not tied (x=0); ties at x=1. y=0: only ties at x=0.
        lam1 = q0**2 + p0 * q0 + p0**2 / 3.0
        lam0 = q0**2 / 3.0
        return p1 * lam1 + (1.0 - p1) * lam0

    def half_expected_max(self):
        p0 = self.p0
        sd = math.sqrt(p0 * (1.0 - p0))
        hi, lo = (1.0 - p0) / sd, -p0 / sd
        e_max = hi * (1.0 - (1.0 - p0) ** 2) + lo * (1.0 - p0) ** 2
        return 0.5 * e_max

    def log_mgf_std(self, lam):
        sd = math.sqrt(self.p0 * (1.0 - self.p0))
        u = lam / sd
        if u > 30.0:  # avoid exp overflow; exact rearrangement
            log_term = u + math.log(self.p0 + (1.0 - self.p0) * math.exp(-u))
        else:
            log_term = math.log(1.0 - self.p0 + self.p0 * math.exp(u))
        return -lam * self.p0 / sd + log_term

    def token(self):
        return f"bernoulli:p0={self.p0:g}"


def make_family(name: str, **params) -> ExponentialFamily:
    name = name.lower()
    if name == "normal":
        return NormalFamily()
    if name == "poisson":
        return PoissonFamily(lam0=float(params.get("lam0", 1.0)))
    if name == "bernoulli":
        return BernoulliFamily(p0=float(params.get("p0", 0.5)))
    raise ParameterError(f"unknown family {name!r}")


def parse_family(token: str) -> ExponentialFamily:
    """Inverse of ``ExponentialFamily.token``, e.g. ``"poisson:lam0=2"``."""
    name, _, rest = token.partition(":")
    params = {}
    if rest:
        for item in rest.split(","):
            key, _, val = item.partition("=")
            if not val:
                raise ParameterError(f"malformed family token {token!r}")
            params[key] = val
    return make_family(name, **params)


@dataclass(frozen=True)
class AlternativeSpec:
    """A planted anomaly: elevated tilt over one interval of an otherwise null sequence.

    The tilt follows the calibrated amplitude rule
    ``theta = amplitude_t * sqrt(2 log(n) / |anomaly|)``, under which
    ``amplitude_t = 1`` marks the detectability boundary for the oracle test.
    """

    n: int
    anomaly: Interval
    amplitude_t: float
    family: ExponentialFamily

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError(f"sequence length must be >= 2, got {self.n}")
        if self.anomaly.b > self.n:
            raise ParameterError(
                f"anomaly {self.anomaly} does not fit in [1, {self.n}]"
            )
        if self.amplitude_t < 0:
            raise ParameterError("amplitude must be >= 0")
        self.family._check_theta(self.theta)

    @property
    def theta(self) -> float:
        return signal_theta(self.n, self.anomaly.length, self.amplitude_t)


def signal_theta(n: int, anomaly_length: int, amplitude_t: float) -> float:
    """Tilt corresponding to amplitude ``t``: ``t * sqrt(2 log(n) / length)``."""
    return amplitude_t * math.sqrt(2.0 * math.log(n) / anomaly_length)


def sample_null(family: ExponentialFamily, n: int, rng: np.random.Generator) -> np.ndarray:
    """n independent draws from the family's null distribution."""
    return family.sample(0.0, n, rng)


def sample_alternative(alt: AlternativeSpec, rng: np.random.Generator) -> np.ndarray:
    """Null draws with the anomaly interval replaced by tilted draws."""
    data = alt.family.sample(0.0, alt.n, rng)
    data[alt.anomaly.a - 1 : alt.anomaly.b] = alt.family.sample(
        alt.theta, alt.anomaly.length, rng
    )
    return data


def exceedance_probability(family: ExponentialFamily, theta: float) -> float:
    return family.exceedance_probability(theta)


def double_exceedance_probability(family: ExponentialFamily, theta: float) -> float:
    return family.double_exceedance_probability(theta)


def half_expected_max(family: ExponentialFamily) -> float:
    return family.half_expected_max()


def mean_var_theta(
    family: ExponentialFamily, theta: float, standardized: bool = False
) -> tuple[float, float]:
    """Mean and variance of the tilted law, raw or in standardized null units."""
    mean, var = family.mean_var(theta)
    if standardized:
        sd0 = family.null_sd
        return (mean - family.null_mean) / sd0, var / (sd0 * sd0)
    return mean, var


def censor(data, t: float) -> np.ndarray:
    """Clamp entries to ``[-t, t]``, preserving sign at the boundary.

    Monotone, so the ranks of entries whose magnitudes stay below ``t`` are
    unchanged; enforces compact support before permutation scanning and caps
    the leverage of any single outlier.
    """
    if t < 0:
        raise ParameterError(f"censoring threshold must be >= 0, got {t}")
    return np.clip(np.asarray(data, dtype=np.float64), -t, t)
