"""Calibration of interval scan tests: oracle Monte Carlo, permutation, and ranks.

Three regimes share one statistic (the centered scan over a net):

* oracle -- the null distribution is known; the uncentered scan with the true
  null mean is calibrated by simulation from the null.
* permutation -- the P-value is the fraction of data permutations whose scan
  reaches the observed one; estimated with B sampled permutations and the
  add-one estimator ``(1 + count) / (B + 1)``, which is valid at any B.
* rank -- observations are replaced by their ranks (ties broken at random),
  whose null law is the permutation law of ``1..N``; a single simulated table
  per data size calibrates every future dataset.

Simulated null tables persist to text files keyed by data size and a net
fingerprint; loading a mismatched table is a hard error.  Scan values compared
against a table or against permuted replicas are always computed through the
same batched code path, so ties are exact and count conservatively (as '>=').

Rank-sum moment formulas for a contaminated sample are included as an
executable oracle for the rank statistic's signal size.  Scans of any
increasing transform of the ranks would calibrate the same way; only the
identity score is wired in here.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .exceptions import IncompatibleTableError, ParameterError
from .intervals import ApproximatingNet, Interval, build_fixed_length
from .models import ExponentialFamily, parse_family
from .scan import ScanOutcome, scan, scan_max_many, scan_uncentered

__all__ = [
    "DEFAULT_ALPHAS",
    "TestResult",
    "CalibrationTable",
    "rank_transform",
    "permutation_pvalue",
    "permutation_pvalue_exact",
    "build_null_table",
    "save_table",
    "load_table",
    "rank_scan_test",
    "rank_scan_small_k",
    "rank_scan_bonferroni",
    "RankMomentInputs",
    "RankMoments",
    "rank_moments",
    "rank_moment_inputs",
    "pvalue_bound_bernstein",
    "pvalue_bound_rank",
    "rng_stream",
]

DEFAULT_ALPHAS = (0.01, 0.05, 0.1)

_MAX_EXACT_N = 9
_BATCH_ROWS = 512


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible generator for (seed, replicate key)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


@dataclass(frozen=True)
class TestResult:
    """P-value, observed statistic, maximizing interval, and decisions per level."""

    p_value: float
    statistic: float
    argmax: Interval
    reject_at: dict[float, bool]


def _result(p_value: float, outcome: ScanOutcome) -> TestResult:
    return TestResult(
        p_value=float(p_value),
        statistic=outcome.value,
        argmax=outcome.argmax,
        reject_at={a: p_value <= a for a in DEFAULT_ALPHAS},
    )


# ---------------------------------------------------------------------------
# ranks


def rank_transform(data, rng: np.random.Generator) -> np.ndarray:
    """Ranks 1..N in increasing order with uniformly random tie-breaking.

    Consumes exactly N uniforms from ``rng`` regardless of ties, so results
    are stream-identical under any strictly increasing transform of the data.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ParameterError("data must be a nonempty 1-D sequence")
    order = np.lexsort((rng.random(x.size), x))
    ranks = np.empty(x.size, dtype=np.int64)
    ranks[order] = np.arange(1, x.size + 1)
    return ranks


# ---------------------------------------------------------------------------
# permutation calibration


def _permuted_rows(x: np.ndarray, b: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permuted(np.tile(x, (b, 1)), axis=1)


def _all_permutation_maxima(x: np.ndarray, net: ApproximatingNet) -> np.ndarray:
    rows = np.array(list(itertools.permutations(x.tolist())), dtype=np.float64)
    return scan_max_many(rows, net)


def permutation_pvalue(
    data,
    net: ApproximatingNet,
    b: int = 200,
    rng: np.random.Generator | None = None,
    exhaustive: bool = False,
) -> TestResult:
    """Permutation P-value of the centered scan.

    Sampled mode draws ``b`` uniform permutations and returns the add-one
    estimate ``(1 + #{scan(permuted) >= scan(observed)}) / (b + 1)``, which is
    super-uniform under the null for any ``b``.  Exhaustive mode enumerates
    all N! permutations (N <= 9) and returns the exact fraction.
    """
    x = np.asarray(data, dtype=np.float64)
    outcome = scan(x, net)
    observed = scan_max_many(x[None, :], net)[0]
    if exhaustive:
        if x.size > _MAX_EXACT_N:
            raise ParameterError(f"exhaustive enumeration limited to N <= {_MAX_EXACT_N}")
        maxima = _all_permutation_maxima(x, net)
        p = float(np.count_nonzero(maxima >= observed)) / maxima.size
        return _result(p, outcome)
    if b < 1:
        raise ParameterError(f"need at least one permutation, got b={b}")
    if rng is None:
        raise ParameterError("sampled permutation mode requires an rng")
    maxima = scan_max_many(_permuted_rows(x, b, rng), net)
    p = (1.0 + np.count_nonzero(maxima >= observed)) / (b + 1.0)
    return _result(p, outcome)


def permutation_pvalue_exact(data, net: ApproximatingNet) -> float:
    """Exact permutation P-value by full enumeration; feasible only for N <= 9."""
    x = np.asarray(data, dtype=np.float64)
    if x.size > _MAX_EXACT_N:
        raise ParameterError(f"exhaustive enumeration limited to N <= {_MAX_EXACT_N}")
    observed = scan_max_many(x[None, :], net)[0]
    maxima = _all_permutation_maxima(x, net)
    return float(np.count_nonzero(maxima >= observed)) / maxima.size


# ---------------------------------------------------------------------------
# simulated null tables


@dataclass(frozen=True)
class CalibrationTable:
    """Sorted simulated null values of a scan statistic for one (N, net) pair."""

    n: int
    net_fingerprint: str
    statistic_kind: str
    m: int
    values: np.ndarray = field(repr=False)
    seed: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.size != self.m or self.m < 1:
            raise ParameterError("table must hold M >= 1 values")
        if np.any(np.diff(v) < 0):
            raise ParameterError("table values must be sorted ascending")
        object.__setattr__(self, "values", v)

    def p_value(self, statistic: float) -> float:
        """Add-one P-value; ties with table values count toward rejection of none
        (a tied table value is '>= statistic', the conservative direction)."""
        count_ge = self.m - int(np.searchsorted(self.values, statistic, side="left"))
        return (1.0 + count_ge) / (self.m + 1.0)

    def critical_value(self, alpha: float) -> float:
        """The ceil((1-alpha)(M+1))-th order statistic; +inf when M is too small."""
        if not (0.0 < alpha < 1.0):
            raise ParameterError(f"alpha must be in (0,1), got {alpha}")
        idx = math.ceil((1.0 - alpha) * (self.m + 1))
        if idx > self.m:
            return math.inf
        return float(self.values[idx - 1])

    def require_match(
        self,
        net: ApproximatingNet,
        n: int,
        kind: str | None = None,
        kind_prefix: str | None = None,
    ) -> None:
        if self.n != n:
            raise IncompatibleTableError(f"table built for N={self.n}, data has N={n}")
        if kind is not None and self.statistic_kind != kind:
            raise IncompatibleTableError(
                f"table holds {self.statistic_kind!r}, expected {kind!r}"
            )
        if kind_prefix is not None and not self.statistic_kind.startswith(kind_prefix):
            raise IncompatibleTableError(
                f"table holds {self.statistic_kind!r}, expected {kind_prefix!r}..."
            )
        if self.net_fingerprint != net.fingerprint():
            raise IncompatibleTableError(
                "table was calibrated on a different net (fingerprint mismatch)"
            )


def canonical_kind(
    statistic_kind: str, family: ExponentialFamily | None = None, k: int | None = None
) -> str:
    if statistic_kind == "rank_scan":
        return "rank_scan"
    if statistic_kind == "oracle_scan":
        if family is None:
            raise ParameterError("oracle_scan tables require a family")
        return f"oracle_scan({family.token()})"
    if statistic_kind == "rank_scan_fixed_k":
        if k is None:
            raise ParameterError("rank_scan_fixed_k tables require k")
        return f"rank_scan_fixed_k({k})"
    raise ParameterError(f"unknown statistic kind {statistic_kind!r}")


def oracle_family(table: CalibrationTable) -> ExponentialFamily:
    m = re.fullmatch(r"oracle_scan\((.+)\)", table.statistic_kind)
    if m is None:
        raise IncompatibleTableError(f"not an oracle table: {table.statistic_kind!r}")
    return parse_family(m.group(1))


def build_null_table(
    statistic_kind: str,
    n: int,
    net: ApproximatingNet,
    m: int,
    seed: int,
    family: ExponentialFamily | None = None,
    k: int | None = None,
) -> CalibrationTable:
    """Simulate M null replicates of the scan statistic and sort them.

    ``rank_scan`` / ``rank_scan_fixed_k`` draw random permutations of 1..N
    (the exact null law of ranks, no data distribution needed); ``oracle_scan``
    draws from the family's null.  Replicate i uses the stream (seed, i), so
    tables are reproducible value-for-value from (seed, N, net, M).
    """
    if m < 1:
        raise ParameterError(f"need M >= 1 replicates, got {m}")
    if n != net.spec.n:
        raise ParameterError(f"net built for N={net.spec.n}, requested N={n}")
    kind = canonical_kind(statistic_kind, family=family, k=k)
    if statistic_kind == "rank_scan_fixed_k" and not np.all(net.lengths == k):
        raise ParameterError("fixed-k tables require the fixed-length net")

    ident = np.arange(1, n + 1, dtype=np.int64)
    null_mean = family.null_mean if statistic_kind == "oracle_scan" else None
    values = np.empty(m, dtype=np.float64)
    for lo in range(0, m, _BATCH_ROWS):
        hi = min(lo + _BATCH_ROWS, m)
        if statistic_kind == "oracle_scan":
            rows = np.empty((hi - lo, n), dtype=np.float64)
            for i in range(lo, hi):
                rows[i - lo] = family.sample(0.0, n, rng_stream(seed, i))
        else:
            rows = np.empty((hi - lo, n), dtype=np.int64)
            for i in range(lo, hi):
                rows[i - lo] = rng_stream(seed, i).permutation(ident)
        values[lo:hi] = scan_max_many(rows, net, null_mean=null_mean)
    values.sort()
    return CalibrationTable(
        n=n,
        net_fingerprint=net.fingerprint(),
        statistic_kind=kind,
        m=m,
        values=values,
        seed=seed,
    )


def save_table(table: CalibrationTable, path) -> None:
    """Write the deterministic text form: header plus one 17-significant-digit
    value per line, byte-for-byte reproducible from (seed, N, net, M)."""
    lines = [
        f"caltab v1 N={table.n} kind={table.statistic_kind} "
        f"M={table.m} seed={table.seed} net={table.net_fingerprint}"
    ]
    lines.extend(f"{v:.17g}" for v in table.values)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_table(path) -> CalibrationTable:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        m = re.fullmatch(
            r"caltab v1 N=(\d+) kind=(\S+) M=(\d+) seed=(-?\d+) net=([0-9a-f]+)",
            header,
        )
        if m is None:
            raise ParameterError(f"not a calibration table: {path}")
        values = np.array([float(line) for line in fh if line.strip()], dtype=np.float64)
    return CalibrationTable(
        n=int(m.group(1)),
        net_fingerprint=m.group(5),
        statistic_kind=m.group(2),
        m=int(m.group(3)),
        values=values,
        seed=int(m.group(4)),
    )


# ---------------------------------------------------------------------------
# rank scan tests


def rank_scan_test(
    data, net: ApproximatingNet, table: CalibrationTable, rng: np.random.Generator
) -> TestResult:
    """Distribution-free scan test: rank the data, scan, look up the table."""
    x = np.asarray(data, dtype=np.float64)
    table.require_match(net, x.size, kind="rank_scan")
    ranks = rank_transform(x, rng)
    observed = scan_max_many(ranks[None, :], net)[0]
    return _result(table.p_value(observed), scan(ranks, net))


def rank_scan_small_k(
    data, k: int, table: CalibrationTable, rng: np.random.Generator
) -> TestResult:
    """Rank scan over the complete class of intervals of length exactly k.

    No net approximation: all N-k+1 windows are scanned, which covers anomaly
    sizes too small for the windowed general test.
    """
    x = np.asarray(data, dtype=np.float64)
    if not (2 < k <= x.size):
        raise ParameterError(f"need 2 < k <= N, got k={k}, N={x.size}")
    net = build_fixed_length(x.size, k)
    table.require_match(net, x.size, kind=f"rank_scan_fixed_k({k})")
    ranks = rank_transform(x, rng)
    observed = scan_max_many(ranks[None, :], net)[0]
    return _result(table.p_value(observed), scan(ranks, net))


def rank_scan_bonferroni(
    data,
    k_max: int,
    tables: dict[int, CalibrationTable],
    rng: np.random.Generator,
) -> TestResult:
    """Fixed-k rank scans for every k in 3..k_max, Bonferroni-combined.

    The combined P-value is ``min(1, (k_max - 2) * min_k p_k)``; the reported
    statistic and interval come from the smallest achieving k.  Ranks are
    computed once and shared by all k.
    """
    x = np.asarray(data, dtype=np.float64)
    if k_max <= 2:
        raise ParameterError(f"need k_max > 2, got {k_max}")
    missing = [k for k in range(3, k_max + 1) if k not in tables]
    if missing:
        raise ParameterError(f"missing fixed-k tables for k in {missing}")
    ranks = rank_transform(x, rng)
    best: tuple[float, ScanOutcome] | None = None
    for k in range(3, k_max + 1):
        net = build_fixed_length(x.size, k)
        tables[k].require_match(net, x.size, kind=f"rank_scan_fixed_k({k})")
        observed = scan_max_many(ranks[None, :], net)[0]
        p_k = tables[k].p_value(observed)
        if best is None or p_k < best[0]:
            best = (p_k, scan(ranks, net))
    p = min(1.0, (k_max - 2) * best[0])
    return _result(p, best[1])


# ---------------------------------------------------------------------------
# rank-sum moments (executable oracle)


@dataclass(frozen=True)
class RankMomentInputs:
    """Pairwise beat probabilities driving the rank moments of a contaminated sample.

    ``p_null[i]``: P(anomalous draw i beats a null draw);
    ``p_pairs[i, j]``: P(anomalous i beats anomalous j), only off-diagonal used;
    ``lam[i]``: P(anomalous i beats two independent nulls, tie-adjusted) --
    optional, required only for the variance leading term.
    """

    p_null: np.ndarray
    p_pairs: np.ndarray
    lam: np.ndarray | None = None


@dataclass(frozen=True)
class RankMoments:
    mean_anomalous: np.ndarray
    mean_null: float
    var_leading_anomalous: np.ndarray | None
    cov_order: float  # pairwise rank covariances are O(n); this is the n scale


def rank_moments(s: int, n: int, inputs: RankMomentInputs) -> RankMoments:
    """Exact rank means (and leading-order variances) for s anomalous of n points.

    For anomalous i: ``E R_i = (n - s) p_null[i] + sum_{j != i} p_pairs[i, j] + 1``;
    for null coordinates: ``E R = (n + s + 1)/2 - sum_j p_null[j]``.  The
    variance of an anomalous rank is ``(lam[i] - p_null[i]^2) n^2`` up to
    O(s n); covariances are O(n) and not computed exactly.
    """
    if not (1 <= s < n):
        raise ParameterError(f"need 1 <= s < n, got s={s}, n={n}")
    p0 = np.asarray(inputs.p_null, dtype=np.float64)
    pp = np.asarray(inputs.p_pairs, dtype=np.float64)
    if p0.shape != (s,) or pp.shape != (s, s):
        raise ParameterError("p_null must be (s,), p_pairs must be (s, s)")
    cross = pp.sum(axis=1) - np.diag(pp)
    mean_anom = (n - s) * p0 + cross + 1.0
    mean_null = (n + s + 1) / 2.0 - float(p0.sum())
    var_leading = None
    if inputs.lam is not None:
        lam = np.asarray(inputs.lam, dtype=np.float64)
        if lam.shape != (s,):
            raise ParameterError("lam must be (s,)")
        var_leading = (lam - p0**2) * float(n) ** 2
    return RankMoments(
        mean_anomalous=mean_anom,
        mean_null=mean_null,
        var_leading_anomalous=var_leading,
        cov_order=float(n),
    )


def rank_moment_inputs(family: ExponentialFamily, theta: float, s: int) -> RankMomentInputs:
    """Homogeneous inputs: all s anomalous coordinates share the tilt ``theta``."""
    p = family.exceedance_probability(theta)
    lam = family.double_exceedance_probability(theta)
    return RankMomentInputs(
        p_null=np.full(s, p),
        p_pairs=np.full((s, s), 0.5),
        lam=np.full(s, lam),
    )


# ---------------------------------------------------------------------------
# permutation-free p-value bounds


def pvalue_bound_bernstein(
    scan_value: float,
    n: int,
    q_l: int,
    net_size: int,
    sample_var: float,
    sample_max_minus_mean: float,
) -> float:
    """Conservative upper bound on the permutation P-value from sample statistics.

    ``net_size * exp(-scan^2 / (2 var + (max - mean) 2^{-q_l/2} scan))``, capped
    at 1; valid when every net member has length at least ``2**q_l / 2``.
    """
    if scan_value < 0:
        raise ParameterError(f"scan value must be >= 0, got {scan_value}")
    if sample_var < 0 or sample_max_minus_mean < 0 or net_size < 1:
        raise ParameterError("invalid sample statistics")
    if scan_value == 0.0:
        return 1.0
    denom = 2.0 * sample_var + sample_max_minus_mean * 2.0 ** (-q_l / 2.0) * scan_value
    if denom <= 0.0:
        return 0.0
    return min(1.0, net_size * math.exp(-scan_value**2 / denom))


def pvalue_bound_rank(scan_value: float, n: int, q_l: int, net_size: int) -> float:
    """Rank-scan version of the Bernstein P-value bound.

    Uses the rank population's statistics (variance below ``n^2/12``, spread
    below ``n/2``): ``net_size * exp(-scan^2 / (n^2/6 + (n/2) 2^{-q_l/2} scan))``.
    """
    if scan_value < 0:
        raise ParameterError(f"scan value must be >= 0, got {scan_value}")
    if net_size < 1 or n < 2:
        raise ParameterError("invalid arguments")
    if scan_value == 0.0:
        return 1.0
    denom = n * n / 6.0 + (n / 2.0) * 2.0 ** (-q_l / 2.0) * scan_value
    return min(1.0, net_size * math.exp(-scan_value**2 / denom))
