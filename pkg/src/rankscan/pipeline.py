"""Data ingestion, detection/identification pipelines, the RSI baseline, and power curves.

Distribution-free paths (permutation and rank) take no null-model input by
construction; only the oracle path consumes a family, and it reads it from
the calibration table it was given.  Every pipeline is deterministic given
(config, seed): replicate i of stage s draws from the stream (seed, s, i).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import IncompatibleTableError, ParameterError, ParseError
from .intervals import ApproximatingNet, Interval, build_dyadic_lengths, similarity
from .calibration import (
    CalibrationTable,
    TestResult,
    _result,
    build_null_table,
    oracle_family,
    permutation_pvalue,
    pvalue_bound_rank,
    rank_scan_test,
    rank_transform,
    rng_stream,
)
from .models import AlternativeSpec, ExponentialFamily, sample_alternative, sample_null
from .scan import scan_max_many, scan_uncentered, scan_values

__all__ = [
    "ingest",
    "detect_oracle",
    "detect_permutation",
    "detect_rank",
    "IdentificationReport",
    "identify",
    "rsi_baseline",
    "PowerCell",
    "power_curve",
    "power_rows_to_csv",
    "MINIMAX_BOUNDARY_T",
]

MINIMAX_BOUNDARY_T = 1.0

_STAGE_DATA, _STAGE_TIES, _STAGE_PERM = 1, 2, 3


# ---------------------------------------------------------------------------
# ingestion


def _aggregate(values: np.ndarray, bin_width: int, aggregator: str) -> np.ndarray:
    if bin_width < 1:
        raise ParameterError(f"bin width must be >= 1, got {bin_width}")
    if aggregator not in ("sum", "median"):
        raise ParameterError(f"aggregator must be 'sum' or 'median', got {aggregator!r}")
    nbins = values.size // bin_width
    if nbins == 0:
        raise ParameterError(
            f"bin width {bin_width} exceeds the {values.size} ingested values"
        )
    trimmed = values[: nbins * bin_width].reshape(nbins, bin_width)
    return trimmed.sum(axis=1) if aggregator == "sum" else np.median(trimmed, axis=1)


def ingest(
    path,
    fmt: str = "plain",
    column: str | None = None,
    bin_width: int = 1,
    aggregator: str = "sum",
) -> np.ndarray:
    """Read a numeric series and group it into consecutive aggregated bins.

    ``plain`` accepts whitespace-separated numbers, any number per line;
    ``csv`` reads one named column (default: the first) from a headed file.
    A trailing bin shorter than ``bin_width`` is dropped.
    """
    values: list[float] = []
    if fmt == "plain":
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                for token in line.split():
                    try:
                        values.append(float(token))
                    except ValueError:
                        raise ParseError(f"not a number: {token!r}", line=lineno) from None
    elif fmt == "csv":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ParseError("empty input")
            if column is None:
                idx = 0
            elif column in header:
                idx = header.index(column)
            else:
                raise ParseError(f"no column {column!r} in header {header}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    values.append(float(row[idx]))
                except (ValueError, IndexError):
                    raise ParseError(f"bad value in column {idx}", line=lineno) from None
    else:
        raise ParameterError(f"unknown input format {fmt!r}")
    if not values:
        raise ParseError("empty input")
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ParseError("input contains non-finite values")
    return _aggregate(arr, bin_width, aggregator)


# ---------------------------------------------------------------------------
# detection


def detect_oracle(data, net: ApproximatingNet, table: CalibrationTable) -> TestResult:
    """Oracle scan test; the null model is read from the calibration table."""
    x = np.asarray(data, dtype=np.float64)
    table.require_match(net, x.size, kind_prefix="oracle_scan(")
    family = oracle_family(table)
    observed = scan_max_many(x[None, :], net, null_mean=family.null_mean)[0]
    outcome = scan_uncentered(x, net, null_mean=family.null_mean)
    return _result(table.p_value(observed), outcome)


def detect_permutation(
    data, net: ApproximatingNet, b: int, rng: np.random.Generator
) -> TestResult:
    return permutation_pvalue(data, net, b=b, rng=rng)


def detect_rank(
    data, net: ApproximatingNet, table: CalibrationTable, rng: np.random.Generator
) -> TestResult:
    return rank_scan_test(data, net, table, rng)


# ---------------------------------------------------------------------------
# identification


@dataclass(frozen=True)
class IdentificationReport:
    """Merged significant intervals plus quality metrics against a known truth.

    ``dissimilarities[j]`` is the smallest ``1 - similarity`` between true
    interval j and any selected interval (1.0 when nothing was selected);
    ``overselection`` counts selected intervals disjoint from every true one.
    """

    selected: list[Interval]
    statistics: list[float]
    pvalue_bounds: list[float]
    dissimilarities: list[float] = field(default_factory=list)
    overselection: int = 0
    threshold: float = math.inf
    alpha: float = 0.05


def _merge_union(pairs: list[tuple[Interval, float]]) -> list[tuple[Interval, float]]:
    # union of selections that overlap or touch (gap 0)
    merged: list[tuple[int, int, float]] = []
    for iv, val in sorted(pairs, key=lambda p: (p[0].a, p[0].b)):
        if merged and iv.a <= merged[-1][1] + 1:
            a, b, v = merged[-1]
            merged[-1] = (a, max(b, iv.b), max(v, val))
        else:
            merged.append((iv.a, iv.b, val))
    return [(Interval(a, b), v) for a, b, v in merged]


def _merge_best(pairs: list[tuple[Interval, float]]) -> list[tuple[Interval, float]]:
    # keep the most significant among selections that intersect
    kept: list[tuple[Interval, float]] = []
    for iv, val in sorted(pairs, key=lambda p: (-p[1], p[0].length, p[0].a)):
        if all(not iv.overlaps(other) for other, _ in kept):
            kept.append((iv, val))
    return sorted(kept, key=lambda p: (p[0].a, p[0].b))


def _metrics(
    selected: list[Interval], truth: list[Interval] | None
) -> tuple[list[float], int]:
    if truth is None:
        return [], 0
    diss = [
        min((1.0 - similarity(t, s) for s in selected), default=1.0) for t in truth
    ]
    over = sum(1 for s in selected if all(not s.overlaps(t) for t in truth))
    return diss, over


def identify(
    data,
    net: ApproximatingNet,
    table: CalibrationTable,
    alpha: float = 0.05,
    rng: np.random.Generator | None = None,
    truth: list[Interval] | None = None,
    merge: str = "union",
) -> IdentificationReport:
    """Extract all net intervals whose statistic clears the level-alpha critical
    value of the scanned maximum, then merge overlapping/contiguous ones.

    Works with rank tables (default; requires ``rng`` for tie-breaking) or
    oracle tables.  Thresholding per interval at the maximum's critical value
    keeps the chance of any false selection at alpha.
    """
    x = np.asarray(data, dtype=np.float64)
    if merge not in ("union", "best"):
        raise ParameterError(f"merge must be 'union' or 'best', got {merge!r}")
    if table.statistic_kind == "rank_scan":
        table.require_match(net, x.size, kind="rank_scan")
        if rng is None:
            raise ParameterError("rank identification requires an rng for tie-breaking")
        values = scan_values(rank_transform(x, rng), net)
        n = x.size
        q_l = int(net.lengths.min()).bit_length() - 1
        bound = lambda v: pvalue_bound_rank(max(0.0, v), n, q_l, len(net))
    elif table.statistic_kind.startswith("oracle_scan("):
        table.require_match(net, x.size, kind_prefix="oracle_scan(")
        family = oracle_family(table)
        values = scan_values(x, net, null_mean=family.null_mean)
        bound = table.p_value
    else:
        raise IncompatibleTableError(
            f"identification needs a rank or oracle table, got {table.statistic_kind!r}"
        )
    threshold = table.critical_value(alpha)
    hits = [
        (net.interval(i), float(values[i]))
        for i in np.flatnonzero(values >= threshold)
    ]
    merged = _merge_union(hits) if merge == "union" else _merge_best(hits)
    diss, over = _metrics([iv for iv, _ in merged], truth)
    return IdentificationReport(
        selected=[iv for iv, _ in merged],
        statistics=[v for _, v in merged],
        pvalue_bounds=[float(bound(v)) for _, v in merged],
        dissimilarities=diss,
        overselection=over,
        threshold=threshold,
        alpha=alpha,
    )


def rsi_baseline(
    data,
    m: int,
    max_len: int,
    truth: list[Interval] | None = None,
    merge: str = "union",
) -> IdentificationReport:
    """Robust segment identifier: bin medians, robust-standardize, scan, threshold.

    Bins of ``m`` points are reduced to their median, centered at the median
    of the medians, and scaled by 1.4826 * MAD.  Dyadic-length runs of bins up
    to ``max_len`` original positions are scored by their normalized sum and
    selected above ``sqrt(2 log N)`` (N the original length), then merged and
    mapped back to original coordinates.  Degenerate scale (MAD = 0) selects
    nothing.  A simplified stand-in: the scale calibration is empirical, so
    the baseline runs conservative.
    """
    x = np.asarray(data, dtype=np.float64)
    n = x.size
    if not (1 <= m <= n):
        raise ParameterError(f"need 1 <= m <= N, got m={m}, N={n}")
    if not (1 <= max_len <= n):
        raise ParameterError(f"need 1 <= max_len <= N, got {max_len}")
    threshold = math.sqrt(2.0 * math.log(n))
    meds = _aggregate(x, m, "median")
    center = float(np.median(meds))
    mad = float(np.median(np.abs(meds - center)))
    if mad == 0.0 or meds.size < 2:
        diss, over = _metrics([], truth)
        return IdentificationReport(
            selected=[], statistics=[], pvalue_bounds=[],
            dissimilarities=diss, overselection=over, threshold=threshold,
        )
    z = (meds - center) / (1.4826 * mad)
    max_bins = max(1, max_len // m)
    net_b = build_dyadic_lengths(meds.size, min(int(math.log2(max_bins)), int(math.log2(meds.size))))
    values = scan_values(z, net_b, null_mean=0.0)
    hits = []
    for i in np.flatnonzero(values >= threshold):
        iv = net_b.interval(i)
        hits.append((Interval((iv.a - 1) * m + 1, iv.b * m), float(values[i])))
    merged = _merge_union(hits) if merge == "union" else _merge_best(hits)
    diss, over = _metrics([iv for iv, _ in merged], truth)
    return IdentificationReport(
        selected=[iv for iv, _ in merged],
        statistics=[v for _, v in merged],
        pvalue_bounds=[min(1.0, len(net_b) * math.exp(-0.5 * v * v)) for _, v in merged],
        dissimilarities=diss,
        overselection=over,
        threshold=threshold,
    )


# ---------------------------------------------------------------------------
# power curves


@dataclass(frozen=True)
class PowerCell:
    t: float
    test: str
    power: float
    moe: float  # 95% binomial margin of error


def power_curve(
    n: int,
    anomaly_length: int,
    family: ExponentialFamily,
    t_grid: list[float],
    tests: list[str],
    replicates: int,
    alpha: float = 0.05,
    permutations: int = 200,
    table_replicates: int = 1000,
    seed: int = 0,
    net: ApproximatingNet | None = None,
    anomaly_start: int | None = None,
) -> list[PowerCell]:
    """Rejection frequency of each test at each signal amplitude.

    One dataset per (t, replicate) is shared by all tests.  Oracle and rank
    tables are built once; the permutation test redraws its permutations per
    replicate.  The anomaly defaults to an aligned interval at the midpoint.
    """
    if not t_grid:
        raise ParameterError("t grid must be nonempty")
    if replicates < 1:
        raise ParameterError("need at least one replicate")
    unknown = [t for t in tests if t not in ("oracle", "perm", "rank")]
    if unknown:
        raise ParameterError(f"unknown tests {unknown}")
    if net is None:
        net = build_dyadic_lengths(n, int(math.log2(n)))
    if anomaly_start is None:
        anomaly_start = n // 2 + 1
    anomaly = Interval(anomaly_start, anomaly_start + anomaly_length - 1)

    tables: dict[str, CalibrationTable] = {}
    if "oracle" in tests:
        tables["oracle"] = build_null_table(
            "oracle_scan", n, net, table_replicates, seed + 1_000_003, family=family
        )
    if "rank" in tests:
        tables["rank"] = build_null_table(
            "rank_scan", n, net, table_replicates, seed + 2_000_003
        )

    cells: list[PowerCell] = []
    for ti, t in enumerate(t_grid):
        rejects = {test: 0 for test in tests}
        for rep in range(replicates):
            data_rng = rng_stream(seed, _STAGE_DATA, ti, rep)
            if t == 0.0:
                data = sample_null(family, n, data_rng)
            else:
                data = sample_alternative(
                    AlternativeSpec(n=n, anomaly=anomaly, amplitude_t=t, family=family),
                    data_rng,
                )
            for test in tests:
                if test == "oracle":
                    res = detect_oracle(data, net, tables["oracle"])
                elif test == "rank":
                    res = detect_rank(
                        data, net, tables["rank"], rng_stream(seed, _STAGE_TIES, ti, rep)
                    )
                else:
                    res = detect_permutation(
                        data, net, permutations, rng_stream(seed, _STAGE_PERM, ti, rep)
                    )
                rejects[test] += res.p_value <= alpha
        for test in tests:
            p_hat = rejects[test] / replicates
            moe = 1.96 * math.sqrt(p_hat * (1.0 - p_hat) / replicates)
            cells.append(PowerCell(t=float(t), test=test, power=p_hat, moe=moe))
    return cells


def power_rows_to_csv(
    cells: list[PowerCell], path, meta: dict | None = None
) -> None:
    """Versioned delimited output; one row per (t, test) cell."""
    lines = []
    info = " ".join(f"{k}={v}" for k, v in (meta or {}).items())
    lines.append(f"# rankscan power v1 minimax_t={MINIMAX_BOUNDARY_T:g}"
                 + (f" {info}" if info else ""))
    lines.append("t,test,power,moe")
    for c in cells:
        lines.append(f"{c.t:g},{c.test},{c.power:.6f},{c.moe:.6f}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
