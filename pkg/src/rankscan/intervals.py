"""Interval classes and approximating nets for multiscale interval scanning.

An approximating net is a small family of candidate intervals such that every
discrete interval of ``[1, N]`` overlaps well with some member.  Scanning the
net instead of all ``N(N+1)/2`` intervals makes the scan nearly linear while
losing almost nothing in detectable signal.

Two net constructions are provided:

* ``build_dyadic_net`` -- the recursive construction that starts from unions
  of adjacent dyadic blocks and repeatedly appends optional dyadic flanks.
  With depth parameter ``b`` it has at most ``N * 4**(b+1)`` members and every
  interval is contained in a member with similarity at least
  ``(1 + 2**(-b+2)) ** -0.5``.
* ``build_dyadic_lengths`` -- all intervals whose length is a power of two,
  at every start position.  Simpler, slightly richer at small scales, and the
  class used by the simulation harness.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError

__all__ = [
    "Interval",
    "NetSpec",
    "ApproximatingNet",
    "similarity",
    "build_dyadic_net",
    "build_dyadic_lengths",
    "build_full",
    "build_fixed_length",
    "restrict_net",
    "default_depth",
    "default_length_bounds",
]


@dataclass(frozen=True, order=True)
class Interval:
    """Closed discrete interval ``[a, b]`` of 1-based node indices."""

    a: int
    b: int

    def __post_init__(self):
        if not (1 <= self.a <= self.b):
            raise ParameterError(f"invalid interval [{self.a}, {self.b}]")

    @property
    def length(self) -> int:
        return self.b - self.a + 1

    def intersection_size(self, other: "Interval") -> int:
        return max(0, min(self.b, other.b) - max(self.a, other.a) + 1)

    def contains(self, other: "Interval") -> bool:
        return self.a <= other.a and other.b <= self.b

    def overlaps(self, other: "Interval") -> bool:
        return self.intersection_size(other) > 0


def similarity(s1: Interval, s2: Interval) -> float:
    """Normalized overlap ``|s1 ∩ s2| / sqrt(|s1| |s2|)``.

    Symmetric, in ``[0, 1]``, and equal to 1 exactly when the intervals
    coincide.
    """
    inter = s1.intersection_size(s2)
    if inter == 0:
        return 0.0
    return inter / math.sqrt(s1.length * s2.length)


@dataclass(frozen=True)
class NetSpec:
    """Identifying parameters of an approximating net.

    ``kind`` is one of ``full``, ``dyadic_net`` (with depth ``b``) or
    ``dyadic_lengths``.  ``q_l``/``q_u`` are optional log2 length bounds:
    the restriction window for ``dyadic_net``, the range of length exponents
    for ``dyadic_lengths``, and the exact length exponent pair for fixed-size
    classes is not represented here (see ``build_fixed_length``).
    """

    n: int
    kind: str
    b: int | None = None
    q_l: int | None = None
    q_u: int | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ParameterError(f"ambient size must be >= 2, got {self.n}")
        if self.kind not in ("full", "dyadic_net", "dyadic_lengths", "fixed_length"):
            raise ParameterError(f"unknown net kind {self.kind!r}")
        if self.kind == "dyadic_net" and (self.b is None or self.b < 0):
            raise ParameterError("dyadic_net requires depth b >= 0")
        if self.q_l is not None and self.q_u is not None:
            if not (0 <= self.q_l <= self.q_u) or (1 << self.q_u) > _next_pow2(self.n):
                raise ParameterError(
                    f"invalid length bounds ql={self.q_l} qu={self.q_u} for n={self.n}"
                )

    def header(self) -> str:
        def fmt(v):
            return "-" if v is None else str(v)

        return (
            f"netspec N={self.n} kind={self.kind} "
            f"b={fmt(self.b)} ql={fmt(self.q_l)} qu={fmt(self.q_u)}"
        )


@dataclass(frozen=True)
class ApproximatingNet:
    """A deduplicated, (length, start)-sorted collection of intervals.

    Immutable after construction; safe to share across concurrent scans.
    ``starts``/``ends`` are parallel int64 arrays, the representation used by
    the scan engine.
    """

    spec: NetSpec
    starts: np.ndarray = field(repr=False)
    ends: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return int(self.starts.size)

    @property
    def lengths(self) -> np.ndarray:
        return self.ends - self.starts + 1

    @property
    def intervals(self) -> list[Interval]:
        return [Interval(int(a), int(b)) for a, b in zip(self.starts, self.ends)]

    def interval(self, i: int) -> Interval:
        return Interval(int(self.starts[i]), int(self.ends[i]))

    def serialize(self) -> str:
        """Line-oriented text form: header, then one ``"a b"`` line per interval."""
        lines = [self.spec.header()]
        lines.extend(f"{a} {b}" for a, b in zip(self.starts, self.ends))
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        """SHA-256 hex digest of the serialized net; keys calibration tables."""
        return hashlib.sha256(self.serialize().encode("ascii")).hexdigest()


def _next_pow2(n: int) -> int:
    return 1 << max(1, (n - 1).bit_length())


def _finalize(spec: NetSpec, pairs: set[tuple[int, int]]) -> ApproximatingNet:
    arr = sorted(pairs, key=lambda ab: (ab[1] - ab[0], ab[0]))
    starts = np.asarray([a for a, _ in arr], dtype=np.int64)
    ends = np.asarray([b for _, b in arr], dtype=np.int64)
    return ApproximatingNet(spec=spec, starts=starts, ends=ends)


def _aligned_blocks(n: int, scale: int) -> list[tuple[int, int]]:
    size = 1 << scale
    return [(1 + k * size, (k + 1) * size) for k in range(n >> scale)]


def _flank(members: set[tuple[int, int]], scale: int, n: int) -> set[tuple[int, int]]:
    # Appends an optional aligned block of 2**scale on either side of every
    # member.  Scales below 0 have no blocks, so only the empty flank remains.
    if scale < 0:
        return set(members)
    size = 1 << scale
    out: set[tuple[int, int]] = set()
    for a, b in members:
        # a block ends at a-1 iff a-1 is a positive multiple of the block size
        lefts = [a]
        if a - 1 >= size and (a - 1) % size == 0:
            lefts.append(a - size)
        rights = [b]
        if b + size <= n and b % size == 0:
            rights.append(b + size)
        for la in lefts:
            for rb in rights:
                out.add((la, rb))
    return out


def build_dyadic_net(spec: NetSpec) -> ApproximatingNet:
    """Build the recursive dyadic approximating net of depth ``spec.b``.

    For each scale ``j`` the base class holds every union of one or two
    adjacent aligned blocks of size ``2**(j-1)``; ``b`` rounds of optional
    flanks are then appended, at block sizes ``2**(j-1), ..., 2**(j-b+1)``
    with the final round repeating size ``2**(j-b+1)``.  Out-of-range flank
    scales contribute only the empty flank.

    Non-power-of-two ambient sizes are handled by building for the next power
    of two and clipping members to ``[1, n]``, which preserves the containment
    and similarity guarantees for every interval of ``[1, n]``.
    """
    if spec.kind != "dyadic_net":
        raise ParameterError(f"expected kind=dyadic_net, got {spec.kind}")
    n, b = spec.n, spec.b
    n2 = _next_pow2(n)
    q = n2.bit_length() - 1
    members: set[tuple[int, int]] = set()
    for j in range(1, q + 1):
        half = 1 << (j - 1)
        cur: set[tuple[int, int]] = set()
        for a, e in _aligned_blocks(n2, j - 1):
            cur.add((a, e))
            if e + half <= n2:
                cur.add((a, e + half))
        if b >= 1:
            scales = [j - k for k in range(1, b)] + [j - b + 1]
            for s in scales:
                cur = _flank(cur, s, n2)
        members |= cur
    if n2 != n:
        members = {(a, min(e, n)) for a, e in members if a <= n}
    return _finalize(spec, members)


def build_dyadic_lengths(
    n: int, max_log_len: int, min_log_len: int = 0
) -> ApproximatingNet:
    """All intervals ``[a, a + 2**j - 1]`` inside ``[1, n]``, ``min_log_len <= j <= max_log_len``.

    Every interval of ``[1, n]`` contains a member of more than half its
    length, so the class approximates the full interval class with similarity
    at least ``1/sqrt(2)`` when ``max_log_len = floor(log2 n)``.
    """
    if not (0 <= min_log_len <= max_log_len) or (1 << max_log_len) > n:
        raise ParameterError(
            f"need 1 <= 2**min_log_len <= 2**max_log_len <= n, "
            f"got j in [{min_log_len}, {max_log_len}], n={n}"
        )
    spec = NetSpec(n=n, kind="dyadic_lengths", q_l=min_log_len, q_u=max_log_len)
    pairs = {
        (a, a + (1 << j) - 1)
        for j in range(min_log_len, max_log_len + 1)
        for a in range(1, n - (1 << j) + 2)
    }
    return _finalize(spec, pairs)


def build_full(n: int) -> ApproximatingNet:
    """Every interval of ``[1, n]``; quadratic size, intended for small n."""
    if n < 2:
        raise ParameterError(f"ambient size must be >= 2, got {n}")
    spec = NetSpec(n=n, kind="full")
    pairs = {(a, b) for a in range(1, n + 1) for b in range(a, n + 1)}
    return _finalize(spec, pairs)


def build_fixed_length(n: int, k: int) -> ApproximatingNet:
    """The ``n - k + 1`` intervals of length exactly ``k``."""
    if not (1 <= k <= n):
        raise ParameterError(f"need 1 <= k <= n, got k={k}, n={n}")
    spec = NetSpec(n=n, kind="fixed_length")
    return _finalize(spec, {(a, a + k - 1) for a in range(1, n - k + 2)})


def restrict_net(net: ApproximatingNet, q_l: int, q_u: int) -> ApproximatingNet:
    """Keep members that approximate some interval with length in ``[2**q_l, 2**q_u]``.

    A member ``S*`` is retained iff some interval ``S`` of the bounded class
    satisfies ``similarity(S, S*) >= (1 + 2**(-b+2)) ** -0.5``.  Sliding a
    length-``L`` window to maximal overlap with ``S*`` always achieves
    ``min(L, |S*|)`` common points, so the best candidate length is ``|S*|``
    clamped to the window, and the predicate is evaluated exactly without
    enumerating positions.  Every retained member then has
    ``|S*| >= 2**q_l / (1 + 2**(-b+2))``.
    """
    if net.spec.kind != "dyadic_net":
        raise ParameterError("restrict_net applies to dyadic_net nets")
    n = net.spec.n
    max_q = _next_pow2(n).bit_length() - 1
    if not (0 <= q_l <= q_u <= max_q) or (1 << q_u) > _next_pow2(n):
        raise ParameterError(f"invalid bounds ql={q_l} qu={q_u} for n={n}")
    thr = (1.0 + 2.0 ** (-net.spec.b + 2)) ** -0.5
    lens = net.lengths.astype(np.float64)
    best_len = np.clip(lens, float(1 << q_l), float(min(1 << q_u, n)))
    rho = np.minimum(best_len, lens) / np.sqrt(best_len * lens)
    keep = rho >= thr
    spec = NetSpec(n=n, kind="dyadic_net", b=net.spec.b, q_l=q_l, q_u=q_u)
    return ApproximatingNet(spec=spec, starts=net.starts[keep], ends=net.ends[keep])


def default_depth(n: int) -> int:
    """Default net depth, growing like log log n."""
    if n < 2:
        raise ParameterError(f"ambient size must be >= 2, got {n}")
    return max(0, int(math.floor(math.log2(max(2.0, math.log2(n))))))


def default_length_bounds(n: int) -> tuple[int, int]:
    """Default restriction window (q_l, q_u) for a depth-restricted scan.

    Mirrors, at finite n, a window whose lower exponent outgrows
    ``3 log2 log2 n`` and whose upper exponent stays below ``log2 n``.  The
    window is only nonempty for n >= 2**16; smaller sizes must override.
    """
    q_l = math.ceil(3 * math.log2(max(2.0, math.log2(n)))) + 1
    q_u = math.ceil(math.log2(n)) - 2
    if q_l > q_u:
        raise ParameterError(
            f"default length window is empty at n={n} (ql={q_l} > qu={q_u}); "
            "pass explicit bounds"
        )
    return q_l, q_u
