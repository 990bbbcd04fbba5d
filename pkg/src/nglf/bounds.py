"""Information-theoretic sample-complexity lower bound for NGLF recovery.

For the equal-groups ensemble (m factors, p/m children each) the number of
samples any method needs to recover the structure with error probability
err satisfies

    n >= n_min = 2 * ((1 - err) * log M - 1) / F,

where M = p! / ((p/m)!)^m / m! counts the structures and

    F = (p-1) * log(1 + s*(1 - 1/m)/(1 - 1/p)) - (m-1) * log(1 + s*p/m).

All logs are in nats. log M is evaluated through lgamma, which also gives
a continuous extension in p; the bound itself uses that extension so the
real-valued crossing n_min(p) = n is well defined even where m does not
divide p (the two agree exactly at multiples of m). The exact
combinatorial count `log_num_structures` keeps the m | p precondition.

As p -> infinity at fixed (m, s, err) the bound decreases to the asymptote
2 * (1 - err) * log(m) / log(1 + s*(1 - 1/m)): more variables make
recovery easier, never harder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "BoundParams",
    "RecoveryThreshold",
    "BoundInapplicableError",
    "UnreachableBudgetError",
    "log_num_structures",
    "sample_complexity_lower_bound",
    "asymptotic_bound",
    "min_recoverable_p",
]


class BoundInapplicableError(ValueError):
    """The bound's denominator F is <= 0; no nontrivial statement is made."""


class UnreachableBudgetError(ValueError):
    """The sample budget is at or below the large-p asymptote: no finite p suffices."""


@dataclass(frozen=True)
class BoundParams:
    """Arguments of the lower bound.

    p: variable count; m: factor count; snr: s (dimensionless);
    err: target error probability in [0, 1).
    """

    p: int
    m: int
    snr: float
    err: float = 0.0

    def __post_init__(self):
        if not (self.p >= self.m >= 1):
            raise ValueError(f"need p >= m >= 1, got p={self.p}, m={self.m}")
        if not self.snr > 0:
            raise ValueError(f"need snr > 0, got {self.snr}")
        if not (0.0 <= self.err < 1.0):
            raise ValueError(f"need err in [0, 1), got {self.err}")


def log_num_structures(p: int, m: int) -> float:
    """log M = log[ p! / ((p/m)!)^m / m! ] for the equal-groups ensemble, in nats.

    Computed via lgamma; never via raw factorials. Requires m | p.
    """
    if p % m != 0:
        raise ValueError(f"m={m} must divide p={p} for the equal-groups count")
    return _log_num_structures_real(float(p), m)


def _log_num_structures_real(p: float, m: int) -> float:
    # lgamma continuation of the multinomial count; equals the exact value
    # at integer p with m | p.
    return math.lgamma(p + 1.0) - m * math.lgamma(p / m + 1.0) - math.lgamma(m + 1.0)


def _f_denominator(p: float, m: int, s: float) -> float:
    return (p - 1.0) * math.log1p(s * (1.0 - 1.0 / m) / (1.0 - 1.0 / p)) - (
        m - 1.0
    ) * math.log1p(s * p / m)


def _n_min_real(p: float, m: int, s: float, err: float) -> float:
    if m == 1:
        # One structure, nothing to distinguish: the bound is vacuous.
        return -math.inf
    f = _f_denominator(p, m, s)
    if f <= 0.0:
        raise BoundInapplicableError(
            f"denominator F = {f:.6g} <= 0 at p={p}, m={m}, s={s}; bound inapplicable"
        )
    return 2.0 * ((1.0 - err) * _log_num_structures_real(p, m) - 1.0) / f


def sample_complexity_lower_bound(bp: BoundParams) -> float:
    """n_min = 2*((1-err)*log M - 1)/F. May be <= 0 (vacuous) for tiny ensembles.

    m = 1 has a single structure and returns -inf (vacuous). Raises
    BoundInapplicableError when F <= 0 elsewhere, keeping the inapplicable
    case distinct from a numeric (possibly vacuous) result.
    """
    return _n_min_real(float(bp.p), bp.m, bp.snr, bp.err)


def asymptotic_bound(m: int, snr: float, err: float = 0.0) -> float:
    """Large-p limit of n_min: 2*(1-err)*log(m) / log(1 + s*(1-1/m))."""
    if m < 2:
        raise ValueError(f"need m >= 2 for a nontrivial asymptote, got m={m}")
    if not snr > 0:
        raise ValueError(f"need snr > 0, got {snr}")
    return 2.0 * (1.0 - err) * math.log(m) / math.log1p(snr * (1.0 - 1.0 / m))


@dataclass(frozen=True)
class RecoveryThreshold:
    """Where the bound curve n_min(p) crosses a sample budget n.

    crossing: real-valued solution of n_min(p) = n on the decreasing branch
        (the forbidden region is p < crossing).
    crossing_floor: floor(crossing) — the integer crossing of the
        real-valued bound.
    smallest_recoverable_p: smallest integer p with n_min(p) <= n.
    next_multiple_of_m: smallest multiple of m at or above the crossing.
    forbidden_region: False when the budget exceeds the bound everywhere
        (then the threshold degenerates to p = m).
    """

    crossing: float
    crossing_floor: int
    smallest_recoverable_p: int
    next_multiple_of_m: int
    forbidden_region: bool


def min_recoverable_p(n: float, m: int, snr: float, err: float = 0.0) -> RecoveryThreshold:
    """Find where a sample budget n first permits recovery as p grows.

    n_min(p) rises from vacuous values near p = m to a single peak and then
    decreases to the asymptote; the forbidden region {p : n_min(p) > n} is an
    interval around the peak. This locates its upper edge by geometric
    bracketing plus bisection on the lgamma-continued bound.

    Raises UnreachableBudgetError when n is at or below the asymptote.
    """
    if m == 1:
        # Single structure: the bound is vacuous at every p.
        return RecoveryThreshold(
            crossing=1.0,
            crossing_floor=1,
            smallest_recoverable_p=1,
            next_multiple_of_m=1,
            forbidden_region=False,
        )
    asym = asymptotic_bound(m, snr, err)
    if n <= asym:
        raise UnreachableBudgetError(
            f"budget n={n} is at or below the large-p asymptote {asym:.6g}; "
            "no finite p satisfies the bound"
        )

    def f(p: float) -> float:
        return _n_min_real(p, m, snr, err)

    # n_min is unimodal in p: locate the peak first (ternary search), then
    # bisect for the budget crossing on the decreasing branch.
    a = float(m) + 1.0
    b = float(max(4 * m, 8))
    while f(2.0 * b) > f(b):
        b *= 2.0
        if b > 1e30:  # pragma: no cover - defensive
            raise UnreachableBudgetError("bound peak not found below p = 1e30")
    b *= 2.0
    for _ in range(300):
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        if f(m1) < f(m2):
            a = m1
        else:
            b = m2
        if b - a < 1e-9 * max(1.0, b):
            break
    p_peak = 0.5 * (a + b)
    if f(p_peak) <= n:
        # Budget exceeds the bound everywhere: nothing is forbidden (beyond
        # the trivial vacuous head at p = m).
        return RecoveryThreshold(
            crossing=float(m),
            crossing_floor=m,
            smallest_recoverable_p=m,
            next_multiple_of_m=m,
            forbidden_region=False,
        )

    lo, hi = p_peak, 2.0 * p_peak
    while f(hi) > n:
        hi *= 2.0
        if hi > 1e30:  # pragma: no cover - defensive
            raise UnreachableBudgetError(
                f"could not bracket the crossing for n={n}, m={m}, s={snr}, err={err}"
            )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if f(mid) > n:
            lo = mid
        else:
            hi = mid
    crossing = hi

    q = math.floor(crossing)
    smallest = q if f(float(q)) <= n else q + 1
    next_mult = m * math.ceil(crossing / m)
    if next_mult < smallest:
        next_mult += m
    return RecoveryThreshold(
        crossing=crossing,
        crossing_floor=q,
        smallest_recoverable_p=smallest,
        next_multiple_of_m=next_mult,
        forbidden_region=True,
    )
