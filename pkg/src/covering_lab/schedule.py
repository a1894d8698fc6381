"""Radius sequences, dimension functions and series tests.

A radius schedule is a nonincreasing positive sequence r_n -> 0.  The
parametric kinds know their convergence behaviour in closed form; explicit
lists fall back to a numeric test based on dyadic block sums (Cauchy
condensation).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

POWER = "power"
POWER_LOG = "power-log"
EXPLICIT = "explicit"

NUMERIC_TERMS = 10**6
BISECTION_WIDTH = 0.01
_SLOPE_TOL = 1e-3  # slope of n^-p block sums is 1 - p; p within 1e-3 of 1 reads as divergent
_CONDENSATION_BLOCKS = 6


@dataclass(frozen=True)
class RadiusSchedule:
    kind: str
    a: float = 1.0
    alpha: float = 1.0
    b: float = 0.0
    values: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind in (POWER, POWER_LOG):
            if not self.a > 0:
                raise ValueError(f"radii.a must be positive, got {self.a}")
            if not self.alpha > 0:
                raise ValueError(f"radii.alpha must be positive, got {self.alpha}")
            if self.kind == POWER_LOG and self.b < 0:
                raise ValueError(f"radii.b must be nonnegative, got {self.b}")
        elif self.kind == EXPLICIT:
            v = np.asarray(self.values, dtype=float)
            if v.size == 0:
                raise ValueError("explicit schedule is empty")
            if np.any(v <= 0):
                raise ValueError("radii must be positive")
            if np.any(np.diff(v) > 0):
                raise ValueError("radii must be nonincreasing")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @property
    def analytic(self) -> bool:
        return self.kind != EXPLICIT

    @property
    def length(self) -> float:
        return len(self.values) if self.kind == EXPLICIT else math.inf


def power(a: float, alpha: float) -> RadiusSchedule:
    return RadiusSchedule(POWER, a=float(a), alpha=float(alpha))


def power_log(a: float, alpha: float, b: float) -> RadiusSchedule:
    return RadiusSchedule(POWER_LOG, a=float(a), alpha=float(alpha), b=float(b))


def explicit(values) -> RadiusSchedule:
    return RadiusSchedule(EXPLICIT, values=tuple(float(v) for v in values))


def read_radii_file(path) -> RadiusSchedule:
    """One radius per line as decimal text; blank lines and ``#`` comments ignored."""
    vals = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            vals.append(float(line))
    return explicit(vals)


def radii(sched: RadiusSchedule, N: int, start: int = 1) -> np.ndarray:
    """Array r_start, ..., r_N."""
    if start < 1:
        raise ValueError("indices start at 1")
    if N > sched.length:
        raise IndexError(f"schedule has {sched.length} radii, requested up to n = {N}")
    if N < start:
        return np.empty(0)
    if sched.kind == EXPLICIT:
        return np.asarray(sched.values[start - 1:N], dtype=float)
    n = np.arange(start, N + 1, dtype=float)
    r = sched.a * n ** -sched.alpha
    if sched.kind == POWER_LOG:
        r = r * np.log(n + 1.0) ** -sched.b
    return r


def radius(sched: RadiusSchedule, n: int) -> float:
    if n < 1:
        raise ValueError("indices start at 1")
    return float(radii(sched, n, start=n)[0])


def partial_power_sum(sched: RadiusSchedule, t: float, N: int) -> float:
    if t <= 0:
        raise ValueError("exponent t must be positive")
    if N < 1:
        raise ValueError("N must be at least 1")
    return math.fsum(radii(sched, N) ** t)


# --------------------------------------------------------------------------
# convergence tests


def condensation_slope(terms: np.ndarray) -> float:
    """Growth rate (log2 per block) of dyadic block sums over the last blocks.

    Block k sums terms with index in [2^k, 2^(k+1)).  A positive series of
    eventually monotone terms converges iff these sums decay geometrically;
    for terms ~ n^-p the slope is 1 - p.
    """
    K = int(math.floor(math.log2(terms.size + 1))) - 1
    if K < _CONDENSATION_BLOCKS:
        raise ValueError("series too short to resolve (need at least 2^7 terms)")
    ks = np.arange(K - _CONDENSATION_BLOCKS + 1, K + 1)
    sums = np.array([math.fsum(terms[2**k - 1:2 ** (k + 1) - 1]) for k in ks])
    if np.any(sums <= 0):
        return -math.inf
    return float(np.polyfit(ks, np.log2(sums), 1)[0])


def numeric_diverges(terms: np.ndarray) -> bool:
    return condensation_slope(np.asarray(terms, dtype=float)) > -_SLOPE_TOL


def series_diverges(sched: RadiusSchedule, t: float, N: int = NUMERIC_TERMS) -> bool:
    """Does sum r_n^t diverge?  Closed form for parametric kinds."""
    if sched.kind == POWER:
        return sched.alpha * t <= 1
    if sched.kind == POWER_LOG:
        p = sched.alpha * t
        return p < 1 or (p == 1 and sched.b * t <= 1)
    n = min(N, len(sched.values))
    return numeric_diverges(radii(sched, n) ** t)


@dataclass(frozen=True)
class Exponent:
    """A convergence exponent, exact or bracketed by bisection."""
    value: float
    half_width: float
    method: str
    uncapped: float | None = None
    interval: tuple = ()
    boundary_converges: bool | None = None

    @property
    def resolved(self) -> bool:
        return self.method != "unresolved"


def convergence_exponent(sched: RadiusSchedule, s: float, numeric: bool = False,
                         N: int = NUMERIC_TERMS) -> Exponent:
    """alpha = inf{t <= s : sum r_n^t < inf}.

    With ``numeric=True`` a parametric schedule is treated as its explicit
    prefix of N terms, which exercises the bisection path.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    if sched.analytic and not numeric:
        raw = 1.0 / sched.alpha
        boundary = None
        if sched.kind == POWER_LOG:
            boundary = sched.b / sched.alpha > 1
        return Exponent(min(raw, s), 0.0, "closed-form", uncapped=raw,
                        interval=(min(raw, s), min(raw, s)), boundary_converges=boundary)
    n = N if sched.analytic else min(N, len(sched.values))
    r = radii(sched, n)
    try:
        if numeric_diverges(r ** s):
            return Exponent(s, 0.0, "numeric", interval=(s, s))
    except ValueError:
        return Exponent(math.nan, math.nan, "unresolved", interval=(0.0, s))
    lo, hi = 0.0, s
    while hi - lo > BISECTION_WIDTH:
        mid = 0.5 * (lo + hi)
        if numeric_diverges(r ** mid):
            lo = mid
        else:
            hi = mid
    return Exponent(0.5 * (lo + hi), 0.5 * (hi - lo), "numeric", interval=(lo, hi))


def shepp_series(sched: RadiusSchedule, N: int) -> np.ndarray:
    """Partial sums of (1/n^2) exp(r_1 + ... + r_n), n = 1..N.

    Once the inner sum passes 500 the accumulation runs in log space; partial
    sums beyond the float range come back as inf.
    """
    r = radii(sched, N)
    inner = np.cumsum(r)
    n = np.arange(1, N + 1, dtype=float)
    if inner[-1] <= 500:
        return np.cumsum(np.exp(inner) / n**2)
    log_terms = inner - 2.0 * np.log(n)
    with np.errstate(over="ignore"):
        return np.exp(np.logaddexp.accumulate(log_terms))


# --------------------------------------------------------------------------
# dimension functions


@dataclass(frozen=True)
class DimensionFunction:
    """f(r) = r^t, or r^t (log 1/r)^b for the power-log kind."""
    kind: str
    t: float
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in (POWER, POWER_LOG):
            raise ValueError(f"unknown dimension function kind {self.kind!r}")
        if not self.t > 0:
            raise ValueError(f"dimfn.t must be positive, got {self.t}")
        if self.b < 0:
            raise ValueError(f"dimfn.b must be nonnegative, got {self.b}")

    @property
    def eta(self) -> float:
        return 2.0**self.t

    @property
    def r_max(self) -> float:
        """Upper end of the range where f is nondecreasing."""
        if self.kind == POWER or self.b == 0:
            return math.inf
        return math.exp(-self.b / self.t)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = r**self.t
        if self.kind == POWER_LOG and self.b:
            out = out * np.log(1.0 / r) ** self.b
        return out


def dimfn_power(t: float) -> DimensionFunction:
    return DimensionFunction(POWER, float(t))


def dimfn_power_log(t: float, b: float) -> DimensionFunction:
    return DimensionFunction(POWER_LOG, float(t), float(b))


def check_doubling(f: DimensionFunction, grid) -> bool:
    g = np.asarray(grid, dtype=float)
    return bool(np.all(f(2 * g) <= f.eta * f(g) * (1 + 1e-12)))


def check_ratio_monotone(f: DimensionFunction, s: float, grid) -> bool:
    """True iff f(r)/r^s is nondecreasing as r decreases through ``grid``."""
    g = np.asarray(grid, dtype=float)
    order = np.argsort(-g)
    ratio = f(g[order]) / g[order] ** s
    return bool(np.all(np.diff(ratio) >= -1e-12 * np.abs(ratio[:-1])))


def _default_grid(f: DimensionFunction) -> np.ndarray:
    top = min(0.5, f.r_max)
    return top * np.logspace(0, -12, 200)


def inflate(sched: RadiusSchedule, f: DimensionFunction, s: float,
            N: int = NUMERIC_TERMS) -> RadiusSchedule:
    """Schedule of inflated radii r'_n = f(r_n)^(1/s).

    Power dimension functions compose symbolically with parametric
    schedules; anything else is materialised as an explicit prefix of N terms.
    """
    if not check_ratio_monotone(f, s, _default_grid(f)):
        raise ValueError("f(r)/r^s must be nondecreasing as r -> 0")
    if f.kind == POWER and f.t == s:
        return sched
    if f.kind == POWER and sched.kind in (POWER, POWER_LOG):
        q = f.t / s
        out = RadiusSchedule(sched.kind, a=sched.a**q, alpha=sched.alpha * q, b=sched.b * q)
    else:
        n = N if sched.analytic else len(sched.values)
        out = explicit(f(radii(sched, n)) ** (1.0 / s))
    r1 = radius(out, 1)
    if r1 > 1.0:
        warnings.warn(f"inflated first radius {r1:.3g} exceeds the space; balls are clipped",
                      stacklevel=2)
    return out
