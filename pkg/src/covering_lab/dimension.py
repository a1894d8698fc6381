"""Box counting, natural-cover Hausdorff sums and the dimension dichotomy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import engine as en
from . import process as pr
from . import schedule as sc
from . import space as sp


def box_count(points, epsilon: float, extent: float = 1.0) -> int:
    """Occupied cells of the uniform epsilon-grid on [0, extent)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = np.asarray(points, dtype=float)
    if x.size == 0:
        return 0
    if epsilon >= extent:
        return 1
    # points on a grid line (Cantor cylinder endpoints) must not fall one cell low
    q = x / epsilon
    near = np.rint(q)
    q = np.where(np.abs(q - near) <= 4 * np.finfo(float).eps * np.maximum(near, 1.0), near, q)
    cells = np.floor(q).astype(np.int64)
    return int(np.unique(np.minimum(cells, int(math.ceil(extent / epsilon)) - 1)).size)


def default_scales(space: sp.SpaceSpec) -> list[float]:
    if space.kind == sp.CANTOR:
        return [3.0**-k for k in range(2, 10)]
    return [2.0**-k for k in range(4, 15)]


@dataclass(frozen=True)
class BoxFit:
    slope: float
    intercept: float
    r2: float
    saturated: bool = False

    def __float__(self):
        return self.slope


@dataclass(frozen=True)
class BoxCountCurve:
    scales: tuple
    counts: tuple
    fit: BoxFit | None = None


def box_count_curve(points, scales) -> BoxCountCurve:
    scales = sorted((float(e) for e in scales), reverse=True)
    counts = tuple(box_count(points, e) for e in scales)
    curve = BoxCountCurve(tuple(scales), counts)
    if len(scales) >= 4 and scales[0] / scales[-1] >= 4:
        curve = BoxCountCurve(curve.scales, counts, box_dimension_fit(curve))
    return curve


def box_dimension_fit(curve: BoxCountCurve) -> BoxFit:
    """Slope of log N(eps) against log(1/eps).

    Returns a fit flagged ``saturated`` when all counts coincide, since such a
    curve carries no scaling information.
    """
    eps = np.asarray(curve.scales, dtype=float)
    N = np.asarray(curve.counts, dtype=float)
    if eps.size < 4 or eps.max() / eps.min() < 4:
        raise ValueError("need at least 4 scales spanning 2 octaves")
    if np.all(N == N[0]):
        return BoxFit(math.nan, math.nan, math.nan, saturated=True)
    x = np.log(1.0 / eps)
    y = np.log(N)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - float(np.sum(resid**2) / tot) if tot > 0 else 1.0
    return BoxFit(float(slope), float(icpt), r2)


def natural_cover_sum(sched: sc.RadiusSchedule, f: sc.DimensionFunction, n0: int,
                      N: int, s: float = 1.0) -> tuple[float, float]:
    """(sum_{n=n0}^N f(2 r_n), 2^s sum_{n=n0}^N f(r_n)).

    The first value bounds the delta-Hausdorff f-content of the limsup set
    through its natural cover by the balls with index >= n0; the second is the
    doubling envelope, which dominates it whenever f(r)/r^s is nondecreasing
    as r -> 0.
    """
    if not 1 <= n0 <= N:
        raise ValueError("need 1 <= n0 <= N")
    r = sc.radii(sched, N, start=n0)
    return math.fsum(f(2.0 * r)), 2.0**s * math.fsum(f(r))


def tail_converges(sched: sc.RadiusSchedule, f: sc.DimensionFunction,
                   N: int = sc.NUMERIC_TERMS) -> bool:
    """Does sum f(r_n) converge, so that the natural-cover tails go to 0?"""
    if f.kind == sc.POWER and sched.analytic:
        return not sc.series_diverges(sched, f.t)
    n = N if sched.analytic else len(sched.values)
    return not sc.numeric_diverges(f(sc.radii(sched, n)))


@dataclass(frozen=True)
class DichotomyRow:
    t: float
    tail_sums: tuple
    converges: bool
    coverage: float
    coverage_stderr: float
    full_coverage: bool


@dataclass(frozen=True)
class DimensionDichotomy:
    s: float
    alpha_closed_form: float | None
    alpha_numeric: float
    alpha_numeric_width: float
    bracket: tuple
    consistent: bool
    contains_alpha: bool
    rows: tuple = field(default=(), repr=False)


def dimension_dichotomy_report(sched: sc.RadiusSchedule, space: sp.SpaceSpec,
                               t_grid: Sequence[float], coverage: Mapping[float, tuple],
                               full_threshold: float = 0.95,
                               n0_list: Sequence[int] = (10**3, 10**4, 10**5),
                               N: int = 10**6, tol: float = 1e-9) -> DimensionDichotomy:
    """Bracket the Hausdorff exponent from both halves of the dichotomy.

    ``coverage[t]`` is (fraction, stderr) of the covered fraction for the
    schedule inflated by f = r^t.  A t counts as divergent when that coverage
    reaches ``full_threshold``, and as convergent when sum f(r_n) converges.
    The bracket runs from the largest divergent t to the smallest convergent
    t, capped at s.
    """
    s = space.s
    ts = sorted(float(t) for t in t_grid)
    rows = []
    for t in ts:
        f = sc.dimfn_power(t)
        tails = tuple(natural_cover_sum(sched, f, n0, N, s)[0] for n0 in n0_list
                      if n0 <= N)
        cov, cse = coverage[t]
        rows.append(DichotomyRow(t, tails, tail_converges(sched, f, N), float(cov), float(cse),
                                 bool(cov >= full_threshold)))
    div = [r.t for r in rows if r.full_coverage]
    conv = [r.t for r in rows if r.converges]
    lo = max(div) if div else 0.0
    hi = min(min(conv), s) if conv else s
    consistent = lo <= hi + tol and not set(div) & set(conv)
    closed = None
    if sched.analytic:
        closed = sc.convergence_exponent(sched, s).value
    num = sc.convergence_exponent(sched, s, numeric=True, N=N)
    target = closed if closed is not None else num.value
    contains = consistent and lo - tol <= target <= hi + tol
    return DimensionDichotomy(s, closed, num.value, num.half_width, (lo, hi), consistent,
                              contains, tuple(rows))


def run_dimension_dichotomy(proc: pr.ProcessSpec, sched: sc.RadiusSchedule,
                            t_grid: Sequence[float], window: en.Window, probes: int,
                            trials: int, seed: int, full_threshold: float = 0.95,
                            parallelism: int | None = 1) -> DimensionDichotomy:
    """Run the divergence-side coverage experiments, then build the report."""
    s = proc.space.s
    coverage = {}
    for i, t in enumerate(sorted(float(t) for t in t_grid)):
        infl = sc.inflate(sched, sc.dimfn_power(t), s)
        rep = en.covered_fraction(proc, infl, window, probes, trials,
                                  pr.splitmix64(seed, i), parallelism)
        coverage[t] = (rep.fraction_by_window[0], rep.stderr_by_window[0])
    return dimension_dichotomy_report(sched, proc.space, t_grid, coverage, full_threshold)
