"""Monte Carlo core: hit counts, covered fractions, limsup proxies, density.

Ball membership is the strict inequality d(xi_n, y) < r_n.  On the circle
radii are capped at the diameter 1/2; on the other spaces a ball is simply
intersected with the space, which the metric on [0, 1] does automatically.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numba import njit

from . import process as pr
from . import schedule as sc
from . import space as sp

THREADS_ENV = "COVERING_LAB_THREADS"


@dataclass(frozen=True)
class Window:
    """Index range K..N, both ends included."""
    K: int
    N: int

    def __post_init__(self):
        if self.K < 1 or self.N < self.K:
            raise ValueError(f"window needs 1 <= K <= N, got [{self.K}, {self.N}]")


def geometric_ladder(j0: int, j1: int) -> list[Window]:
    """Windows [2^j, 2^(j+1)) for j = j0..j1."""
    return [Window(2**j, 2 ** (j + 1) - 1) for j in range(j0, j1 + 1)]


# --------------------------------------------------------------------------
# parallel trial runner


def parallelism_cap(requested: int | None = None) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def trial_seeds(master_seed: int, trials: int) -> list[int]:
    return [pr.splitmix64(master_seed, i) for i in range(trials)]


def run_trials(task: Callable[[int], object], trials: int, master_seed: int,
               parallelism: int | None = 1) -> list:
    """Run ``task(seed_i)`` for seed_i = splitmix(master_seed, i), in index order.

    Results come back ordered by trial index whatever the scheduling, so any
    aggregate computed from them is independent of the degree of parallelism.
    """
    seeds = trial_seeds(master_seed, trials)
    workers = parallelism_cap(parallelism)
    if workers == 1 or trials == 1:
        return [task(s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(task, seeds))


def mean_stderr(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


# --------------------------------------------------------------------------
# scan kernels


@njit(cache=True, nogil=True)
def _find(nxt, i):
    root = i
    while nxt[root] != root:
        root = nxt[root]
    while nxt[i] != root:
        j = nxt[i]
        nxt[i] = root
        i = j
    return root


@njit(cache=True, nogil=True)
def cover_mask_sorted(p, centers, radii, wraps):
    """Which of the sorted probes ``p`` lie in some ball B(centers[j], radii[j]).

    Probes already covered are skipped through a union-find successor array,
    so every probe is marked once.  The candidate range is padded by a small
    slack and each candidate is tested with the exact metric, which makes the
    result identical to the brute-force scan.
    """
    m = p.size
    covered = np.zeros(m, np.bool_)
    nxt = np.arange(m + 1)
    for j in range(centers.size):
        c = centers[j]
        r = radii[j]
        for shift in (-1.0, 0.0, 1.0):
            if shift != 0.0 and not wraps:
                continue
            lo = c + shift - r - 1e-12
            hi = c + shift + r + 1e-12
            if hi < 0.0 or lo >= 1.0:
                continue
            i = _find(nxt, np.searchsorted(p, lo))
            while i < m and p[i] <= hi:
                d = abs(p[i] - c)
                if wraps:
                    d = min(d, 1.0 - d)
                if d < r:
                    covered[i] = True
                    nxt[i] = i + 1
                i = _find(nxt, i + 1)
    return covered


def cover_mask_naive(p, centers, radii, wraps: bool) -> np.ndarray:
    d = sp.pairwise_distance(np.asarray(p)[:, None], np.asarray(centers)[None, :], wraps)
    return np.any(d < np.asarray(radii)[None, :], axis=1)


@njit(cache=True, nogil=True)
def _first_hits(x, radii, offset, mesh_c, mesh_r, wraps, first):
    """Fill first[i] with the first index n (1-based, offset added) hitting mesh ball i."""
    remaining = 0
    for i in range(first.size):
        if first[i] < 0:
            remaining += 1
    for k in range(x.size):
        if remaining == 0:
            break
        for i in range(mesh_c.size):
            if first[i] >= 0:
                continue
            d = abs(x[k] - mesh_c[i])
            if wraps:
                d = min(d, 1.0 - d)
            if d < mesh_r[i] + radii[k]:
                first[i] = offset + k
                remaining -= 1
    return remaining


def clip_radii(space: sp.SpaceSpec, r: np.ndarray) -> np.ndarray:
    if space.wraps:
        return np.minimum(r, space.diameter)
    return r


# --------------------------------------------------------------------------
# hit counting


@dataclass(frozen=True)
class HitStats:
    target: float
    checkpoints: tuple
    counts: tuple
    window_hits: tuple = ()
    windows: tuple = ()

    @property
    def moments(self) -> tuple[float, float]:
        """(S_N, S_N^2) at the last checkpoint; averaged across trials by the caller."""
        s = float(self.counts[-1])
        return s, s * s


def hit_counts(traj: pr.Trajectory, sched: sc.RadiusSchedule, target, checkpoints,
               ladder: Sequence[Window] = ()) -> HitStats:
    """S_N = #{n <= N : d(xi_n, target) < h_n} at every checkpoint N."""
    space = traj.space
    y = sp.coordinate(space, target)
    cps = sorted(int(c) for c in checkpoints)
    top = max([cps[-1]] + [w.N for w in ladder])
    if top > len(traj):
        raise ValueError(f"checkpoint {top} exceeds trajectory length {len(traj)}")
    x = traj.coords[:top]
    h = clip_radii(space, sc.radii(sched, top))
    hits = sp.pairwise_distance(x, y, space.wraps) < h
    S = np.cumsum(hits)
    whits = tuple(bool(hits[w.K - 1:w.N].any()) for w in ladder)
    return HitStats(y, tuple(cps), tuple(int(S[c - 1]) for c in cps), whits, tuple(ladder))


@dataclass(frozen=True)
class PZReport:
    empirical_prob: float
    pz_bound: float
    second_moment_slack: float
    stderr: float
    c_prime: float
    mean_S: float
    mean_S2: float
    trials: int
    lam: float

    @property
    def holds(self) -> bool:
        return self.empirical_prob >= self.pz_bound - 3.0 * self.stderr


def paley_zygmund_report(stats: Sequence[HitStats], lam: float, checkpoint: int | None = None,
                         min_trials: int = 100) -> PZReport:
    """Empirical side of P(S >= lam E S) >= (1 - lam)^2 (E S)^2 / E S^2.

    ``second_moment_slack`` is mean(S^2) - mean(S) - mean(S)^2, the excess of
    the second moment over the uncorrelated expansion; ``c_prime`` is the
    smallest c' with mean(S^2) <= c' mean(S) + mean(S)^2.
    """
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    if len(stats) < min_trials:
        raise ValueError(f"need at least {min_trials} trials, got {len(stats)}")
    idx = -1 if checkpoint is None else stats[0].checkpoints.index(checkpoint)
    S = np.array([st.counts[idx] for st in stats], dtype=float)
    m1 = float(S.mean())
    m2 = float(np.mean(S * S))
    if m2 == 0:
        raise ValueError("no hits in any trial; the Paley-Zygmund bound is degenerate")
    p = float(np.mean(S >= lam * m1))
    se = math.sqrt(p * (1 - p) / S.size)
    bound = (1 - lam) ** 2 * m1 * m1 / m2
    slack = m2 - m1 - m1 * m1
    cprime = (m2 - m1 * m1) / m1 if m1 > 0 else math.inf
    return PZReport(p, bound, slack, se, cprime, m1, m2, int(S.size), float(lam))


def poisson_binomial_moments(p: np.ndarray) -> tuple[float, float, float]:
    """(E S, E S^2, Var S) for a sum of independent Bernoulli(p_n)."""
    p = np.asarray(p, dtype=float)
    m1 = math.fsum(p)
    var = math.fsum(p * (1 - p))
    return m1, var + m1 * m1, var


# --------------------------------------------------------------------------
# coverage


@dataclass(frozen=True)
class CoverReport:
    probes: int
    trials: int
    windows: tuple
    fraction_by_window: tuple
    stderr_by_window: tuple
    limsup_fraction: float
    limsup_stderr: float
    seeds: tuple = field(default=(), repr=False)
    per_trial_limsup: tuple = field(default=(), repr=False)


def _trial_cover(proc, sched, windows, probes, seed, keep_probes=False):
    space = proc.space
    top = max(w.N for w in windows)
    traj = pr.generate(proc, top, pr.splitmix64(seed, 0))
    rng = np.random.default_rng(pr.splitmix64(seed, 1))
    p = np.sort(sp.sample_coords(space, rng, probes))
    x = traj.coords
    all_r = clip_radii(space, sc.radii(sched, top))
    masks = []
    for w in windows:
        masks.append(cover_mask_sorted(p, x[w.K - 1:w.N], all_r[w.K - 1:w.N], space.wraps))
    inter = np.logical_and.reduce(masks)
    out = {
        "fractions": np.array([m.mean() for m in masks]),
        "limsup": float(inter.mean()),
    }
    if keep_probes:
        out["probes"] = p
        out["masks"] = masks
    return out


def _cover_report(results, windows, probes, seeds) -> CoverReport:
    F = np.array([r["fractions"] for r in results])
    L = np.array([r["limsup"] for r in results])
    T = len(results)
    se = F.std(axis=0, ddof=1) / math.sqrt(T) if T > 1 else np.zeros(F.shape[1])
    lm, lse = mean_stderr(L)
    return CoverReport(probes, T, tuple(windows), tuple(F.mean(axis=0).tolist()),
                       tuple(se.tolist()), lm, lse, tuple(seeds), tuple(L.tolist()))


def limsup_proxy(proc: pr.ProcessSpec, sched: sc.RadiusSchedule, ladder: Sequence[Window],
                 probes: int, trials: int, seed: int, parallelism: int | None = 1) -> CoverReport:
    """Fraction of mu-probes covered in every window of the ladder.

    Each trial draws one trajectory and one probe set, shared by all windows,
    so adding a window can only shrink the limsup fraction.
    """
    ladder = list(ladder)
    if not ladder:
        raise ValueError("ladder must contain at least one window")
    for a, b in zip(ladder, ladder[1:]):
        if b.K <= a.N:
            raise ValueError("ladder windows must be disjoint and increasing")
    if probes < 1 or trials < 1:
        raise ValueError("probes and trials must be positive")
    res = run_trials(lambda s: _trial_cover(proc, sched, ladder, probes, s),
                     trials, seed, parallelism)
    return _cover_report(res, ladder, probes, trial_seeds(seed, trials))


def covered_fraction(proc: pr.ProcessSpec, sched: sc.RadiusSchedule, window: Window,
                     probes: int, trials: int, seed: int,
                     parallelism: int | None = 1) -> CoverReport:
    """Fraction of mu-probes lying in some ball B(xi_n, r_n) with K <= n <= N."""
    return limsup_proxy(proc, sched, [window], probes, trials, seed, parallelism)


def covered_probes(proc: pr.ProcessSpec, sched: sc.RadiusSchedule, window: Window,
                   probes: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Sorted probe coordinates of one trial and their coverage mask."""
    out = _trial_cover(proc, sched, [window], probes, pr.splitmix64(seed, 0), keep_probes=True)
    return out["probes"], out["masks"][0]


def product_prediction(space: sp.SpaceSpec, sched: sc.RadiusSchedule,
                       ladder: Sequence[Window]) -> tuple[np.ndarray, float]:
    """Per-window coverage and limsup fraction for iid Lebesgue centres on the circle.

    A fixed probe misses the window iff every ball misses it, independently,
    so P(covered) = 1 - prod(1 - 2 r_n); windows are independent as well.
    """
    if space.kind != sp.CIRCLE:
        raise ValueError("closed-form coverage needs the circle")
    per = []
    for w in ladder:
        m = np.minimum(2.0 * sc.radii(sched, w.N, start=w.K), 1.0)
        per.append(-math.expm1(np.sum(np.log1p(-np.minimum(m, 1 - 1e-300)))))
    per = np.array(per)
    return per, float(np.prod(per))


# --------------------------------------------------------------------------
# density


@dataclass(frozen=True)
class DensityReport:
    K: int
    budget: int
    trials: int
    hit_prob: tuple
    all_hit_prob: float
    all_hit_stderr: float
    first_hits: tuple = field(repr=False, default=())

    @property
    def first_hit_quantiles(self) -> dict:
        F = np.array(self.first_hits, dtype=float)
        F = F[F >= 0]
        if F.size == 0:
            return {}
        q = np.quantile(F, [0.0, 0.5, 0.9, 1.0])
        return {"min": q[0], "median": q[1], "q90": q[2], "max": q[3]}


def uniform_mesh(count: int, rho: float) -> list[tuple[float, float]]:
    return [((i + 0.5) / count, rho) for i in range(count)]


def _trial_density(proc, sched, K, budget, mesh_c, mesh_r, seed, chunk=4096):
    space = proc.space
    first = np.full(mesh_c.size, -1, dtype=np.int64)
    lo = K
    length = min(budget, K + chunk)
    tseed = pr.splitmix64(seed, 0)
    while True:
        x = pr.generate(proc, length, tseed).coords
        r = sc.radii(sched, length, start=lo)
        left = _first_hits(x[lo - 1:length], r, lo, mesh_c, mesh_r, space.wraps, first)
        if left == 0 or length >= budget:
            return first
        lo = length + 1
        length = min(budget, 2 * length)


def density_check(proc: pr.ProcessSpec, sched: sc.RadiusSchedule, K: int, mesh,
                  trials: int, seed: int, budget: int = 10**6,
                  parallelism: int | None = 1) -> DensityReport:
    """Per mesh ball B(a, rho), how often some K <= n <= budget has d(xi_n, a) < rho + r_n.

    That is the event that B(xi_n, r_n) meets the mesh ball.  All mesh balls
    hit is the finite surrogate for the tail union being dense.  Trajectories
    are extended in doubling chunks until every ball is hit; by prefix
    consistency this equals scanning the full budget.
    """
    if K < 1 or budget < K:
        raise ValueError("need 1 <= K <= budget")
    mesh_c = np.array([c for c, _ in mesh], dtype=float)
    mesh_r = np.array([r for _, r in mesh], dtype=float)
    if np.any(mesh_r <= 0):
        raise ValueError("mesh radii must be positive")
    res = run_trials(lambda s: _trial_density(proc, sched, K, budget, mesh_c, mesh_r, s),
                     trials, seed, parallelism)
    F = np.array(res)
    hit = F >= 0
    allh = hit.all(axis=1).astype(float)
    m, se = mean_stderr(allh)
    return DensityReport(K, budget, trials, tuple(hit.mean(axis=0).tolist()), m, se,
                         tuple(map(tuple, F.tolist())))
