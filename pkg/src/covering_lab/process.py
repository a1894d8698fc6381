"""Stationary centre processes and empirical mixing rates.

Generators are pure functions of (process, N, seed).  Random draws are consumed
in an order that makes every trajectory a prefix of any longer trajectory
with the same seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np
from numba import njit

from . import space as sp

IID = "iid"
DOUBLING = "doubling"
BETA = "beta-shift"
GAUSS_MAP = "gauss"
MARKOV = "markov"
KINDS = (IID, DOUBLING, BETA, GAUSS_MAP, MARKOV)

_MASK64 = (1 << 64) - 1


def splitmix64(seed: int, index: int) -> int:
    """Seed for stream ``index`` derived from ``seed`` (SplitMix64 finaliser)."""
    z = (seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class ProcessSpec:
    kind: str
    space: sp.SpaceSpec
    beta: float | None = None
    transition: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        k = self.kind
        if k not in KINDS:
            raise ValueError(f"unknown process kind {k!r}; expected one of {KINDS}")
        skind = self.space.kind
        if k == DOUBLING and skind not in (sp.CIRCLE, sp.INTERVAL):
            raise ValueError("the doubling map needs Lebesgue measure (circle or interval-lebesgue)")
        if k == BETA:
            if self.beta is None or self.beta <= 1:
                raise ValueError("beta-shift needs beta > 1")
            if skind != sp.PARRY or not math.isclose(self.space.beta, self.beta, rel_tol=1e-12):
                raise ValueError("beta-shift needs an interval-parry space with the same beta")
        if k == GAUSS_MAP and skind != sp.GAUSS:
            raise ValueError("the Gauss map needs the interval-gauss space")
        if k == MARKOV:
            if skind not in (sp.CIRCLE, sp.INTERVAL):
                raise ValueError("the Markov mixer emits Lebesgue-distributed points")
            _check_transition(np.asarray(self.transition, dtype=float))

    @property
    def bins(self) -> int:
        return len(self.transition) if self.transition is not None else 0


def _check_transition(P: np.ndarray) -> None:
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
        raise ValueError("transition must be a square matrix")
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
        raise ValueError("transition rows must be probability vectors (sum to 1 within 1e-12)")
    b = P.shape[0]
    # primitive (irreducible and aperiodic) iff P^k > 0 for k = (b-1)^2 + 1 (Wielandt)
    M = (P > 0).astype(float)
    R = np.eye(b)
    for _ in range((b - 1) ** 2 + 1):
        R = np.minimum(R @ M, 1.0)
    if not np.all(R > 0):
        raise ValueError("transition must be irreducible and aperiodic")
    pi = stationary_vector(P)
    if np.max(np.abs(pi - 1.0 / b)) > 1e-9:
        raise ValueError("transition must be doubly stochastic so that the marginal is Lebesgue")


def stationary_vector(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    w, v = np.linalg.eig(P.T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    return pi / pi.sum()


def default_transition(bins: int = 8, eps: float = 0.2) -> np.ndarray:
    """(1 - eps) times the doubling-map cell transition plus eps times uniform."""
    D = np.zeros((bins, bins))
    for i in range(bins):
        D[i, (2 * i) % bins] += 0.5
        D[i, (2 * i + 1) % bins] += 0.5
    return (1.0 - eps) * D + eps / bins


def iid(space: sp.SpaceSpec) -> ProcessSpec:
    return ProcessSpec(IID, space)


def doubling(space: sp.SpaceSpec | None = None) -> ProcessSpec:
    return ProcessSpec(DOUBLING, space or sp.circle())


def beta_shift(beta: float = sp.GOLDEN) -> ProcessSpec:
    return ProcessSpec(BETA, sp.parry(beta), beta=float(beta))


def gauss_map() -> ProcessSpec:
    return ProcessSpec(GAUSS_MAP, sp.gauss())


def markov(space: sp.SpaceSpec | None = None, transition=None, bins: int = 8,
           eps: float = 0.2) -> ProcessSpec:
    P = default_transition(bins, eps) if transition is None else np.asarray(transition, float)
    return ProcessSpec(MARKOV, space or sp.circle(), transition=tuple(map(tuple, P.tolist())))


@dataclass(frozen=True)
class Trajectory:
    """Centres xi_1..xi_N.  ``points`` holds digit words for Cantor spaces."""
    seed: int
    points: np.ndarray = field(repr=False)
    space: sp.SpaceSpec = field(repr=False)

    def __len__(self):
        return len(self.points)

    @property
    def coords(self) -> np.ndarray:
        if self.space.kind == sp.CANTOR:
            return sp.cantor_embed(self.points)
        return self.points

    def to_csv(self, path) -> None:
        x = self.coords
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("n,x\n")
            for n, v in enumerate(x, start=1):
                fh.write(f"{n},{float(v)!r}\n")


# --------------------------------------------------------------------------
# orbit kernels


@njit(cache=True, nogil=True)
def _beta_orbit(x0, beta, N):
    out = np.empty(N)
    x = x0
    top = np.nextafter(1.0, 0.0)
    for n in range(N):
        out[n] = x
        y = beta * x
        x = y - np.floor(y)
        if x > top:
            x = top
        elif x < 0.0:
            x = 0.0
    return out


@njit(cache=True, nogil=True)
def _gauss_orbit(x0, N):
    out = np.empty(N)
    x = x0
    for n in range(N):
        out[n] = x
        if x == 0.0:
            continue
        y = 1.0 / x
        x = y - np.floor(y)
    return out


@njit(cache=True, nogil=True)
def _markov_chain(cum, u, w, state0):
    N = u.size
    b = cum.shape[0]
    out = np.empty(N)
    s = state0
    for n in range(N):
        if n > 0:
            row = cum[s]
            s = 0
            while s < b - 1 and u[n] >= row[s]:
                s += 1
        out[n] = (s + w[n]) / b
    return out


def _doubling_bits(rng: np.random.Generator, N: int) -> np.ndarray:
    """Exact doubling-map process from fair bits.

    x_n = sum_{k=1}^{53} b_{n+k-1} 2^-k, so x_{n+1} = 2 x_n mod 1 with one fresh
    bit appended: the orbit of a uniform point, read at float resolution.
    """
    words = rng.bit_generator.random_raw(N // 64 + 2)
    w = words[:-1]
    nxt = words[1:]
    cols = []
    for m in range(64):
        if m == 0:
            v = w
        else:
            v = (w << np.uint64(m)) | (nxt >> np.uint64(64 - m))
        cols.append(v >> np.uint64(11))
    ints = np.stack(cols, axis=1).reshape(-1)[:N]
    return ints.astype(np.float64) * 2.0**-53


def _orbit_precision_bits(kind: str, beta: float | None, N: int) -> int:
    if kind == DOUBLING:
        growth = 1.0
    elif kind == BETA:
        growth = math.log2(beta)
    else:
        growth = 4.0  # Gauss map: Lyapunov exponent pi^2/(6 ln 2) nats ~ 3.4 bits/step
    return 80 + int(math.ceil(growth * N))


def _to_mpf(x):
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    if isinstance(x, str):
        fr = Fraction(x)
        return mpmath.mpf(fr.numerator) / fr.denominator
    return mpmath.mpf(x)


def _rational_orbit(kind: str, x: Fraction, N: int) -> np.ndarray:
    # denominators never grow under either map, so exact arithmetic is cheap
    if not 0 <= x < 1:
        raise ValueError("start must lie in [0, 1)")
    out = np.empty(N)
    for n in range(N):
        out[n] = float(x)
        if kind == DOUBLING:
            x = 2 * x
        elif x != 0:
            x = 1 / x
        x -= math.floor(x)
    return out


def forced_orbit(proc: ProcessSpec, start, N: int) -> np.ndarray:
    """Orbit xi_1 = start, xi_{n+1} = T(xi_n) computed in extended precision.

    ``start`` may be a float, a Fraction, a rational string such as "1/3",
    or an mpmath number.  Rational starts of the doubling and Gauss maps are
    iterated exactly; otherwise working precision grows with N so each float
    output is the correctly rounded orbit point.
    """
    if proc.kind in (IID, MARKOV):
        raise ValueError(f"{proc.kind} processes have no deterministic orbit")
    if isinstance(start, (Fraction, str)) and proc.kind in (DOUBLING, GAUSS_MAP):
        return _rational_orbit(proc.kind, Fraction(start), N)
    with mpmath.workprec(_orbit_precision_bits(proc.kind, proc.beta, N)):
        x = _to_mpf(start)
        if not 0 <= x < 1:
            raise ValueError("start must lie in [0, 1)")
        beta = mpmath.mpf(proc.beta) if proc.kind == BETA else None
        out = np.empty(N)
        for n in range(N):
            out[n] = float(x)
            if proc.kind == DOUBLING:
                y = 2 * x
            elif proc.kind == BETA:
                y = beta * x
            else:
                if x == 0:
                    continue
                y = 1 / x
            x = y - mpmath.floor(y)
    return out


def generate(proc: ProcessSpec, N: int, seed: int, start=None) -> Trajectory:
    if N < 1:
        raise ValueError("trajectory length N must be at least 1")
    space = proc.space
    if start is not None:
        return Trajectory(seed, forced_orbit(proc, start, N), space)
    rng = np.random.default_rng(seed)
    kind = proc.kind
    if kind == IID:
        if space.kind == sp.CANTOR:
            pts = sp.sample_cantor_digits(space, rng, N)
        else:
            pts = sp.sample_coords(space, rng, N)
    elif kind == DOUBLING:
        pts = _doubling_bits(rng, N)
    elif kind == BETA:
        pts = _beta_orbit(float(sp.sample_coords(space, rng, 1)[0]), proc.beta, N)
    elif kind == GAUSS_MAP:
        pts = _gauss_orbit(float(sp.sample_coords(space, rng, 1)[0]), N)
    else:
        P = np.asarray(proc.transition, dtype=float)
        b = P.shape[0]
        cum = np.cumsum(P, axis=1)
        state0 = int(np.searchsorted(np.cumsum(stationary_vector(P)), rng.random(), side="right"))
        draws = rng.random((N, 2))
        pts = _markov_chain(cum, draws[:, 0].copy(), draws[:, 1].copy(), min(state0, b - 1))
    return Trajectory(seed, pts, space)


def step(proc: ProcessSpec, x: np.ndarray) -> np.ndarray:
    """One application of the deterministic map to an array of points."""
    x = np.asarray(x, dtype=float)
    if proc.kind == DOUBLING:
        y = 2.0 * x
    elif proc.kind == BETA:
        y = proc.beta * x
    elif proc.kind == GAUSS_MAP:
        with np.errstate(divide="ignore"):
            y = np.where(x == 0.0, 0.0, 1.0 / np.where(x == 0.0, 1.0, x))
    else:
        raise ValueError(f"{proc.kind} has no deterministic step")
    return np.minimum(y - np.floor(y), np.nextafter(1.0, 0.0))


# --------------------------------------------------------------------------
# mixing


@dataclass(frozen=True)
class MixingProfile:
    lags: tuple
    psi: tuple
    stderr: tuple
    trials: int
    horizon: int
    selected: tuple = ()


def dyadic_balls(level: int) -> list[tuple[float, float]]:
    """Intervals [k 2^-level, (k+1) 2^-level) written as (centre, radius)."""
    h = 2.0**-level
    return [((k + 0.5) * h, 0.5 * h) for k in range(2**level)]


def _ratio_stats(a: np.ndarray, b: np.ndarray, muA: np.ndarray):
    """D = mean(a)/mean(b) - mu(A) with delta-method stderr; a is (T, A, B), b is (T, B)."""
    T = a.shape[0]
    abar = a.mean(axis=0)
    bbar = b.mean(axis=0)
    if np.any(bbar <= 0):
        raise ValueError("a future test ball was never visited; enlarge the ball or the trial budget")
    R = abar / bbar[None, :]
    resid = a - R[None, :, :] * b[:, None, :]
    se = resid.std(axis=0, ddof=1) / (bbar[None, :] * math.sqrt(T))
    return R - muA[:, None], se


def mixing_profile(proc: ProcessSpec, test_balls, lags, trials: int, horizon: int,
                   seed: int) -> MixingProfile:
    """psi(n) = max over ball pairs (A, B) of |P(xi_1 in A | xi_{1+n} in B) - mu(A)|.

    Every shift k of a trajectory contributes a pair (xi_k, xi_{k+n}); each
    trajectory is one independent cluster for the standard errors.  The
    maximising pair is chosen on the even-numbered trials and its signed
    deviation is re-estimated on the odd-numbered ones, which removes the
    selection bias of the maximum.  Only single future balls are probed, so
    psi is a lower bound on the coefficient taken over the whole future.
    """
    balls = list(test_balls)
    lags = [int(n) for n in lags]
    if not balls:
        raise ValueError("test_balls must be non-empty")
    if not lags or min(lags) < 1 or max(lags) >= horizon:
        raise ValueError("lags must satisfy 1 <= n < horizon")
    if trials < 4:
        raise ValueError("need at least 4 trials")
    space = proc.space
    centers = np.array([c for c, _ in balls])
    rads = np.array([r for _, r in balls])
    muA = sp.ball_measure_coords(space, centers, rads)
    ind = np.empty((trials, horizon, len(balls)), dtype=np.float32)
    for i in range(trials):
        x = generate(proc, horizon, splitmix64(seed, i)).coords
        d = sp.pairwise_distance(x[:, None], centers[None, :], space.wraps)
        ind[i] = d < rads[None, :]
    sel, hold = ind[0::2], ind[1::2]
    psi, se, chosen = [], [], []
    for n in lags:
        L = horizon - n
        stats = []
        for part in (sel, hold):
            X = part[:, :L, :].astype(np.float64)
            Y = part[:, n:, :].astype(np.float64)
            a = np.einsum("tka,tkb->tab", X, Y) / L
            b = Y.mean(axis=1)
            stats.append(_ratio_stats(a, b, muA))
        D_sel, _ = stats[0]
        D_hold, se_hold = stats[1]
        ia, ib = np.unravel_index(np.argmax(np.abs(D_sel)), D_sel.shape)
        sign = 1.0 if D_sel[ia, ib] >= 0 else -1.0
        psi.append(float(sign * D_hold[ia, ib]))
        se.append(float(se_hold[ia, ib]))
        chosen.append((int(ia), int(ib)))
    return MixingProfile(tuple(lags), tuple(psi), tuple(se), trials, horizon, tuple(chosen))


@dataclass(frozen=True)
class MixingFit:
    c_hat: float
    gamma_hat: float
    lags_used: tuple
    indistinguishable: bool = False

    def bound(self, n) -> np.ndarray:
        return self.c_hat * self.gamma_hat ** np.asarray(n, dtype=float)


def fit_mixing_rate(profile: MixingProfile, noise: float = 3.0) -> MixingFit:
    """Least-squares fit of log psi(n) = log c + n log gamma.

    Only lags with psi above ``noise`` standard errors enter the fit.  With
    fewer than two such lags the dependence cannot be told apart from zero and
    the returned fit is flagged ``indistinguishable``.
    """
    lags = np.asarray(profile.lags, dtype=float)
    psi = np.asarray(profile.psi)
    se = np.asarray(profile.stderr)
    keep = (psi > noise * se) & (psi > 0)
    if keep.sum() < 2:
        return MixingFit(math.nan, math.nan, (), indistinguishable=True)
    slope, icpt = np.polyfit(lags[keep], np.log(psi[keep]), 1)
    gamma = float(np.clip(math.exp(slope), np.finfo(float).tiny, np.nextafter(1.0, 0.0)))
    return MixingFit(float(math.exp(icpt)), gamma, tuple(int(n) for n in lags[keep]))


def exact_dyadic_psi(level: int, n: int) -> float:
    """Exact psi(n) for the doubling map on level-``level`` dyadic intervals.

    Enumerates all binary words of length level + n: the first ``level`` bits
    locate x, the last ``level`` bits locate T^n x.
    """
    L = int(level)
    total = L + n
    v = np.arange(2**total, dtype=np.int64)
    a = v >> n
    b = v & (2**L - 1)
    joint = np.zeros((2**L, 2**L))
    np.add.at(joint, (a, b), 1.0)
    joint /= 2.0**total
    mu = 2.0**-L
    return float(np.max(np.abs(joint / mu - mu)))
