"""Compact metric measure spaces with Ahlfors-regular measures.

Five concrete spaces are available: the circle R/Z with arc-length metric,
and the unit interval carrying Lebesgue, Parry (beta-transformation) or
Gauss measure, plus the middle-thirds Cantor set with its natural measure.

Points are plain floats in [0, 1) for the circle and interval kinds.  Cantor
points are digit words over {0, 2}; they are embedded into [0, 1] through
their ternary expansion, and all distances are measured in the embedding.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence, Union

import mpmath
import numpy as np

CIRCLE = "circle"
INTERVAL = "interval-lebesgue"
PARRY = "interval-parry"
GAUSS = "interval-gauss"
CANTOR = "cantor-ternary"

KINDS = (CIRCLE, INTERVAL, PARRY, GAUSS, CANTOR)
INTERVAL_KINDS = (INTERVAL, PARRY, GAUSS)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
CANTOR_DIM = math.log(2.0) / math.log(3.0)

PARRY_TERMS = 60
INVERSE_CDF_KNOTS = 2**16
_ORBIT_ZERO = 1e-12

Point = Union[float, Sequence[int], np.ndarray]


@dataclass(frozen=True)
class SpaceSpec:
    kind: str
    s: float
    C: float
    diameter: float
    beta: float | None = None
    cantor_depth: int = 40

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown space kind {self.kind!r}; expected one of {KINDS}")
        if not 0 < self.s <= 1:
            raise ValueError(f"regularity exponent must lie in (0, 1], got {self.s}")
        if self.C < 1:
            raise ValueError(f"regularity constant must be >= 1, got {self.C}")
        if not (0 < self.diameter < math.inf):
            raise ValueError(f"diameter must be positive and finite, got {self.diameter}")
        if self.kind == PARRY and (self.beta is None or self.beta <= 1):
            raise ValueError("interval-parry needs beta > 1")
        if self.kind == CANTOR and not 1 <= self.cantor_depth <= 60:
            raise ValueError("cantor_depth must be in [1, 60]")

    @property
    def wraps(self) -> bool:
        return self.kind == CIRCLE

    @property
    def experimental(self) -> bool:
        """Parry spaces with non-golden beta have no provable envelope here."""
        return self.kind == PARRY and not math.isclose(self.beta, GOLDEN, rel_tol=1e-12)


def circle() -> SpaceSpec:
    return SpaceSpec(CIRCLE, s=1.0, C=2.0, diameter=0.5)


def interval() -> SpaceSpec:
    return SpaceSpec(INTERVAL, s=1.0, C=2.0, diameter=1.0)


def gauss() -> SpaceSpec:
    return SpaceSpec(GAUSS, s=1.0, C=3.0, diameter=1.0)


def parry(beta: float = GOLDEN) -> SpaceSpec:
    tab = _parry_table(float(beta))
    # mu(B) <= 2 r h_max and mu(B) >= r h_min (a ball clipped at an endpoint)
    C = float(math.ceil(max(2.0 * tab.h_max, 1.0 / tab.h_min) - 1e-12))
    return SpaceSpec(PARRY, s=1.0, C=max(C, 1.0), diameter=1.0, beta=float(beta))


def cantor(depth: int = 40) -> SpaceSpec:
    return SpaceSpec(CANTOR, s=CANTOR_DIM, C=8.0, diameter=1.0, cantor_depth=depth)


def make_space(kind: str, beta: float | None = None, cantor_depth: int = 40) -> SpaceSpec:
    """Build a space from config-style keys."""
    if kind == CIRCLE:
        return circle()
    if kind == INTERVAL:
        return interval()
    if kind == GAUSS:
        return gauss()
    if kind == PARRY:
        return parry(GOLDEN if beta is None else beta)
    if kind == CANTOR:
        return cantor(cantor_depth)
    raise ValueError(f"unknown space kind {kind!r}; expected one of {KINDS}")


# --------------------------------------------------------------------------
# Parry measure


@dataclass(frozen=True)
class _ParryTable:
    beta: float
    breaks: np.ndarray  # T^n(1), n = 0..len-1
    weights: np.ndarray  # beta^-n
    norm: float
    h_min: float
    h_max: float
    knots_x: np.ndarray
    knots_F: np.ndarray


def _beta_orbit_of_one(beta: float, terms: int) -> list[float]:
    """Orbit 1, T(1), T^2(1), ... of the beta-transformation in high precision.

    The orbit stops once it reaches 0 (finite beta-expansion of 1).  Values
    below 1e-12 are treated as 0 so that floating approximations of simple
    Parry numbers such as the golden ratio give their exact density.
    """
    bits = 64 + int(math.ceil(terms * math.log2(beta))) + 64
    with mpmath.workprec(bits):
        b = mpmath.mpf(beta)
        x = mpmath.mpf(1)
        out = [1.0]
        for _ in range(terms - 1):
            y = b * x
            x = y - mpmath.floor(y)
            if x < _ORBIT_ZERO:
                break
            out.append(float(x))
    return out


@functools.lru_cache(maxsize=16)
def _parry_table(beta: float) -> _ParryTable:
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    breaks = np.array(_beta_orbit_of_one(beta, PARRY_TERMS))
    weights = beta ** -np.arange(breaks.size, dtype=float)
    norm = float(np.sum(weights * breaks))
    # step density: on each gap between sorted breakpoints the density is constant
    edges = np.unique(np.concatenate([[0.0], breaks]))
    mids = 0.5 * (edges[:-1] + edges[1:])
    levels = [np.sum(weights[m < breaks]) / norm for m in mids]
    knots_x = np.linspace(0.0, 1.0, INVERSE_CDF_KNOTS + 1)
    knots_F = _parry_cdf_raw(knots_x, breaks, weights, norm)
    knots_F[-1] = 1.0
    return _ParryTable(beta, breaks, weights, norm, float(min(levels)), float(max(levels)),
                       knots_x, knots_F)


def _parry_cdf_raw(x, breaks, weights, norm):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return np.minimum(x[..., None], breaks).dot(weights) / norm


def parry_density(beta: float, x) -> np.ndarray:
    """Normalised Parry density h(x) = sum_{n: x < T^n(1)} beta^-n / Z."""
    tab = _parry_table(float(beta))
    x = np.asarray(x, dtype=float)
    return (x[..., None] < tab.breaks).dot(tab.weights) / tab.norm


# --------------------------------------------------------------------------
# Cantor set


def cantor_embed(digits) -> np.ndarray:
    """Real value sum d_k 3^-k of one digit word or a stack of words (last axis)."""
    d = np.asarray(digits)
    powers = 3.0 ** -np.arange(1, d.shape[-1] + 1)
    return d.astype(float) @ powers


def cantor_function(x, depth: int = 40) -> np.ndarray:
    """Cantor measure of [0, x], evaluated through the first `depth` ternary digits."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    F = np.zeros_like(x)
    done = x >= 1.0
    F[done] = 1.0
    y = np.where(done, 0.0, x)
    alive = ~done
    scale = 0.5
    for _ in range(depth):
        y = y * 3.0
        d = np.floor(y)
        y = y - d
        F = F + np.where(alive & (d >= 1), scale, 0.0)
        alive = alive & (d != 1)
        scale *= 0.5
    return F


def _check_cantor_digits(p) -> np.ndarray:
    d = np.asarray(p)
    if d.ndim != 1 or d.dtype.kind not in "iu":
        raise TypeError("cantor points are integer digit words over {0, 2}")
    if np.any((d != 0) & (d != 2)):
        raise ValueError("cantor digit words may only contain the digits 0 and 2")
    return d


# --------------------------------------------------------------------------
# metric and measure


def coordinate(space: SpaceSpec, p: Point) -> float:
    """Real coordinate of ``p`` in [0, 1]; validates the point against the space kind."""
    if space.kind == CANTOR:
        return float(cantor_embed(_check_cantor_digits(p)))
    if isinstance(p, (Sequence, np.ndarray)) and not np.isscalar(p):
        raise TypeError(f"{space.kind} points are real coordinates, got a sequence")
    x = float(p)
    if not 0.0 <= x < 1.0:
        raise ValueError(f"coordinate {x} outside [0, 1)")
    return x


def pairwise_distance(x, y, wraps: bool):
    """Vectorised metric on embedded coordinates."""
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    if wraps:
        d = np.minimum(d, 1.0 - d)
    return d


def distance(space: SpaceSpec, p: Point, q: Point) -> float:
    return float(pairwise_distance(coordinate(space, p), coordinate(space, q), space.wraps))


def cdf(space: SpaceSpec, x) -> np.ndarray:
    """mu([0, x]) on the embedding interval."""
    x = np.asarray(x, dtype=float)
    if space.kind in (CIRCLE, INTERVAL):
        return np.clip(x, 0.0, 1.0)
    if space.kind == GAUSS:
        return np.log2(1.0 + np.clip(x, 0.0, 1.0))
    if space.kind == PARRY:
        tab = _parry_table(space.beta)
        return _parry_cdf_raw(x, tab.breaks, tab.weights, tab.norm)
    return cantor_function(x, space.cantor_depth)


def ball_measure_coords(space: SpaceSpec, centers, r) -> np.ndarray:
    """mu(B(x, r)) for embedded centres; broadcasts over ``centers`` and ``r``."""
    c = np.asarray(centers, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("ball radius must be positive")
    if space.kind == CIRCLE:
        return np.minimum(2.0 * r, 1.0) + 0.0 * c
    lo = c - r
    hi = c + r
    return cdf(space, hi) - cdf(space, lo)


def ball_measure(space: SpaceSpec, center: Point, r: float) -> float:
    if r <= 0:
        raise ValueError("ball radius must be positive")
    return float(ball_measure_coords(space, coordinate(space, center), r))


# --------------------------------------------------------------------------
# sampling


def sample_coords(space: SpaceSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """Embedded coordinates of ``size`` independent draws from mu."""
    if space.kind == CANTOR:
        return cantor_embed(sample_cantor_digits(space, rng, size))
    u = rng.random(size)
    if space.kind in (CIRCLE, INTERVAL):
        return u
    return inverse_cdf(space, u)


def sample_cantor_digits(space: SpaceSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    words = rng.integers(0, 2, size=(size, space.cantor_depth), dtype=np.uint8)
    return words * np.uint8(2)


def inverse_cdf(space: SpaceSpec, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if space.kind == GAUSS:
        x = np.exp2(u) - 1.0
    elif space.kind == PARRY:
        tab = _parry_table(space.beta)
        x = np.interp(u, tab.knots_F, tab.knots_x)
    elif space.kind in (CIRCLE, INTERVAL):
        x = u.copy()
    else:
        raise ValueError("the Cantor measure is sampled through its digits")
    return np.minimum(x, np.nextafter(1.0, 0.0))


def sample_measure(space: SpaceSpec, rng: np.random.Generator) -> Point:
    if space.kind == CANTOR:
        return tuple(int(d) for d in sample_cantor_digits(space, rng, 1)[0])
    return float(sample_coords(space, rng, 1)[0])


# --------------------------------------------------------------------------
# regularity


@dataclass(frozen=True)
class AhlforsEstimate:
    s_hat: float
    C_hat: float
    centers: int
    radii: tuple

    def __iter__(self):
        return iter((self.s_hat, self.C_hat))


def default_radii(space: SpaceSpec) -> list[float]:
    if space.kind == CANTOR:
        return [3.0**-k for k in range(1, 9)]
    return [2.0**-k for k in range(2, 13)]


def ahlfors_estimate(space: SpaceSpec, centers: int, radii=None, seed: int = 0) -> AhlforsEstimate:
    """Fit the exponent and constant of C^-1 r^s <= mu(B(x, r)) <= C r^s.

    The exponent is the pooled least-squares slope of log mu(B) against log r
    over `centers` points drawn from mu; the constant is the worst two-sided
    ratio against r^s_hat.
    """
    radii = np.asarray(default_radii(space) if radii is None else radii, dtype=float)
    if np.unique(radii).size < 2:
        raise ValueError("need at least two distinct radii to fit an exponent")
    if np.any(radii <= 0) or np.any(radii > space.diameter):
        raise ValueError("radii must lie in (0, diameter]")
    if centers < 10:
        raise ValueError("need at least 10 centres")
    rng = np.random.default_rng(seed)
    x = sample_coords(space, rng, centers)
    m = ball_measure_coords(space, x[:, None], radii[None, :])
    lr = np.broadcast_to(np.log(radii), m.shape).ravel()
    lm = np.log(m).ravel()
    slope = float(np.polyfit(lr, lm, 1)[0])
    rs = radii[None, :] ** slope
    C_hat = float(np.max(np.maximum(m / rs, rs / m)))
    return AhlforsEstimate(slope, C_hat, centers, tuple(radii.tolist()))
