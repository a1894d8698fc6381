import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from covering_lab import space as sp

ALL_SPACES = [sp.circle(), sp.interval(), sp.parry(), sp.gauss(), sp.cantor()]


def cantor_ball_by_cylinders(x, r, depth):
    """Measure of B(x, r) by summing level-`depth` cylinders fully inside the ball,
    plus a bracket from those that only meet it."""
    inside = meets = 0
    width = 3.0**-depth
    for word in itertools.product((0, 2), repeat=depth):
        lo = sum(d * 3.0 ** -(k + 1) for k, d in enumerate(word))
        hi = lo + width
        if lo > x - r and hi < x + r:
            inside += 1
        if hi > x - r and lo < x + r:
            meets += 1
    return inside / 2**depth, meets / 2**depth


def test_constructors():
    assert sp.circle().wraps and not sp.interval().wraps
    assert sp.circle().diameter == 0.5
    assert sp.cantor().s == pytest.approx(math.log(2) / math.log(3))
    assert sp.parry().C == 3.0
    assert not sp.parry().experimental
    assert sp.parry(1.8).experimental
    with pytest.raises(ValueError):
        sp.make_space("torus")
    with pytest.raises(ValueError):
        sp.SpaceSpec(sp.PARRY, 1.0, 2.0, 1.0, beta=1.0)


def test_circle_distance_wraps():
    s = sp.circle()
    assert sp.distance(s, 0.05, 0.95) == pytest.approx(0.1)
    assert sp.distance(sp.interval(), 0.05, 0.95) == pytest.approx(0.9)


def test_cantor_points_are_digit_words():
    c = sp.cantor(8)
    assert sp.distance(c, [0] * 8, [2] + [0] * 7) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        sp.coordinate(c, [1, 0, 0])
    with pytest.raises(TypeError):
        sp.coordinate(c, 0.5)
    with pytest.raises(TypeError):
        sp.coordinate(sp.interval(), [0, 2])


def test_ball_measure_edge_cases():
    assert sp.ball_measure(sp.circle(), 0.3, 0.6) == 1.0
    assert sp.ball_measure(sp.cantor(8), [0] * 8, 1 / 3) == pytest.approx(0.5)
    assert sp.ball_measure(sp.gauss(), 0.0, 0.5) == pytest.approx(math.log2(1.5))
    with pytest.raises(ValueError):
        sp.ball_measure(sp.interval(), 0.5, 0.0)


def test_golden_parry_density_is_exact():
    phi = sp.GOLDEN
    lo = (5 + 3 * math.sqrt(5)) / 10
    hi = (5 + math.sqrt(5)) / 10
    h = sp.parry_density(phi, np.array([0.1, 0.5, 0.7, 0.99]))
    assert h == pytest.approx([lo, lo, hi, hi], rel=1e-12)
    # the density is bounded below by 1/Z for every beta
    for beta in (1.3, 1.8, 2.5, 3.7):
        x = np.linspace(0, 1, 2001)[:-1]
        assert sp.parry_density(beta, x).min() > 0


@pytest.mark.parametrize("beta", [sp.GOLDEN, 1.3, 2.5])
def test_parry_density_integrates_to_one(beta):
    # step density: a fine midpoint rule is accurate to the number of jumps / grid
    x = (np.arange(2**20) + 0.5) / 2**20
    assert sp.parry_density(beta, x).mean() == pytest.approx(1.0, abs=1e-4)


def test_gauss_cdf_matches_quadrature():
    g = sp.gauss()
    for x in (0.1, 0.37, 0.8):
        val, _ = integrate.quad(lambda t: 1 / (math.log(2) * (1 + t)), 0, x)
        assert float(sp.cdf(g, x)) == pytest.approx(val, rel=1e-12)


@pytest.mark.parametrize("x,r", [(0.0, 0.2), (1 / 3, 0.05), (0.75, 0.3), (0.5, 0.4)])
def test_cantor_ball_measure_against_cylinder_count(x, r):
    lo, hi = cantor_ball_by_cylinders(x, r, 12)
    m = float(sp.ball_measure_coords(sp.cantor(), x, r))
    assert lo - 1e-12 <= m <= hi + 1e-12
    assert hi - lo <= 2 * 2.0**-12 + 1e-12


@pytest.mark.parametrize("space", ALL_SPACES[:4], ids=lambda s: s.kind)
def test_sampler_matches_cdf(space):
    x = sp.sample_coords(space, np.random.default_rng(3), 40000)
    ks = stats.kstest(x, lambda t: sp.cdf(space, t))
    assert ks.statistic < 0.01


def test_cantor_sampler_cylinder_frequencies():
    c = sp.cantor(20)
    x = sp.sample_coords(c, np.random.default_rng(5), 20000)
    # level-2 cylinders [0,1/9), [2/9,1/3), [2/3,7/9), [8/9,1) each carry 1/4
    cells = np.floor(x * 9).astype(int)
    counts = np.bincount(cells, minlength=9)
    assert set(np.flatnonzero(counts)) == {0, 2, 6, 8}
    assert np.all(np.abs(counts[[0, 2, 6, 8]] / x.size - 0.25) < 0.015)


def test_sample_measure_returns_valid_points():
    rng = np.random.default_rng(0)
    for space in ALL_SPACES:
        p = sp.sample_measure(space, rng)
        sp.coordinate(space, p)


@pytest.mark.parametrize("space", ALL_SPACES, ids=lambda s: s.kind)
def test_ahlfors_estimate_recovers_exponent(space):
    est = sp.ahlfors_estimate(space, 1000, seed=1)
    assert abs(est.s_hat - space.s) <= 0.03
    assert 1.0 <= est.C_hat <= space.C
    s_hat, C_hat = est
    assert s_hat == est.s_hat


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(ALL_SPACES), st.floats(0, 0.999), st.floats(1e-4, 0.2),
       st.floats(1.01, 3.0))
def test_ball_measure_monotone_and_regular(space, x, r, k):
    if space.kind == sp.CANTOR:
        x = float(sp.cantor_embed(np.array([2 * int(b) for b in
                                            np.binary_repr(int(x * 2**20), 20)])))
    m1 = float(sp.ball_measure_coords(space, x, r))
    m2 = float(sp.ball_measure_coords(space, x, k * r))
    assert m1 <= m2 + 1e-15
    if space.kind != sp.CANTOR:
        assert space.C**-1 * r**space.s * (1 - 1e-12) <= m1 <= space.C * r**space.s * (1 + 1e-12)
    elif r < 1 / 3:
        # Cantor balls centred on the set
        assert space.C**-1 * r**space.s <= m1 + 1e-12 <= space.C * r**space.s + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(ALL_SPACES[:4]), st.floats(0, 1), st.floats(0, 1))
def test_cdf_monotone(space, a, b):
    lo, hi = sorted((a, b))
    assert float(sp.cdf(space, lo)) <= float(sp.cdf(space, hi)) + 1e-15


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(ALL_SPACES), st.floats(0, 0.999), st.floats(0, 0.999),
       st.floats(0, 0.999))
def test_metric_axioms(space, x, y, z):
    d = lambda a, b: float(sp.pairwise_distance(a, b, space.wraps))
    assert d(x, y) == d(y, x)
    assert d(x, x) == 0
    assert d(x, z) <= d(x, y) + d(y, z) + 1e-15
    assert d(x, y) <= space.diameter
