import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from covering_lab import engine as en
from covering_lab import process as pr
from covering_lab import schedule as sc
from covering_lab import space as sp


class Constant:
    """Trajectory stand-in: xi_n = y for every n."""

    def __init__(self, y, N, space):
        self.points = np.full(N, y)
        self.coords = self.points
        self.space = space

    def __len__(self):
        return len(self.points)


def test_window_and_ladder():
    lad = en.geometric_ladder(3, 5)
    assert [(w.K, w.N) for w in lad] == [(8, 15), (16, 31), (32, 63)]
    with pytest.raises(ValueError):
        en.Window(5, 4)
    with pytest.raises(ValueError):
        en.Window(0, 4)


def test_parallelism_cap(monkeypatch):
    monkeypatch.setenv(en.THREADS_ENV, "2")
    assert en.parallelism_cap(8) == 2
    monkeypatch.delenv(en.THREADS_ENV)
    assert en.parallelism_cap(8) == 8
    assert en.parallelism_cap(None) >= 1


def test_run_trials_order_and_determinism():
    task = lambda s: s % 1000
    a = en.run_trials(task, 50, 7, parallelism=1)
    b = en.run_trials(task, 50, 7, parallelism=8)
    assert a == b == [s % 1000 for s in en.trial_seeds(7, 50)]
    assert en.run_trials(lambda s: s, 1, 7) == [pr.splitmix64(7, 0)]


def test_bernoulli_toy_mean():
    res = en.run_trials(lambda s: float(np.random.default_rng(s).random() < 0.5), 400, 11)
    m, se = en.mean_stderr(res)
    assert abs(m - 0.5) <= 0.075
    assert se == pytest.approx(math.sqrt(0.25 / 400), rel=0.05)


def test_constant_trajectory_hits_every_time():
    c = sp.circle()
    st_ = en.hit_counts(Constant(0.2, 100, c), sc.power(0.01, 1), 0.2, [10, 100])
    assert st_.counts == (10, 100)


def test_period_two_orbit_never_hits_zero():
    traj = pr.generate(pr.doubling(sp.interval()), 1000, 0, start="1/3")
    h = sc.explicit([0.1] * 1000)
    assert en.hit_counts(traj, h, 0.0, [1000]).counts == (0,)


def test_iid_circle_hit_mean_is_half_harmonic():
    N = 10**4
    proc = pr.iid(sp.circle())
    sched = sc.power(0.25, 1)
    res = en.run_trials(lambda s: en.hit_counts(pr.generate(proc, N, s), sched, 0.3, [N]).counts[0],
                        1000, 5, parallelism=4)
    want = 0.5 * math.fsum(1.0 / n for n in range(1, N + 1))
    assert want == pytest.approx(4.894, abs=1e-3)
    assert abs(np.mean(res) - want) <= 0.15


def test_hit_counts_errors():
    traj = pr.generate(pr.iid(sp.circle()), 10, 0)
    with pytest.raises(ValueError):
        en.hit_counts(traj, sc.power(1, 1), 0.5, [20])
    with pytest.raises(TypeError):
        en.hit_counts(traj, sc.power(1, 1), [0, 2], [5])


def _stats_from(S):
    return [en.HitStats(0.0, (len(S),), (int(s),)) for s in S]


def test_pz_report_examples():
    rep = en.paley_zygmund_report(_stats_from([10] * 100), 0.5)
    assert rep.empirical_prob == 1.0 and rep.pz_bound == pytest.approx(0.25)
    # moments E S = 10, E S^2 = 120
    S = np.array([10 - math.sqrt(20), 10 + math.sqrt(20)] * 50)
    m1, m2 = S.mean(), np.mean(S**2)
    assert (m1, m2) == pytest.approx((10, 120))
    bound = (1 - 0.5) ** 2 * m1**2 / m2
    assert bound == pytest.approx(0.2083, abs=1e-4)
    with pytest.raises(ValueError):
        en.paley_zygmund_report(_stats_from([1] * 50), 0.5)
    with pytest.raises(ValueError):
        en.paley_zygmund_report(_stats_from([0] * 100), 0.5)
    with pytest.raises(ValueError):
        en.paley_zygmund_report(_stats_from([1] * 100), 1.0)


def test_pz_bernoulli_against_binomial_tail():
    rng = np.random.default_rng(1)
    S = rng.binomial(100, 0.1, size=4000)
    rep = en.paley_zygmund_report(_stats_from(S), 0.5)
    m1, m2, _ = en.poisson_binomial_moments(np.full(100, 0.1))
    assert (m1, m2) == pytest.approx((10, 109))
    exact_bound = 0.25 * m1**2 / m2
    assert exact_bound == pytest.approx(0.2294, abs=1e-4)
    exact_tail = stats.binom.sf(4, 100, 0.1)  # P(S >= 5)
    assert abs(rep.empirical_prob - exact_tail) <= 3 * rep.stderr + 0.01
    assert rep.holds


def test_poisson_binomial_moments_brute_force():
    p = np.array([0.1, 0.5, 0.7])
    vals = []
    for bits in range(8):
        b = [(bits >> k) & 1 for k in range(3)]
        w = np.prod([q if x else 1 - q for q, x in zip(p, b)])
        vals.append((sum(b), w))
    m1 = sum(s * w for s, w in vals)
    m2 = sum(s * s * w for s, w in vals)
    got = en.poisson_binomial_moments(p)
    assert got[:2] == pytest.approx((m1, m2))


def test_cover_scan_matches_naive():
    rng = np.random.default_rng(0)
    for trial in range(300):
        wraps = bool(trial % 2)
        m = int(rng.integers(1, 200))
        k = int(rng.integers(1, 60))
        p = np.sort(rng.random(m))
        c = rng.random(k)
        r = rng.random(k) ** 3 * 0.5
        if trial % 7 == 0:
            c[: k // 2] = p[rng.integers(0, m, k // 2)] + r[: k // 2]  # exact boundary ties
        assert np.array_equal(en.cover_mask_sorted(p, c, r, wraps),
                              en.cover_mask_naive(p, c, r, wraps))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 0.9999), min_size=1, max_size=60),
       st.lists(st.tuples(st.floats(0, 0.9999), st.floats(1e-6, 0.5)), min_size=1, max_size=30),
       st.booleans())
def test_cover_scan_property(probes, balls, wraps):
    p = np.sort(np.array(probes))
    c = np.array([b[0] for b in balls])
    r = np.array([b[1] for b in balls])
    assert np.array_equal(en.cover_mask_sorted(p, c, r, wraps), en.cover_mask_naive(p, c, r, wraps))


def test_covered_fraction_trivial_cases():
    c = sp.circle()
    proc = pr.iid(c)
    rep = en.covered_fraction(proc, sc.explicit([0.6] * 10), en.Window(1, 10), 500, 2, 0)
    assert rep.fraction_by_window[0] == 1.0
    # a single ball of radius r covers 2r of the circle
    rep = en.covered_fraction(proc, sc.explicit([0.1] * 5), en.Window(5, 5), 20000, 10, 1)
    assert abs(rep.fraction_by_window[0] - 0.2) <= 3 * rep.stderr_by_window[0] + 0.005


def test_covered_fraction_convergent_union_bound():
    proc = pr.iid(sp.circle())
    sched = sc.power(0.1, 1.5)
    rep = en.covered_fraction(proc, sched, en.Window(10**4, 10**6), 5000, 3, 2)
    bound = 2 * math.fsum(sc.radii(sched, 10**6, start=10**4))
    # integral comparison: 0.2 * 2 (K^-1/2 - N^-1/2)
    assert bound == pytest.approx(0.4 * (10**-2 - 10**-3), rel=0.01)
    assert rep.fraction_by_window[0] <= bound + 3 * rep.stderr_by_window[0] + 1e-3
    assert rep.fraction_by_window[0] <= 0.03


def test_limsup_proxy_single_window_equals_covered_fraction():
    proc = pr.iid(sp.circle())
    sched = sc.power(0.2, 0.8)
    w = en.Window(100, 400)
    a = en.limsup_proxy(proc, sched, [w], 2000, 3, 9)
    b = en.covered_fraction(proc, sched, w, 2000, 3, 9)
    assert a.limsup_fraction == b.fraction_by_window[0] == a.fraction_by_window[0]


def test_limsup_monotone_in_ladder_and_matches_product_form():
    proc = pr.iid(sp.circle())
    sched = sc.power(0.3, 0.9)
    lad = en.geometric_ladder(4, 8)
    reps = [en.limsup_proxy(proc, sched, lad[:k], 4000, 40, 3) for k in range(1, 6)]
    lims = [r.limsup_fraction for r in reps]
    for r in reps:
        assert r.limsup_fraction <= min(r.fraction_by_window) + 1e-15
    for k in range(len(reps) - 1):
        assert np.all(np.array(reps[k + 1].per_trial_limsup) <= np.array(reps[k].per_trial_limsup))
    per, prod = en.product_prediction(sp.circle(), sched, lad)
    full = reps[-1]
    for f, se, p in zip(full.fraction_by_window, full.stderr_by_window, per):
        assert abs(f - p) <= 3 * se + 1e-3
    assert abs(full.limsup_fraction - prod) <= 3 * full.limsup_stderr + 2e-3
    assert lims == sorted(lims, reverse=True)


def test_ladder_validation():
    proc = pr.iid(sp.circle())
    with pytest.raises(ValueError):
        en.limsup_proxy(proc, sc.power(1, 1), [], 10, 1, 0)
    with pytest.raises(ValueError):
        en.limsup_proxy(proc, sc.power(1, 1), [en.Window(1, 10), en.Window(5, 20)], 10, 1, 0)
    with pytest.raises(ValueError):
        en.product_prediction(sp.interval(), sc.power(1, 1), [en.Window(1, 2)])


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 50), st.integers(70, 400), st.integers(0, 2**32))
def test_covered_fraction_monotone_in_window(K, N, seed):
    proc = pr.doubling(sp.circle())
    sched = sc.power(0.05, 0.7)
    f = lambda k, n: en.covered_fraction(proc, sched, en.Window(k, n), 300, 1, seed).fraction_by_window[0]
    assert f(K, N) <= f(K, N + 50)
    assert f(K + 10, N) <= f(K, N)


def test_density_whole_space_mesh_and_iid_product_oracle():
    proc = pr.iid(sp.circle())
    rep = en.density_check(proc, sc.power(0.01, 1), 5, [(0.5, 1.0)], 5, 0, budget=10)
    assert rep.hit_prob == (1.0,)
    assert all(f[0] == 5 for f in rep.first_hits)
    # each miss probability <= (1 - 2/64)^(budget - K): effectively zero
    mesh = en.uniform_mesh(64, 1 / 64)
    rep = en.density_check(proc, sc.power(1, 0.9), 10**3, mesh, 20, 1, budget=10**6)
    assert (1 - 2 / 64) ** (10**6 - 10**3) < 1e-300
    assert rep.all_hit_prob == 1.0
    assert rep.first_hit_quantiles["min"] >= 10**3


def test_density_chunked_equals_full_scan():
    proc = pr.doubling(sp.circle())
    sched = sc.power(0.001, 1.2)
    mesh = en.uniform_mesh(16, 1 / 256)
    rep = en.density_check(proc, sched, 50, mesh, 3, 4, budget=30000)
    for seed, first in zip(en.trial_seeds(4, 3), rep.first_hits):
        x = pr.generate(proc, 30000, pr.splitmix64(seed, 0)).coords
        r = sc.radii(sched, 30000)
        c = np.array([m[0] for m in mesh])
        d = sp.pairwise_distance(x[49:, None], c[None, :], True)
        hit = d < (r[49:, None] + 1 / 256)
        want = [int(np.argmax(hit[:, i])) + 50 if hit[:, i].any() else -1 for i in range(16)]
        assert list(first) == want


def test_density_errors():
    proc = pr.iid(sp.circle())
    with pytest.raises(ValueError):
        en.density_check(proc, sc.power(1, 1), 0, [(0.5, 0.1)], 1, 0)
    with pytest.raises(ValueError):
        en.density_check(proc, sc.power(1, 1), 1, [(0.5, 0.0)], 1, 0)


def test_clip_radii():
    r = np.array([0.7, 0.3])
    assert en.clip_radii(sp.circle(), r).tolist() == [0.5, 0.3]
    assert en.clip_radii(sp.interval(), r).tolist() == [0.7, 0.3]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.integers(10, 2000))
def test_hit_counts_nondecreasing(seed, N):
    traj = pr.generate(pr.beta_shift(), N, seed)
    cps = sorted({1, N // 3 + 1, N // 2 + 1, N})
    c = en.hit_counts(traj, sc.power(0.5, 1), 0.4, cps).counts
    assert list(c) == sorted(c)
    assert c[-1] <= N
