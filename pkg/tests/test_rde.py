import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nestcoal import rde
from nestcoal.rng import RngStream

THREE_LN3 = 3.295836866004329  # quad of h(u, 6) over u in [0, 1], frozen
UPPER = 3.5128624172523395     # -2 W_{-1}(-1/(2 sqrt e)) via scipy.special.lambertw, frozen


def test_h_merge_values():
    assert rde.h_merge(0.0, 7.0) == 2.0
    assert rde.h_merge(0.5, 2.0) == 2.0
    assert rde.h_merge(0.5, np.inf) == 4.0
    x = np.array([4.0, np.inf])
    assert np.allclose(rde.h_merge(np.array([0.25, 0.25]), x), [2 / (0.75 + 0.125), 2 / 0.75])
    with pytest.raises(ValueError):
        rde.h_merge(1.0, 4.0)
    with pytest.raises(ValueError):
        rde.h_merge(0.5, 1.0)


@settings(max_examples=200)
@given(st.floats(0, 0.999), st.floats(4, 1e6), st.floats(4, 1e6))
def test_h_monotone_and_lipschitz(u, x, y):
    hx, hy = rde.h_merge(u, x), rde.h_merge(u, y)
    if x <= y:
        assert hx <= hy + 1e-12
    bound = u / (4 * (1 - u / 2) ** 2) * abs(x - y)
    assert abs(hx - hy) <= bound * (1 + 1e-9) + 1e-12


def test_wasserstein_brute_force():
    a = rde.EmpiricalDistribution(np.array([4.0, 2.0]))
    b = rde.EmpiricalDistribution(np.array([3.0, 7.0]))
    assert rde.wasserstein1(a, b) == 2.0
    with pytest.raises(ValueError):
        rde.wasserstein1(a, rde.EmpiricalDistribution.delta(2.0, 3))
    with pytest.raises(ValueError):
        rde.wasserstein1(a, rde.EmpiricalDistribution(np.array([2.0, np.inf])))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(2, 100), min_size=2, max_size=6), st.randoms())
def test_sorted_matching_is_optimal(xs, rnd):
    import itertools
    ys = [rnd.uniform(2, 100) for _ in xs]
    best = min(np.mean(np.abs(np.array(xs) - np.array(p))) for p in itertools.permutations(ys))
    got = rde.wasserstein1(rde.EmpiricalDistribution(np.array(xs)),
                           rde.EmpiricalDistribution(np.array(ys)))
    assert got == pytest.approx(best, rel=1e-12)


def test_empirical_distribution_rules():
    with pytest.raises(ValueError):
        rde.EmpiricalDistribution(np.array([1.0, 3.0]))
    d = rde.EmpiricalDistribution(np.array([5.0, np.inf, 2.0]))
    assert d.particles[0] == 2.0 and d.has_infinity and d.mean() == math.inf


def test_apply_T_reproducible_and_mean():
    mu = rde.EmpiricalDistribution.delta(2.0, 10)
    a = rde.apply_T(mu, 200_000, RngStream(3))
    b = rde.apply_T(mu, 200_000, RngStream(3))
    assert np.array_equal(a.particles, b.particles)
    se = a.particles.std(ddof=1) / math.sqrt(a.count)
    assert abs(a.mean() - 4 * math.log(2)) < 3.5 * se


def test_conditional_mean_oracle():
    assert rde.conditional_mean_w(3.0, 3.0) == pytest.approx(THREE_LN3, rel=1e-13)
    assert rde._mean_given_sum(2.0) == 2.0
    assert rde.conditional_mean_w(2.0, 2.0) == pytest.approx(4 * math.log(2), rel=1e-14)
    with pytest.raises(ValueError):
        rde.conditional_mean_w(1.0, 3.0)


def test_analytic_bounds():
    lo, hi = rde.gamma_analytic_bounds()
    assert lo == pytest.approx(4 * math.log(2), abs=1e-12)
    assert hi == pytest.approx(UPPER, rel=1e-14)
    assert abs(rde.jensen_residual(hi)) < 1e-10


def test_sandwich_depth_zero_and_order():
    pair = rde.sandwich_replicate(0, RngStream(1))
    assert pair.w_lower == 2.0 and pair.w_upper == math.inf
    us = rde.tree_uniforms(5, RngStream(2))
    assert us.size == 31
    p = rde.sandwich_from_uniforms(us)
    assert 2.0 <= p.w_lower <= p.w_upper < math.inf
    with pytest.raises(ValueError):
        rde.sandwich_replicate(rde.MAX_DEPTH + 1, RngStream(0))


def test_sandwich_gap_shrinks_with_depth():
    gaps = []
    for d in (2, 6, 10):
        lo, hi = rde.sandwich_samples(d, 2000, 5)
        assert np.all(lo <= hi)
        gaps.append(np.mean(hi - lo))
    assert gaps[0] > gaps[1] > gaps[2]


def test_estimate_gamma_worker_invariance():
    a = rde.estimate_gamma(6, 300, seed=4, workers=1)
    b = rde.estimate_gamma(6, 300, seed=4, workers=3)
    assert a == b
    d = a.to_dict()
    assert d["ci95_lo"] < d["mean_lower"] <= d["mean_upper"] < d["ci95_hi"]


def test_fixed_point_iteration_small():
    res = rde.iterate_to_fixed_point(20_000, tol=1e-3, max_iter=60, init="delta2", rng=1)
    assert res.stopped_by in ("tol", "plateau")
    assert 3.3 < res.gamma_hat < 3.6
    assert res.decay_ratio <= 0.75
    with pytest.raises(rde.NonConvergenceError) as info:
        rde.iterate_to_fixed_point(5_000, tol=1e-12, max_iter=2, rng=1, patience=50)
    assert len(info.value.distances) == 2


def test_T_of_delta_inf_median():
    out = rde.apply_T(rde.EmpiricalDistribution(np.array([np.inf] * 4)), 100_001, RngStream(6))
    assert np.median(out.particles) == pytest.approx(4.0, rel=0.02)


def test_fixed_point_full_size_in_bounds():
    lo, hi = rde.gamma_analytic_bounds()
    res = rde.iterate_to_fixed_point(100_000, tol=1e-3, init="delta2", rng=RngStream(2))
    assert lo <= res.gamma_hat <= hi
