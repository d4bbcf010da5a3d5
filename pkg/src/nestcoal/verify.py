"""Property suites run by ``nestcoal verify``.

Each check returns a :class:`Check`; sizes are chosen so a full ``all`` run
finishes in well under a minute.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kingman, rde
from .nested import NestedConfig, SpeciesState, nested_step, simulate_nested
from .rng import RngStream
from .trajectory import Decimation


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def __post_init__(self):
        self.passed = bool(self.passed)

    def line(self) -> str:
        return f"{self.name}: {'pass' if self.passed else 'FAIL'} ({self.detail})"


def _binomial_ok(hits, trials, p, sigmas=3.0):
    sd = math.sqrt(p * (1 - p) / trials)
    freq = hits / trials
    return abs(freq - p) <= sigmas * sd, freq, sd


# ---------------------------------------------------------------- core

def core_suite(seed: int):
    out = []
    draws = kingman.sample_block_counts(2, 0.5, RngStream(seed, 1), 100_000)
    ok, freq, sd = _binomial_ok(int(np.sum(draws == 2)), draws.size, math.exp(-0.5))
    out.append(Check("P(K_2(0.5)=2) vs exp(-0.5)", ok, f"freq {freq:.4f}, sd {sd:.4f}"))

    n, m, reps = 10_000, 100, 2_000
    vals = np.array([m * kingman.simulate_block_trajectory(n, RngStream(seed, 100 + r),
                                                           levels=[m])[1][m] for r in range(reps)])
    target = m * (2.0 / m - 2.0 / n)
    rel = abs(vals.mean() / target - 1)
    out.append(Check("m*tau_m mean (n=1e4, m=100)", rel <= 0.10,
                     f"mean {vals.mean():.4f} vs {target:.4f}"))

    t, eps = 0.02, 0.3
    k = kingman.sample_block_counts(n, t, RngStream(seed, 2), 2_000)
    freq = float(np.mean(k < 2 * (1 - eps) / t))
    out.append(Check("deviation frequency P(K < 2(1-eps)/t)", freq < 0.05, f"{freq:.4f} < 0.05"))

    reports = []
    for r in range(300):
        traj, _ = kingman.simulate_block_trajectory(200, RngStream(seed, 10_000 + r), rate_scale=1.0)
        reports.append(kingman.yule_timechange_statistic(traj, 20, 1.0))
    pooled = kingman.pool_yule_reports(reports)
    out.append(Check("Yule time-change mean", pooled.mean_ok,
                     f"mean {pooled.mean:.4f}, 3 sigma = {3 * pooled.stderr:.4f}"))
    out.append(Check("Yule time-change KS distance", pooled.ks_ok,
                     f"D {pooled.ks_distance:.4f}"))

    means = []
    for j, nn in enumerate((10, 100, 1000)):
        d = kingman.sample_block_counts(nn, 0.05, RngStream(seed, 20 + j), 10_000)
        means.append((d.mean(), d.std(ddof=1) / math.sqrt(d.size)))
    mono = all(means[i + 1][0] >= means[i][0] - 3 * math.hypot(means[i][1], means[i + 1][1])
               for i in range(len(means) - 1))
    out.append(Check("E[K_n(t)] non-decreasing in n", mono,
                     ", ".join(f"{mu:.3f}" for mu, _ in means)))
    return out


# ---------------------------------------------------------------- nested

def nested_suite(seed: int):
    out = []
    gen = RngStream(seed, 1).generator()
    bad = 0
    for r in range(100):
        s = int(gen.integers(1, 12))
        n = int(gen.integers(1, 12))
        c = float(gen.uniform(0.1, 3.0))
        tr = simulate_nested(NestedConfig(s, n, c, seed=seed, stream_index=r))
        _, S_f, N_f = tr.terminal
        if tr.lineage_merges != s * n - N_f or tr.species_merges != s - S_f or N_f != 1:
            bad += 1
    out.append(Check("event-count conservation (100 configs)", bad == 0, f"{bad} violations"))

    state = SpeciesState([2, 3, 5])
    g = RngStream(seed, 2).generator()
    picks = np.bincount([state.sample_species(g) for _ in range(100_000)], minlength=3)
    fails = [not _binomial_ok(picks[i], 100_000, w / 28)[0] for i, w in enumerate((2, 6, 20))]
    out.append(Check("weighted species selection {2,3,5}", not any(fails),
                     "freqs " + ", ".join(f"{p / 100_000:.4f}" for p in picks)))

    g = RngStream(seed, 3).generator()
    hits = 0
    trials = 100_000
    for _ in range(trials):
        st = SpeciesState([2, 2])
        hits += nested_step(st, 1.0, g).is_species_merge
    ok, freq, _ = _binomial_ok(hits, trials, 1 / 3)
    out.append(Check("P(species merge | {2,2}, c=1) = 1/3", ok, f"freq {freq:.4f}"))

    cfg = NestedConfig(50, 200, 1.0, seed=seed, t_max=1.0, decimation=Decimation("all-events"))
    a, b = simulate_nested(cfg), simulate_nested(cfg)
    same = (np.array_equal(a.times, b.times) and np.array_equal(a.S, b.S)
            and np.array_equal(a.N, b.N))
    out.append(Check("determinism under identical config", same, f"{len(a)} points"))

    s, n, t = 200, 1000, 0.05
    vals = [simulate_nested(NestedConfig(s, n, 0.0, seed=seed, t_max=t, stream_index=r)).N_at(t) / s
            for r in range(100)]
    ref = kingman.expected_blocks(n, t)
    rel = abs(np.mean(vals) / ref - 1)
    out.append(Check("c=0 reduces to independent Kingman runs", rel < 0.05,
                     f"N/s {np.mean(vals):.3f} vs {ref:.3f}"))

    st = SpeciesState.uniform(100, 50)
    g = RngStream(seed, 4).generator()
    for _ in range(4000):
        nested_step(st, 1.0, g)
    rel = abs(st.lineage_rate_total - st.recompute_lineage_rate()) / max(st.recompute_lineage_rate(), 1)
    out.append(Check("cached lineage rate matches recomputation", rel <= 1e-9, f"rel err {rel:.2e}"))
    return out


# ---------------------------------------------------------------- rde

def rde_suite(seed: int):
    out = []
    g = RngStream(seed, 1).generator()
    u = g.random(100_000)
    x = 4.0 + g.exponential(5.0, 100_000)
    y = 4.0 + g.exponential(5.0, 100_000)
    lhs = np.abs(rde.h_merge(u, x) - rde.h_merge(u, y))
    rhs = u / (4.0 * (1.0 - u / 2.0) ** 2) * np.abs(x - y)
    viol = int(np.sum(lhs > rhs * (1 + 1e-12) + 1e-15))
    out.append(Check("pathwise contraction bound", viol == 0, f"{viol} violations in 1e5"))

    g = RngStream(seed, 2).generator()
    viol = 0
    for _ in range(300):
        d = int(g.integers(1, 7))
        us = rde.tree_uniforms(d, g)
        leaves = 2.0 + g.exponential(3.0, 1 << d)
        base = rde.sandwich_from_uniforms(us, leaves).w_lower
        bumped = leaves.copy()
        bumped[int(g.integers(0, leaves.size))] += float(g.exponential(2.0))
        if rde.sandwich_from_uniforms(us, bumped).w_lower < base:
            viol += 1
    out.append(Check("monotone coupling under leaf perturbation", viol == 0, f"{viol} violations"))

    t2 = rde.apply_T(rde.EmpiricalDistribution.delta(2.0, 10), 1_000_000, RngStream(seed, 3))
    se = t2.particles.std(ddof=1) / math.sqrt(t2.count)
    target = 4 * math.log(2)
    out.append(Check("mean of T(delta_2) = 4 log 2", abs(t2.mean() - target) <= 3 * se,
                     f"{t2.mean():.5f} vs {target:.5f}, se {se:.5f}"))

    ms = []
    for k, count in enumerate((10_000, 100_000)):
        gk = RngStream(seed, 4 + k).generator()
        first = rde.EmpiricalDistribution(2.0 / (1.0 - rde.open_uniform(gk, count)))
        ms.append(rde.apply_T(first, count, gk).mean())
    rel = abs(ms[0] / ms[1] - 1)
    out.append(Check("second iterate from delta_inf has stable finite mean", rel < 0.05,
                     f"means {ms[0]:.4f}, {ms[1]:.4f}"))

    lo, hi = rde.sandwich_samples(8, 5_000, seed)
    out.append(Check("sandwich ordering W_L <= W_U", bool(np.all(lo <= hi)), "5000 trees, depth 8"))

    lower, upper = rde.gamma_analytic_bounds()
    res = abs(rde.jensen_residual(upper))
    out.append(Check("analytic bounds", abs(lower - 2.772589) < 1e-6 and abs(upper - 3.512862) < 1e-4
                     and res < 1e-10, f"{lower:.6f}, {upper:.6f}, residual {res:.1e}"))

    a = rde.estimate_gamma(6, 400, seed, workers=1)
    b = rde.estimate_gamma(6, 400, seed, workers=2)
    out.append(Check("estimate_gamma independent of workers", a == b,
                     f"mean_lower {a.mean_lower!r}"))
    return out


SUITES = {"core": core_suite, "nested": nested_suite, "rde": rde_suite}


def run_suite(name: str, seed: int):
    if name == "all":
        checks = []
        for fn in SUITES.values():
            checks.extend(fn(seed))
        return checks
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](seed)
