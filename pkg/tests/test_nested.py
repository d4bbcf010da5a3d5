import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nestcoal import nested
from nestcoal.nested import (AbsorbedError, NestedConfig, SpeciesState, nested_step,
                             simulate_nested, total_rates)
from nestcoal.rng import RngStream
from nestcoal.trajectory import Decimation

# 1 + P(Exp(2) + Exp(1) > t), evaluated with scipy.integrate.quad and frozen
CONVOLUTION_ORACLE = {0.5: 1.8451818782538245, 1.0: 1.6004235991062719, 2.0: 1.2523549275844912}


def test_config_validation():
    with pytest.raises(ValueError, match="species"):
        NestedConfig(0, 5, 1.0)
    with pytest.raises(ValueError, match="lineages"):
        NestedConfig(5, 0, 1.0)
    with pytest.raises(ValueError, match="rate_c"):
        NestedConfig(5, 5, -1.0)
    with pytest.raises(ValueError, match="t_max"):
        NestedConfig(5, 5, 1.0, t_max=0.0)
    with pytest.raises(ValueError):
        NestedConfig(10**6, 10**6, 1.0)
    NestedConfig(3, 3, 0.0, t_max=1.0)


def test_total_rates():
    lin, sp = total_rates([2, 3, 5], 2.0)
    assert lin == 1 + 3 + 10
    assert sp == 2.0 * 3


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 40), min_size=1, max_size=30), st.integers(0, 2**32))
def test_fenwick_search_matches_linear_scan(counts, seed):
    state = SpeciesState(counts)
    w = np.array(counts) * (np.array(counts) - 1)
    if w.sum() == 0:
        return
    cum = np.cumsum(w)
    for target in np.random.default_rng(seed).integers(0, w.sum(), 20):
        assert nested._fw_find(state.weight_index, target) == int(np.searchsorted(cum, target, side="right"))


def test_weighted_selection_frequencies():
    state = SpeciesState([2, 3, 5])
    g = RngStream(12).generator()
    trials = 60_000
    picks = np.bincount([state.sample_species(g) for _ in range(trials)], minlength=3)
    for i, w in enumerate((2, 6, 20)):
        p = w / 28
        assert abs(picks[i] / trials - p) <= 3 * math.sqrt(p * (1 - p) / trials)


def test_species_merge_pools_lineages():
    g = RngStream(3).generator()
    for _ in range(200):
        st_ = SpeciesState([1, 1, 1])
        ev = nested_step(st_, 1.0, g)
        assert ev.is_species_merge
        assert st_.S == 2 and sorted(st_.live_counts.tolist()) == [1, 2]
        st_.check()


def test_absorbed_state_raises():
    with pytest.raises(AbsorbedError):
        nested_step(SpeciesState([1]), 1.0, 0)


def test_rate_cache_consistent_after_many_steps():
    st_ = SpeciesState.uniform(30, 20)
    g = RngStream(8).generator()
    while st_.N > 1:
        nested_step(st_, 0.7, g)
        assert st_.lineage_rate_total == st_.recompute_lineage_rate()
    st_.check()
    assert st_.lineage_merges == 30 * 20 - 1
    assert st_.species_merges == 29


@pytest.mark.parametrize("s,n,c", [(1, 1, 1.0), (2, 1, 1.0), (5, 7, 0.3), (12, 3, 4.0)])
def test_conservation_to_absorption(s, n, c):
    tr = simulate_nested(NestedConfig(s, n, c, seed=2))
    tr.validate()
    t, S, N = tr.terminal
    assert N == 1 and S == 1
    assert tr.lineage_merges == s * n - N
    assert tr.species_merges == s - S


def test_two_species_one_lineage_rows():
    tr = simulate_nested(NestedConfig(2, 1, 1.0, seed=1))
    assert len(tr) == 3
    assert tr.S.tolist() == [2, 1, 1] and tr.N.tolist() == [2, 2, 1]


def test_decimation_policies_agree_on_terminal_state():
    base = dict(s=20, n=30, c=1.0, seed=4, t_max=2.0)
    outs = [simulate_nested(NestedConfig(**base, decimation=d)) for d in
            (Decimation("all-events"), Decimation(), Decimation("every-kth", k=7))]
    for tr in outs:
        tr.validate()
        assert tr.terminal == outs[0].terminal
        assert tr.lineage_merges == outs[0].lineage_merges
    assert len(outs[1]) < len(outs[0])


def test_observe_times_are_exact():
    full = simulate_nested(NestedConfig(10, 40, 1.0, seed=6, t_max=1.0,
                                        decimation=Decimation("all-events")))
    obs = (0.01, 0.1, 0.5)
    thin = simulate_nested(NestedConfig(10, 40, 1.0, seed=6, t_max=1.0,
                                        decimation=Decimation.parse("geometric:2"), observe=obs))
    assert list(thin.N_at(obs)) == list(full.N_at(obs))


def test_holds_state_to_t_max_after_absorption():
    tr = simulate_nested(NestedConfig(2, 2, 1.0, seed=0, t_max=1e6))
    assert tr.terminal_time == 1e6 and tr.N[-1] == 1


def test_c_zero_never_merges_species():
    tr = simulate_nested(NestedConfig(5, 4, 0.0, seed=1))
    assert tr.species_merges == 0
    assert tr.terminal[1:] == (5, 5)
    with pytest.raises(AbsorbedError):
        nested_step(SpeciesState([1, 1]), 0.0, 0)


def test_deterministic_rerun():
    cfg = NestedConfig(40, 60, 1.3, seed=99, t_max=0.5, decimation=Decimation("all-events"))
    a, b = simulate_nested(cfg), simulate_nested(cfg)
    assert a.to_csv() == b.to_csv()


def test_small_instance_against_convolution():
    times = tuple(CONVOLUTION_ORACLE)
    vals = np.array([simulate_nested(NestedConfig(2, 1, 2.0, seed=17, stream_index=r, t_max=2.0,
                                                  observe=times)).N_at(times)
                     for r in range(20_000)], dtype=float)
    for j, t in enumerate(times):
        se = vals[:, j].std(ddof=1) / math.sqrt(len(vals))
        assert abs(vals[:, j].mean() - CONVOLUTION_ORACLE[t]) < 3.5 * se


def test_convolution_oracle_closed_form():
    for t, v in CONVOLUTION_ORACLE.items():
        assert v == pytest.approx(1 + 2 * math.exp(-t) - math.exp(-2 * t), rel=1e-14)


def test_species_merge_probability_two_pairs():
    g = RngStream(31).generator()
    trials = 100_000
    hits = sum(nested_step(SpeciesState([2, 2]), 1.0, g).is_species_merge for _ in range(trials))
    assert abs(hits / trials - 1 / 3) <= 3 * math.sqrt(2 / 9 / trials)


def test_c_zero_matches_independent_kingman():
    from nestcoal.kingman import expected_blocks
    s, n, t = 200, 1000, 0.05
    vals = [simulate_nested(NestedConfig(s, n, 0.0, seed=3, t_max=t, stream_index=r)).N_at(t) / s
            for r in range(100)]
    assert abs(np.mean(vals) / expected_blocks(n, t) - 1) < 0.05
