"""Block-counting process of Kingman's coalescent.

Only the number of blocks is tracked.  With ``k`` blocks every pair merges at
rate ``rate_scale``, so the total jump rate is ``rate_scale * k(k-1)/2`` and
holding times are drawn by inverse CDF, ``-log(U) / rate`` with ``U`` on the
open unit interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .rng import as_generator


def pair_merge_rate(k: int, rate_scale: float = 1.0) -> float:
    if k < 0:
        raise ValueError("block count must be non-negative")
    return rate_scale * k * (k - 1) / 2.0


def expected_blocks(n: int, t: float) -> float:
    """Deterministic approximation ``2 / (t + 2/n)`` to ``E[K_n(t)]``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    return 2.0 / (t + 2.0 / n)


@njit(cache=True)
def _exp_draw(gen, rate):
    u = gen.random()
    while u == 0.0:
        u = gen.random()
    return -math.log(u) / rate


@njit(cache=True)
def _block_count_kernel(n, t, scale, gen):
    k = n
    elapsed = 0.0
    while k > 1:
        elapsed += _exp_draw(gen, scale * k * (k - 1) / 2.0)
        if elapsed > t:
            break
        k -= 1
    return k


@njit(cache=True)
def _block_counts_kernel(n, t, scale, gen, out):
    for i in range(out.shape[0]):
        out[i] = _block_count_kernel(n, t, scale, gen)


@njit(cache=True)
def _event_times_kernel(n, scale, gen):
    # times[j] is the time at which the count drops from n - j to n - j - 1
    times = np.empty(n - 1)
    elapsed = 0.0
    for j in range(n - 1):
        k = n - j
        elapsed += _exp_draw(gen, scale * k * (k - 1) / 2.0)
        times[j] = elapsed
    return times


def sample_block_count(n: int, t: float, rng, rate_scale: float = 1.0) -> int:
    """One exact draw of ``K_n(t)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    if n == 1 or t == 0:
        return n
    return int(_block_count_kernel(n, float(t), float(rate_scale), as_generator(rng)))


def sample_block_counts(n: int, t: float, rng, size: int, rate_scale: float = 1.0) -> np.ndarray:
    """``size`` independent draws of ``K_n(t)`` from a single stream."""
    if n < 1 or t < 0:
        raise ValueError("need n >= 1 and t >= 0")
    out = np.empty(size, dtype=np.int64)
    if n == 1 or t == 0:
        out[:] = n
        return out
    _block_counts_kernel(n, float(t), float(rate_scale), as_generator(rng), out)
    return out


@dataclass
class HittingTimes:
    """``tau[m]``: first time the process holds exactly ``m`` blocks."""

    source: int
    levels: np.ndarray
    times: np.ndarray
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self._index = {int(m): i for i, m in enumerate(self.levels)}

    def __getitem__(self, m: int) -> float:
        try:
            return float(self.times[self._index[int(m)]])
        except KeyError:
            raise KeyError(f"level {m} not recorded") from None

    def __contains__(self, m) -> bool:
        return int(m) in self._index

    def __len__(self):
        return len(self.levels)

    def as_dict(self) -> dict:
        return {int(m): float(t) for m, t in zip(self.levels, self.times)}


@dataclass
class BlockTrajectory:
    """Full event list of a single-level block-counting process.

    ``times[0] == 0`` holds the start; each later entry is a merge event and
    ``counts`` drops by exactly one at each.
    """

    times: np.ndarray
    counts: np.ndarray
    rate_scale: float = 1.0

    @property
    def n_events(self) -> int:
        return len(self.times) - 1

    def value_at(self, t: float) -> int:
        i = np.searchsorted(self.times, t, side="right") - 1
        return int(self.counts[i])


def simulate_block_trajectory(n: int, rng, rate_scale: float = 1.0, levels=None):
    """Run the block-counting process from ``n`` blocks down to one.

    Returns ``(BlockTrajectory, HittingTimes)``.  Hitting times cover every
    level ``1..n`` unless ``levels`` restricts them.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    event_times = _event_times_kernel(n, float(rate_scale), as_generator(rng))
    times = np.concatenate(([0.0], event_times))
    counts = np.arange(n, 0, -1, dtype=np.int64)
    traj = BlockTrajectory(times=times, counts=counts, rate_scale=rate_scale)
    if levels is None:
        hit = HittingTimes(source=n, levels=counts, times=times)
    else:
        lv = np.array(sorted({int(m) for m in levels}, reverse=True), dtype=np.int64)
        if lv.size and (lv[0] > n or lv[-1] < 1):
            raise ValueError("levels must lie in 1..n")
        hit = HittingTimes(source=n, levels=lv, times=times[n - lv])
    return traj, hit


def hitting_times_from_steps(times, counts) -> HittingTimes:
    """Hitting times of a step trajectory that keeps every jump of ``counts``."""
    times = np.asarray(times, dtype=float)
    counts = np.asarray(counts, dtype=np.int64)
    keep = np.concatenate(([True], np.diff(counts) != 0))
    t, k = times[keep], counts[keep]
    if np.any(np.diff(k) != -1):
        raise ValueError("trajectory skips levels; every jump must be retained and of size one")
    return HittingTimes(source=int(k[0]), levels=k, times=t)


@dataclass
class YuleReport:
    m: int
    c: float
    levels: np.ndarray
    normalized: np.ndarray
    mean: float
    ks_distance: float
    mean_sigmas: float = 3.0
    ks_coefficient: float = 1.95

    @property
    def count(self) -> int:
        return int(self.normalized.size)

    @property
    def stderr(self) -> float:
        # Exp(1) has unit variance
        return 1.0 / math.sqrt(self.count) if self.count else math.nan

    @property
    def mean_ok(self) -> bool:
        return self.count > 0 and abs(self.mean - 1.0) <= self.mean_sigmas * self.stderr

    @property
    def ks_ok(self) -> bool:
        return self.count > 0 and self.ks_distance <= self.ks_coefficient / math.sqrt(self.count)

    @property
    def passed(self) -> bool:
        return self.mean_ok and self.ks_ok


def ks_distance_exp1(x) -> float:
    """Largest gap between the empirical CDF of ``x`` and the Exp(1) CDF."""
    x = np.sort(np.asarray(x, dtype=float))
    n = x.size
    if n == 0:
        return math.nan
    cdf = -np.expm1(-x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def _species_steps(traj):
    if isinstance(traj, BlockTrajectory):
        return traj.times, traj.counts
    # nested Trajectory: species level
    return traj.times, traj.S


def timechange_at_hitting(hit: HittingTimes, m: int, c: float) -> dict:
    """``f_m(tau_k)`` for every recorded ``k >= m``.

    The integrand ``c (S(r) - 1) / 2`` is constant between jumps, so the
    integral is a finite sum over holding intervals.
    """
    if (m - 1) not in hit:
        raise ValueError(f"trajectory never reaches level {m - 1}")
    base = math.log(m * c / 2.0)
    out = {m - 1: base}
    acc = base
    k = m
    while k in hit:
        acc += c * (k - 1) / 2.0 * (hit[k - 1] - hit[k])
        out[k] = acc
        k += 1
    return out


def yule_timechange_statistic(traj, m: int, c: float, mean_sigmas: float = 3.0,
                              ks_coefficient: float = 1.95) -> YuleReport:
    """Normalized Yule holding times ``k * (f_m(tau_k) - f_m(tau_{k-1}))``.

    Covers levels ``m <= k < start``: the top level has no hitting event of
    its own, so a trajectory started at ``m`` gives an empty report.
    """
    if c <= 0:
        raise ValueError("c must be positive")
    if m < 2:
        raise ValueError("m must be >= 2")
    times, counts = _species_steps(traj)
    hit = hitting_times_from_steps(times, counts)
    start = hit.source
    if m > start:
        raise ValueError(f"m={m} exceeds the starting count {start}")
    if m == start:
        empty = np.empty(0)
        return YuleReport(m, c, empty.astype(np.int64), empty, math.nan, math.nan,
                          mean_sigmas, ks_coefficient)
    f = timechange_at_hitting(hit, m, c)
    levels = np.arange(m, start, dtype=np.int64)
    normalized = np.array([k * (f[k] - f[k - 1]) for k in levels])
    return YuleReport(m, c, levels, normalized, float(normalized.mean()),
                      ks_distance_exp1(normalized), mean_sigmas, ks_coefficient)


def pool_yule_reports(reports) -> YuleReport:
    """Pool normalized durations from independent replicates."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to pool")
    first = reports[0]
    levels = np.concatenate([r.levels for r in reports])
    normalized = np.concatenate([r.normalized for r in reports])
    mean = float(normalized.mean()) if normalized.size else math.nan
    return YuleReport(first.m, first.c, levels, normalized, mean, ks_distance_exp1(normalized),
                      first.mean_sigmas, first.ks_coefficient)
