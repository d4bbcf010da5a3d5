"""Exact event-driven simulation of the nested Kingman coalescent.

Each extant species holds a lineage count.  Lineages within a species merge
pairwise at rate 1 and species merge pairwise at rate ``c``; a species merger
pools the two lineage counts.

Live species occupy the dense prefix ``counts[:S]`` (a merged-away species is
replaced by the last live one).  A Fenwick tree over the integer weights
``n_i (n_i - 1)`` picks the species for a lineage merger in O(log S).  The
weights are integers, so the cached rate total is exact and no floating-point
fix-up is needed at bucket boundaries.

Draw order per event is fixed: holding time, then event category, then
target (species, or the two species of a pair).
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .rng import RngStream, as_generator
from .trajectory import ALL_EVENTS, EVERY_KTH, GEOMETRIC, Decimation, Trajectory

LINEAGE_MERGE = 0
SPECIES_MERGE = 1

MAX_RATE_PRODUCT = 1e15
AUDIT_EVERY = 1_000_000

# integer state slots
_S, _N, _W, _NLIN, _NSP, _OBS, _NEV, _PEND = range(8)
# float state slots: current time, next geometric mark, pending event time
_T, _GRID, _TNEW = range(3)

_KIND_CODE = {ALL_EVENTS: 0, GEOMETRIC: 1, EVERY_KTH: 2}


class AbsorbedError(RuntimeError):
    """Raised when stepping a state that has a single lineage left."""


@dataclass
class NestedConfig:
    s: int
    n: int
    c: float
    seed: int = 0
    t_max: float | None = None
    decimation: Decimation = field(default_factory=Decimation)
    observe: tuple = ()
    stream_index: int = 0

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise ValueError("species: initial species count must be an integer >= 1")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("lineages: lineages per species must be an integer >= 1")
        if not (self.c >= 0 and math.isfinite(self.c)):
            raise ValueError("rate_c: species merge rate must be finite and >= 0")
        if self.t_max is not None and not self.t_max > 0:
            raise ValueError("t_max: must be positive (or None to run to absorption)")
        if self.s * float(self.n) ** 2 / 2 > MAX_RATE_PRODUCT:
            raise ValueError("lineages: s*n^2/2 exceeds 1e15, rates would lose precision")
        self.s, self.n = int(self.s), int(self.n)
        self.observe = tuple(sorted(float(t) for t in self.observe))

    @property
    def to_absorption(self) -> bool:
        return self.t_max is None

    def rng(self) -> RngStream:
        return RngStream(self.seed, self.stream_index)

    def to_dict(self) -> dict:
        return {
            "species": self.s,
            "lineages": self.n,
            "rate_c": self.c,
            "seed": self.seed,
            "stream_index": self.stream_index,
            "t_max": self.t_max,
            "to_absorption": self.to_absorption,
            "decimate": self.decimation.describe(),
            "observe": list(self.observe),
        }


# ---------------------------------------------------------------- kernels

@njit(cache=True)
def _fw_add(tree, i, delta):
    cap = tree.shape[0] - 1
    j = i + 1
    while j <= cap:
        tree[j] += delta
        j += j & (-j)


@njit(cache=True)
def _fw_find(tree, target):
    # 0-based index of the first slot whose prefix sum exceeds target
    cap = tree.shape[0] - 1
    pos = 0
    step = 1
    while step * 2 <= cap:
        step *= 2
    while step > 0:
        nxt = pos + step
        if nxt <= cap and tree[nxt] <= target:
            pos = nxt
            target -= tree[nxt]
        step //= 2
    return pos


@njit(cache=True)
def _fw_build(weights):
    cap = weights.shape[0]
    tree = np.zeros(cap + 1, dtype=np.int64)
    for i in range(cap):
        j = i + 1
        tree[j] += weights[i]
        p = j + (j & (-j))
        if p <= cap:
            tree[p] += tree[j]
    return tree


@njit(cache=True)
def _open_uniform(gen):
    u = gen.random()
    while u == 0.0:
        u = gen.random()
    return u


@njit(cache=True)
def _total_rate(ist, c):
    S = ist[_S]
    return ist[_W] / 2.0 + c * S * (S - 1) / 2.0


@njit(cache=True)
def _draw_holding(ist, c, gen):
    return -math.log(_open_uniform(gen)) / _total_rate(ist, c)


@njit(cache=True)
def _pick_species(tree, total, gen):
    return _fw_find(tree, gen.integers(0, total))


@njit(cache=True)
def _apply_event(counts, tree, ist, c, gen):
    """Choose and apply one transition.  Returns (kind, i, j)."""
    S = ist[_S]
    lin = ist[_W] / 2.0
    sp = c * S * (S - 1) / 2.0
    if sp == 0.0:
        is_lineage = True
    elif lin == 0.0:
        is_lineage = False
    else:
        is_lineage = _open_uniform(gen) * (lin + sp) < lin
    if is_lineage:
        i = _pick_species(tree, ist[_W], gen)
        k = counts[i]
        _fw_add(tree, i, -2 * (k - 1))
        counts[i] = k - 1
        ist[_N] -= 1
        ist[_W] -= 2 * (k - 1)
        ist[_NLIN] += 1
        return LINEAGE_MERGE, i, -1
    i = gen.integers(0, S)
    j = gen.integers(0, S - 1)
    if j >= i:
        j += 1
    a = min(i, j)
    b = max(i, j)
    na = counts[a]
    nb = counts[b]
    merged = na + nb
    dw = merged * (merged - 1) - na * (na - 1)
    _fw_add(tree, a, dw)
    counts[a] = merged
    wb = nb * (nb - 1)
    last = S - 1
    if b != last:
        nl = counts[last]
        wl = nl * (nl - 1)
        _fw_add(tree, b, wl - wb)
        _fw_add(tree, last, -wl)
        counts[b] = nl
    else:
        _fw_add(tree, b, -wb)
    counts[last] = 0
    ist[_S] -= 1
    ist[_W] += dw - wb
    ist[_NSP] += 1
    return SPECIES_MERGE, a, b


@njit(cache=True)
def _audit(counts, tree, ist):
    S = ist[_S]
    w = 0
    nsum = 0
    for i in range(S):
        w += counts[i] * (counts[i] - 1)
        nsum += counts[i]
    cap = tree.shape[0] - 1
    total = 0
    j = cap
    while j > 0:
        total += tree[j]
        j -= j & (-j)
    return w == ist[_W] and total == ist[_W] and nsum == ist[_N]


@njit(cache=True)
def _record(out_t, out_S, out_N, pos, t, S, N):
    if pos > 0 and out_t[pos - 1] == t:
        pos -= 1
    out_t[pos] = t
    out_S[pos] = S
    out_N[pos] = N
    return pos + 1


@njit(cache=True)
def _run(counts, tree, ist, fst, c, gen, t_max, kind, ratio, every_k, obs,
         out_t, out_S, out_N, audit_every):
    """Advance until absorption, ``t_max`` or a full buffer.

    Returns ``(rows_written, status)``: 0 finished, 1 buffer full (call
    again), 2 failed audit.  Buffer exhaustion never discards a draw, so
    output does not depend on buffer size.
    """
    pos = 0
    cap = out_t.shape[0]
    n_obs = obs.shape[0]
    while True:
        if _total_rate(ist, c) == 0.0:
            # one lineage left, or c = 0 with every species down to one lineage
            if t_max == np.inf:
                return pos, 0
            # absorbed early: hold the final state out to t_max
            t_new = np.inf
        else:
            if ist[_PEND] == 0:
                fst[_TNEW] = fst[_T] + _draw_holding(ist, c, gen)
                ist[_PEND] = 1
            t_new = fst[_TNEW]
        # observation times strictly before the next event see the current state
        while ist[_OBS] < n_obs:
            o = obs[ist[_OBS]]
            if o >= t_new or o > t_max:
                break
            if pos >= cap:
                return pos, 1
            pos = _record(out_t, out_S, out_N, pos, o, ist[_S], ist[_N])
            ist[_OBS] += 1
        if pos + 1 >= cap:
            return pos, 1
        if t_new > t_max:
            pos = _record(out_t, out_S, out_N, pos, t_max, ist[_S], ist[_N])
            fst[_T] = t_max
            return pos, 0
        ev, _, _ = _apply_event(counts, tree, ist, c, gen)
        ist[_PEND] = 0
        fst[_T] = t_new
        ist[_NEV] += 1
        if (kind == 0 or ev == SPECIES_MERGE or _total_rate(ist, c) == 0.0
                or (kind == 1 and t_new >= fst[_GRID])
                or (kind == 2 and ist[_NEV] % every_k == 0)):
            pos = _record(out_t, out_S, out_N, pos, t_new, ist[_S], ist[_N])
            fst[_GRID] = t_new * ratio
        if audit_every > 0 and ist[_NEV] % audit_every == 0:
            if not _audit(counts, tree, ist):
                return pos, 2


# ---------------------------------------------------------------- state API

@dataclass
class EventRecord:
    kind: int
    species: tuple
    dt: float

    @property
    def is_species_merge(self) -> bool:
        return self.kind == SPECIES_MERGE


class SpeciesState:
    """Live lineage counts per species with cached rate aggregates."""

    def __init__(self, counts, time: float = 0.0):
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size == 0 or np.any(counts < 1):
            raise ValueError("counts must be a non-empty list of positive integers")
        self.counts = counts.copy()
        self.weight_index = _fw_build(self.counts * (self.counts - 1))
        self._ist = np.zeros(8, dtype=np.int64)
        self._ist[_S] = counts.size
        self._ist[_N] = int(counts.sum())
        self._ist[_W] = int(np.sum(counts * (counts - 1)))
        self.time = float(time)

    @classmethod
    def uniform(cls, s: int, n: int) -> "SpeciesState":
        return cls(np.full(s, n, dtype=np.int64))

    @property
    def S(self) -> int:
        return int(self._ist[_S])

    @property
    def N(self) -> int:
        return int(self._ist[_N])

    @property
    def lineage_rate_total(self) -> float:
        return self._ist[_W] / 2.0

    @property
    def live_counts(self) -> np.ndarray:
        return self.counts[: self.S]

    @property
    def lineage_merges(self) -> int:
        return int(self._ist[_NLIN])

    @property
    def species_merges(self) -> int:
        return int(self._ist[_NSP])

    def recompute_lineage_rate(self) -> float:
        live = self.live_counts
        return float(np.sum(live * (live - 1))) / 2.0

    def check(self):
        if not _audit(self.counts, self.weight_index, self._ist):
            raise AssertionError("cached rate aggregates disagree with the counts")
        if self.N < self.S or np.any(self.live_counts < 1):
            raise AssertionError("state invariant N >= S >= 1 violated")

    def sample_species(self, rng) -> int:
        """Species index drawn with probability proportional to n_i (n_i - 1)."""
        if self._ist[_W] == 0:
            raise ValueError("no species holds two lineages")
        return int(_pick_species(self.weight_index, self._ist[_W], as_generator(rng)))


def total_rates(state, c: float):
    """``(lineage, species)`` total event rates of a state or list of counts."""
    if not isinstance(state, SpeciesState):
        state = SpeciesState(state)
    S = state.S
    return state.lineage_rate_total, c * S * (S - 1) / 2.0


def nested_step(state: SpeciesState, c: float, rng) -> EventRecord:
    """Apply one transition to ``state`` in place."""
    if state.N <= 1 or _total_rate(state._ist, float(c)) == 0.0:
        raise AbsorbedError("state is absorbed (total event rate is zero)")
    gen = as_generator(rng)
    dt = float(_draw_holding(state._ist, float(c), gen))
    kind, i, j = _apply_event(state.counts, state.weight_index, state._ist, float(c), gen)
    state.time += dt
    species = (int(i),) if kind == LINEAGE_MERGE else (int(i), int(j))
    return EventRecord(int(kind), species, dt)


# ---------------------------------------------------------------- driver

def _chunk_size(cfg: NestedConfig) -> int:
    d = cfg.decimation
    events = cfg.s * cfg.n + cfg.s
    if d.kind == ALL_EVENTS:
        est = events
    elif d.kind == EVERY_KTH:
        est = events // d.k + cfg.s
    else:
        # one kept event per factor `ratio` in time, over ~30 decades at most
        est = int(30 * math.log(10.0) / math.log(d.ratio)) + cfg.s
    return max(1024, min(est + len(cfg.observe) + 4, 1 << 22))


def simulate_nested(cfg: NestedConfig, progress: bool = False) -> Trajectory:
    """Run the nested coalescent described by ``cfg``.

    Stops at ``cfg.t_max`` (recording the state there) or at absorption (no event possible)
    into a single lineage.  Identical configs give identical trajectories.
    """
    gen = cfg.rng().generator()
    state = SpeciesState.uniform(cfg.s, cfg.n)
    ist = state._ist
    d = cfg.decimation
    fst = np.array([0.0, 0.0, 0.0])
    obs = np.array([t for t in cfg.observe if t > 0], dtype=float)
    t_max = math.inf if cfg.t_max is None else float(cfg.t_max)
    chunk = _chunk_size(cfg)
    parts_t, parts_S, parts_N = [np.array([0.0])], [np.array([cfg.s])], [np.array([cfg.s * cfg.n])]
    while True:
        out_t = np.empty(chunk)
        out_S = np.empty(chunk, dtype=np.int64)
        out_N = np.empty(chunk, dtype=np.int64)
        pos, status = _run(state.counts, state.weight_index, ist, fst, float(cfg.c), gen,
                           t_max, _KIND_CODE[d.kind], float(d.ratio), int(d.k), obs,
                           out_t, out_S, out_N, AUDIT_EVERY)
        parts_t.append(out_t[:pos])
        parts_S.append(out_S[:pos])
        parts_N.append(out_N[:pos])
        if status == 2:
            raise RuntimeError("rate cache audit failed")
        if progress:
            print(f"\r{int(ist[_NEV])} events, t={fst[_T]:.6g}", end="", file=sys.stderr)
        if status == 0:
            break
    if progress:
        print(file=sys.stderr)
    times = np.concatenate(parts_t)
    S = np.concatenate(parts_S)
    N = np.concatenate(parts_N)
    keep = np.concatenate((times[1:] != times[:-1], [True]))
    return Trajectory(times[keep], S[keep], N[keep], decimation=d,
                      lineage_merges=int(ist[_NLIN]), species_merges=int(ist[_NSP]))
