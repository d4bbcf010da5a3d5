"""The constant gamma = E[W] for the fixed point of ``W = h(U, W1 + W2)``.

Three routes: particle iteration of the transport map, a sandwich estimator
on finite binary trees with shared uniforms, and closed-form bounds.

``+inf`` is encoded as the IEEE infinity inside particle arrays; ``h``
treats it analytically (``h(u, inf) = 2 / (1 - u)``), so no arithmetic is
ever performed on an infinite value.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .rng import RngStream, as_generator, open_uniform
from .special import lambert_w_m1

CONTRACTION = 2.0 * (1.0 - math.log(2.0))
MAX_DEPTH = 30


class NonConvergenceError(RuntimeError):
    def __init__(self, message, distances):
        super().__init__(message)
        self.distances = list(distances)


def h_merge(u, x):
    """``2 / ((1 - u) + 2u/x)`` for ``u`` in [0, 1) and ``x`` in [2, inf]."""
    scalar = np.ndim(u) == 0 and np.ndim(x) == 0
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(~(u >= 0.0)) or np.any(u >= 1.0):
        raise ValueError("h_merge needs 0 <= u < 1")
    if np.any(~(x >= 2.0)):
        raise ValueError("h_merge needs x >= 2")
    inf = np.isinf(x)
    ratio = np.divide(2.0 * u, x, out=np.zeros(np.broadcast(u, x).shape), where=~inf)
    out = 2.0 / ((1.0 - u) + ratio)
    return float(out) if scalar else out


@njit(cache=True)
def _h(u, x):
    return 2.0 / ((1.0 - u) + 2.0 * u / x)


@dataclass
class EmpiricalDistribution:
    """Equal-weight particles on [2, inf], kept sorted."""

    particles: np.ndarray

    def __post_init__(self):
        p = np.sort(np.asarray(self.particles, dtype=float))
        if p.size == 0:
            raise ValueError("need at least one particle")
        if np.any(~(p >= 2.0)):
            raise ValueError("particles must lie in [2, inf]")
        self.particles = p

    @classmethod
    def delta(cls, value: float, count: int) -> "EmpiricalDistribution":
        return cls(np.full(count, float(value)))

    @property
    def count(self) -> int:
        return int(self.particles.size)

    @property
    def has_infinity(self) -> bool:
        return bool(np.isinf(self.particles[-1]))

    def mean(self) -> float:
        if self.has_infinity:
            return math.inf
        return math.fsum(self.particles) / self.count

    def to_csv(self, path=None) -> str:
        text = "w\n" + "".join(f"{x:.17g}\n" for x in self.particles)
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text


def apply_T(mu: EmpiricalDistribution, out_count: int, rng) -> EmpiricalDistribution:
    """One resampled application of the transport map.

    Draws indices for ``W1`` then ``W2`` (with replacement), then ``U``.
    """
    if out_count < 1:
        raise ValueError("out_count must be >= 1")
    gen = as_generator(rng)
    i1 = gen.integers(0, mu.count, out_count)
    i2 = gen.integers(0, mu.count, out_count)
    u = open_uniform(gen, out_count)
    return EmpiricalDistribution(h_merge(u, mu.particles[i1] + mu.particles[i2]))


def wasserstein1(a: EmpiricalDistribution, b: EmpiricalDistribution) -> float:
    """Wasserstein-1 distance between equal-size samples (sorted matching)."""
    if a.count != b.count:
        raise ValueError(f"particle counts differ ({a.count} vs {b.count})")
    if a.has_infinity or b.has_infinity:
        raise ValueError("wasserstein1 needs finite particles")
    return math.fsum(np.abs(a.particles - b.particles)) / a.count


@dataclass
class FixedPointResult:
    final: EmpiricalDistribution
    gamma_hat: float
    distance_sequence: list
    iterations: int
    init: str
    stopped_by: str
    plateau_level: float
    decay_ratio: float
    means: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": "rde",
            "init": self.init,
            "gamma_hat": self.gamma_hat,
            "iterations": self.iterations,
            "stopped_by": self.stopped_by,
            "plateau_level": self.plateau_level,
            "decay_ratio": self.decay_ratio,
            "particles": self.final.count,
            "distance_sequence": list(self.distance_sequence),
            "means": list(self.means),
        }


def observed_decay_ratio(distances, floor: float, margin: float = 3.0) -> float:
    """Geometric-mean ratio of successive distances while above ``margin * floor``."""
    d = [x for x in distances]
    ratios = []
    for a, b in zip(d, d[1:]):
        if b <= margin * floor:
            break
        ratios.append(b / a)
    if not ratios:
        return math.nan
    return math.exp(math.fsum(math.log(r) for r in ratios) / len(ratios))


def iterate_to_fixed_point(particle_count: int, tol: float = 1e-3, max_iter: int = 200,
                           init="delta2", rng=0, patience: int = 3) -> FixedPointResult:
    """Iterate the transport map on a particle cloud until it stops moving.

    Stops when the distance between successive iterates drops to ``tol``, or
    when ``patience`` successive distances fail to improve on the best so far
    (the Monte Carlo noise floor).  ``init`` is ``"delta2"``, ``"deltaInf"``
    or an array of starting particles.  From ``deltaInf`` the first iterate
    is drawn directly as ``2 / (1 - U)``.
    """
    if particle_count < 1000:
        raise ValueError("particle_count must be >= 1000")
    if tol <= 0:
        raise ValueError("tol must be positive")
    gen = as_generator(rng)
    if isinstance(init, str):
        if init == "delta2":
            current = EmpiricalDistribution.delta(2.0, particle_count)
        elif init == "deltaInf":
            current = EmpiricalDistribution(2.0 / (1.0 - open_uniform(gen, particle_count)))
        else:
            raise ValueError(f"unknown init {init!r}")
        label = init
    else:
        current = EmpiricalDistribution(init)
        if current.has_infinity:
            current = apply_T(current, particle_count, gen)
        label = "custom"
    distances, means = [], []
    best = math.inf
    stale = 0
    for it in range(1, max_iter + 1):
        nxt = apply_T(current, particle_count, gen)
        d = wasserstein1(current, nxt)
        distances.append(d)
        current = nxt
        means.append(current.mean())
        if d <= tol:
            return _finish(current, distances, means, it, label, "tolerance", d)
        if d < best:
            best, stale = d, 0
        else:
            stale += 1
            if stale >= patience:
                floor = float(np.median(distances[-(patience + 1):]))
                return _finish(current, distances, means, it, label, "plateau", floor)
    raise NonConvergenceError(
        f"no convergence after {max_iter} iterations (last distance {distances[-1]:.3g})",
        distances)


def _finish(current, distances, means, it, label, how, floor):
    return FixedPointResult(
        final=current,
        gamma_hat=current.mean(),
        distance_sequence=distances,
        iterations=it,
        init=label,
        stopped_by=how,
        plateau_level=floor,
        decay_ratio=observed_decay_ratio(distances, floor),
        means=means,
    )


# ---------------------------------------------------------------- sandwich

@dataclass(frozen=True)
class SandwichPair:
    w_lower: float
    w_upper: float


@njit(cache=True)
def _sandwich_eval(us, lo, hi):
    # heap layout: node i has children 2i+1, 2i+2; nodes >= len(us) are leaves
    n_int = us.shape[0]
    for i in range(n_int - 1, -1, -1):
        u = us[i]
        c = 2 * i + 1
        if c >= n_int:
            lo[i] = _h(u, 4.0)
            hi[i] = 2.0 / (1.0 - u)
        else:
            lo[i] = _h(u, lo[c] + lo[c + 1])
            hi[i] = _h(u, hi[c] + hi[c + 1])
    return lo[0], hi[0]


def _check_depth(depth: int):
    if depth < 0 or depth > MAX_DEPTH:
        raise ValueError(f"depth must be in 0..{MAX_DEPTH}")


def tree_uniforms(depth: int, rng) -> np.ndarray:
    """Uniforms for the ``2**depth - 1`` internal nodes, root first (heap order)."""
    return open_uniform(as_generator(rng), (1 << depth) - 1)


def sandwich_from_uniforms(us: np.ndarray, leaf_lower=None) -> SandwichPair:
    """Evaluate a tree given its uniforms.

    ``leaf_lower`` optionally replaces the all-2 lower leaves with custom
    leaf values (used for monotonicity checks); the upper leaves stay +inf.
    """
    n_int = us.shape[0]
    if n_int == 0:
        return SandwichPair(2.0, math.inf)
    if leaf_lower is None:
        lo, hi = _sandwich_eval(us, np.empty(n_int), np.empty(n_int))
        return SandwichPair(float(lo), float(hi))
    leaves = np.asarray(leaf_lower, dtype=float)
    if leaves.size != n_int + 1:
        raise ValueError("need one value per leaf")
    vals = np.concatenate((np.empty(n_int), leaves))
    for i in range(n_int - 1, -1, -1):
        vals[i] = h_merge(us[i], vals[2 * i + 1] + vals[2 * i + 2])
    lo, hi = _sandwich_eval(us, np.empty(n_int), np.empty(n_int))
    return SandwichPair(float(vals[0]), float(hi))


def sandwich_replicate(depth: int, rng) -> SandwichPair:
    """One recursive-tree replicate: leaves all 2 (lower) and all +inf (upper)."""
    _check_depth(depth)
    if depth == 0:
        return SandwichPair(2.0, math.inf)
    return sandwich_from_uniforms(tree_uniforms(depth, rng))


def _replicate_block(depth: int, seed: int, start: int, stop: int):
    lo = np.empty(stop - start)
    hi = np.empty(stop - start)
    n_int = (1 << depth) - 1
    buf_lo = np.empty(n_int)
    buf_hi = np.empty(n_int)
    for r in range(start, stop):
        us = open_uniform(RngStream(seed, r).generator(), n_int)
        lo[r - start], hi[r - start] = _sandwich_eval(us, buf_lo, buf_hi)
    return lo, hi


def sandwich_samples(depth: int, replicates: int, seed: int, workers: int = 1):
    """Per-replicate ``(w_lower, w_upper)`` arrays in replicate order.

    Replicate ``r`` always uses stream ``(seed, r)``, so the arrays do not
    depend on ``workers``.
    """
    _check_depth(depth)
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if depth == 0:
        return np.full(replicates, 2.0), np.full(replicates, math.inf)
    workers = max(1, int(workers))
    if workers == 1 or replicates < 2 * workers:
        return _replicate_block(depth, seed, 0, replicates)
    edges = np.linspace(0, replicates, workers + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(_replicate_block, depth, seed, int(a), int(b))
                for a, b in zip(edges[:-1], edges[1:])]
        parts = [f.result() for f in futs]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


@dataclass(frozen=True)
class GammaEstimate:
    mean_lower: float
    mean_upper: float
    stderr: float
    ci95: tuple
    depth: int
    replicates: int
    seed: int = 0
    ordered: bool = True

    def to_dict(self) -> dict:
        return {
            "mean_lower": self.mean_lower,
            "mean_upper": self.mean_upper,
            "stderr": self.stderr,
            "ci95_lo": self.ci95[0],
            "ci95_hi": self.ci95[1],
            "depth": self.depth,
            "replicates": self.replicates,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=True)


def _fsum_mean(x) -> float:
    return math.fsum(x) / len(x)


def estimate_gamma(depth: int, replicates: int, seed: int = 0, workers: int = 1) -> GammaEstimate:
    """Sandwich estimate of gamma from ``replicates`` independent trees.

    Means use exactly rounded summation so that the result is bit-identical
    for any ``workers``.
    """
    lo, hi = sandwich_samples(depth, replicates, seed, workers)
    mean_lower = _fsum_mean(lo)
    mean_upper = math.inf if np.isinf(hi).any() else _fsum_mean(hi)
    if replicates > 1:
        var = math.fsum((lo - mean_lower) ** 2) / (replicates - 1)
        stderr = math.sqrt(var / replicates)
    else:
        stderr = 0.0
    return GammaEstimate(
        mean_lower=mean_lower,
        mean_upper=mean_upper,
        stderr=stderr,
        ci95=(mean_lower - 2.0 * stderr, mean_upper + 2.0 * stderr),
        depth=depth,
        replicates=replicates,
        seed=seed,
        ordered=bool(np.all(lo <= hi)),
    )


# ---------------------------------------------------------------- closed forms

def _mean_given_sum(x: float) -> float:
    # integral over u of h(u, x), written 2 log(a) / (a - 1) with a = 2/x
    if x == 2.0:
        return 2.0
    if math.isinf(x):
        return math.inf
    am1 = (2.0 - x) / x
    return 2.0 * math.log1p(am1) / am1


def conditional_mean_w(w1: float, w2: float) -> float:
    """``E[W | W1 = w1, W2 = w2]`` after integrating out the uniform."""
    if not (w1 >= 2.0 and w2 >= 2.0):
        raise ValueError("conditional_mean_w needs w1, w2 >= 2")
    return _mean_given_sum(w1 + w2)


def jensen_residual(g: float) -> float:
    """``g - (2/(1/g - 1)) log(1/g)``; zero at the Jensen upper bound."""
    return g - 2.0 / (1.0 / g - 1.0) * math.log(1.0 / g)


def gamma_analytic_bounds() -> tuple:
    """``(4 log 2, -2 W_{-1}(-1/(2 sqrt(e))))``."""
    lower = 4.0 * math.log(2.0)
    upper = -2.0 * lambert_w_m1(-0.5 / math.sqrt(math.e))
    return lower, upper
