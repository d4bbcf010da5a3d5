"""Reproducible random streams.

Every stream is a PCG64 generator seeded from
``SeedSequence(entropy=seed, spawn_key=(stream_index,))``.  This is numpy's
documented splitting scheme: the spawn key is hashed into the initial state,
so distinct indices give statistically independent streams while the same
``(seed, stream_index)`` always reproduces the same draws.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_index: int = 0

    def __post_init__(self):
        if self.stream_index < 0:
            raise ValueError("stream_index must be non-negative")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed & SEED_MASK, spawn_key=(self.stream_index,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> "RngStream":
        """Stream for replicate ``index`` under the same seed."""
        return RngStream(self.seed, index)


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream, a Generator, or an int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator()
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


def open_uniform(gen: np.random.Generator, size=None):
    """Uniform draws on the open interval (0, 1); exact zeros are redrawn."""
    if size is None:
        u = gen.random()
        while u == 0.0:
            u = gen.random()
        return u
    u = gen.random(size)
    bad = u == 0.0
    while bad.any():
        u[bad] = gen.random(int(bad.sum()))
        bad = u == 0.0
    return u
