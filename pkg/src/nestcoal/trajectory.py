"""Right-continuous step trajectories of (time, species count, lineage count)."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ALL_EVENTS = "all-events"
GEOMETRIC = "geometric-time-grid"
EVERY_KTH = "every-kth"


@dataclass(frozen=True)
class Decimation:
    """Which points of a run are retained.

    ``geometric-time-grid`` keeps an event when its time is at least
    ``ratio`` times that of the previously kept point, so kept points are
    spaced geometrically in time.  ``every-kth`` keeps every ``k``-th event.
    Both always keep species mergers, absorption and the stop time.
    """

    kind: str = GEOMETRIC
    ratio: float = 1.02
    k: int = 1

    def __post_init__(self):
        if self.kind not in (ALL_EVENTS, GEOMETRIC, EVERY_KTH):
            raise ValueError(f"unknown decimation policy {self.kind!r}")
        if self.kind == GEOMETRIC and not self.ratio > 1.0:
            raise ValueError("geometric grid needs ratio > 1")
        if self.kind == EVERY_KTH and self.k < 1:
            raise ValueError("every-kth needs k >= 1")

    @classmethod
    def parse(cls, text: str) -> "Decimation":
        """Parse ``all-events``, ``geometric[:ratio]`` or ``every-kth:k``."""
        name, _, arg = text.partition(":")
        name = name.strip().lower()
        if name in ("all", ALL_EVENTS):
            return cls(ALL_EVENTS)
        if name in ("geometric", GEOMETRIC):
            return cls(GEOMETRIC, ratio=float(arg) if arg else 1.02)
        if name in ("every", EVERY_KTH):
            if not arg:
                raise ValueError("every-kth needs a step, e.g. every-kth:100")
            return cls(EVERY_KTH, k=int(arg))
        raise ValueError(f"unknown decimation policy {text!r}")

    def describe(self) -> str:
        if self.kind == GEOMETRIC:
            return f"{GEOMETRIC}:{self.ratio!r}"
        if self.kind == EVERY_KTH:
            return f"{EVERY_KTH}:{self.k}"
        return ALL_EVENTS

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ratio": self.ratio, "k": self.k}


@dataclass
class Trajectory:
    times: np.ndarray
    S: np.ndarray
    N: np.ndarray
    decimation: Decimation = field(default_factory=Decimation)
    lineage_merges: int = 0
    species_merges: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.S = np.asarray(self.S, dtype=np.int64)
        self.N = np.asarray(self.N, dtype=np.int64)
        if not (len(self.times) == len(self.S) == len(self.N)) or len(self.times) == 0:
            raise ValueError("trajectory columns must be non-empty and equally long")

    def __len__(self):
        return len(self.times)

    @property
    def terminal(self):
        return float(self.times[-1]), int(self.S[-1]), int(self.N[-1])

    @property
    def terminal_time(self) -> float:
        return float(self.times[-1])

    def validate(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(np.diff(self.S) > 0) or np.any(np.diff(self.N) > 0):
            raise ValueError("S and N must be non-increasing")
        if np.any(self.N < self.S) or np.any(self.S < 1):
            raise ValueError("need N >= S >= 1")

    def N_at(self, t) -> np.ndarray:
        return self.N[self._index(t)]

    def S_at(self, t) -> np.ndarray:
        return self.S[self._index(t)]

    def _index(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0]) or np.any(t > self.times[-1]):
            raise ValueError(
                f"query outside trajectory range [{self.times[0]}, {self.times[-1]}]")
        return np.searchsorted(self.times, t, side="right") - 1

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("t,S,N\n")
        for t, s, n in zip(self.times, self.S, self.N):
            buf.write(f"{format_float(t)},{int(s)},{int(n)}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="\n")
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "Trajectory":
        text = path_or_text
        if isinstance(path_or_text, Path) or "\n" not in str(path_or_text):
            text = Path(path_or_text).read_text(encoding="utf-8")
        lines = text.strip().splitlines()
        if lines[0].strip() != "t,S,N":
            raise ValueError("expected header t,S,N")
        rows = [ln.split(",") for ln in lines[1:]]
        return cls(
            times=np.array([float(r[0]) for r in rows]),
            S=np.array([int(r[1]) for r in rows]),
            N=np.array([int(r[2]) for r in rows]),
            decimation=Decimation(ALL_EVENTS),
        )


def format_float(x: float) -> str:
    """17 significant digits: enough for an exact round trip."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def sample_counts_at(traj: Trajectory, times) -> list:
    """Step-function values ``(S, N)`` at each query time."""
    idx = traj._index(times)
    return [(int(traj.S[i]), int(traj.N[i])) for i in np.atleast_1d(idx)]
