"""Scaling checks on simulated lineage-count trajectories.

All checks sample ``N`` on a geometric grid inside a window and work with
the raw integer counts.  Several trajectories (seeds) can be passed at once;
deviation series are then averaged pointwise before the maximum is taken.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .trajectory import Trajectory

DEFAULT_GRID_POINTS = 25


class WindowError(ValueError):
    pass


class InsufficientSeparation(ValueError):
    pass


@dataclass
class ScalingReport:
    window: tuple
    slope: float
    intercept: float
    r_squared: float
    target_slope: float
    rel_deviation_series: list = field(default_factory=list)
    degenerate: bool = False
    level: float = math.nan
    label: str = ""

    @property
    def max_abs_deviation(self) -> float:
        if not self.rel_deviation_series:
            return math.nan
        return max(abs(d) for _, d in self.rel_deviation_series)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "window": list(self.window),
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "target_slope": self.target_slope,
            "degenerate": self.degenerate,
            "level": self.level,
            "max_abs_deviation": self.max_abs_deviation,
            "rel_deviation_series": [[t, d] for t, d in self.rel_deviation_series],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def geometric_grid(t_lo: float, t_hi: float, points: int) -> np.ndarray:
    if points < 2:
        raise ValueError("need at least two grid points")
    return np.geomspace(t_lo, t_hi, points)


def fit_loglog(t, N):
    """Least-squares line through ``(log t, log N)``.

    Returns ``(slope, intercept, r_squared, degenerate)``; a constant ``N``
    is degenerate and reported as slope 0, r^2 0.
    """
    x = np.log(np.asarray(t, dtype=float))
    y = np.log(np.asarray(N, dtype=float))
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    syy = np.sum((y - ym) ** 2)
    if syy == 0.0:
        return 0.0, float(ym), 0.0, True
    slope = np.sum((x - xm) * (y - ym)) / sxx
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    r2 = 1.0 - np.sum(resid**2) / syy
    return float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)), False


def _as_list(traj):
    if isinstance(traj, Trajectory):
        return [traj]
    trajs = list(traj)
    if not trajs:
        raise ValueError("no trajectories given")
    return trajs


def _window_grid(trajs, t_lo, t_hi, grid_points):
    if grid_points < 5:
        raise ValueError("grid_points must be >= 5")
    if not (0 < t_lo < t_hi):
        raise WindowError(f"need 0 < t_lo < t_hi, got [{t_lo}, {t_hi}]")
    end = min(tr.terminal_time for tr in trajs)
    if t_hi > end:
        raise WindowError(f"window end {t_hi} beyond trajectory end {end}")
    return geometric_grid(t_lo, t_hi, grid_points)


def _mean_counts(trajs, grid):
    return np.mean([tr.N_at(grid) for tr in trajs], axis=0)


def loglog_slope(traj, t_lo: float, t_hi: float, grid_points: int = DEFAULT_GRID_POINTS,
                 target_slope: float = math.nan) -> ScalingReport:
    """Fit ``log N`` against ``log t`` on a geometric grid in ``[t_lo, t_hi]``.

    With several trajectories the seed-averaged ``N`` is fitted.  The
    deviation series is ``N / fitted - 1``.
    """
    trajs = _as_list(traj)
    grid = _window_grid(trajs, t_lo, t_hi, grid_points)
    N = _mean_counts(trajs, grid)
    slope, intercept, r2, degenerate = fit_loglog(grid, N)
    fitted = np.exp(intercept + slope * np.log(grid))
    dev = N / fitted - 1.0
    return ScalingReport((t_lo, t_hi), slope, intercept, r2, target_slope,
                         list(zip(grid.tolist(), dev.tolist())), degenerate)


def _deviation_report(trajs, grid, dev_fn, target_slope, t_lo, t_hi, level_power):
    devs = np.mean([dev_fn(grid, tr.N_at(grid)) for tr in trajs], axis=0)
    N = _mean_counts(trajs, grid)
    slope, intercept, r2, degenerate = fit_loglog(grid, N)
    level = float(np.exp(np.mean(np.log(grid**level_power * N))))
    return ScalingReport((t_lo, t_hi), slope, intercept, r2, target_slope,
                         list(zip(grid.tolist(), devs.tolist())), degenerate, level)


def check_theorem1(traj, c: float, gamma: float, window, grid_points: int = DEFAULT_GRID_POINTS
                   ) -> ScalingReport:
    """Deviation ``t^2 N(t) c / (2 gamma) - 1`` across the window.

    ``level`` is the geometric mean of ``t^2 N(t)``, to compare with
    ``2 gamma / c``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if c <= 0:
        raise ValueError("c must be positive")
    trajs = _as_list(traj)
    t_lo, t_hi = window
    grid = _window_grid(trajs, t_lo, t_hi, grid_points)
    rep = _deviation_report(trajs, grid, lambda t, N: t**2 * N * c / (2.0 * gamma) - 1.0,
                            -2.0, t_lo, t_hi, 2)
    rep.label = f"theorem1 c={c:g}"
    return rep


def check_prop2(traj, s: int, window, grid_points: int = DEFAULT_GRID_POINTS) -> ScalingReport:
    """Deviation ``t N(t) / (2 s) - 1`` across the window."""
    trajs = _as_list(traj)
    t_lo, t_hi = window
    grid = _window_grid(trajs, t_lo, t_hi, grid_points)
    rep = _deviation_report(trajs, grid, lambda t, N: t * N / (2.0 * s) - 1.0, -1.0, t_lo, t_hi, 1)
    rep.label = f"prop2 s={s}"
    return rep


def heuristic_species_curve(s: int, c: float, t) -> float:
    """Mean-field species count ``2 / (c t + 2/s)``."""
    return 2.0 / (c * np.asarray(t, dtype=float) + 2.0 / s)


def heuristic_lineage_curve(s: int, n: int, c: float, gamma: float, t):
    """Reference curve for plots: ``2s/(t + 2/n)`` early, ``2 gamma/(c t^2)`` late.

    The pieces are joined at the time where they cross; the crossover itself
    is not modelled.
    """
    t = np.asarray(t, dtype=float)
    early = s * 2.0 / (t + 2.0 / n)
    with np.errstate(divide="ignore"):
        late = 2.0 * gamma / (c * t**2) if c > 0 else np.full_like(t, np.inf)
    return np.minimum(early, late)


@dataclass(frozen=True)
class RegimeWindows:
    early: tuple
    late: tuple
    s: int
    n: int
    c: float


def regime_windows(s: int, n: int, c: float, factor: float = 5.0, late_end: float = 0.5,
                   min_ratio: float = 20.0) -> RegimeWindows:
    """Early window ``[f/n, 1/(f s)]`` and late window ``[f/s, late_end]``."""
    if n < min_ratio * s:
        raise InsufficientSeparation(f"need n >= {min_ratio:g} s for two phases (s={s}, n={n})")
    early = (factor / n, 1.0 / (factor * s))
    late = (factor / s, late_end)
    if not (early[0] < early[1] <= late[0] < late[1]):
        raise InsufficientSeparation(f"windows collapse: early={early}, late={late}")
    return RegimeWindows(early, late, s, n, c)


def two_phase_detect(traj, cfg, grid_points: int = DEFAULT_GRID_POINTS, factor: float = 5.0,
                     late_end: float = 0.5):
    """Log-log slopes in the within-species and nested regimes.

    ``cfg`` supplies ``s``, ``n``, ``c`` (a NestedConfig or anything with
    those attributes).
    """
    w = regime_windows(cfg.s, cfg.n, cfg.c, factor, late_end)
    early = loglog_slope(traj, *w.early, grid_points=grid_points, target_slope=-1.0)
    early.label = "early"
    late = loglog_slope(traj, *w.late, grid_points=grid_points, target_slope=-2.0)
    late.label = "late"
    return early, late


def plot_rows(traj, grid, ref, dev=None):
    """Rows ``(t, N, ref_curve, dev)`` for CSV output; ``N`` seed-averaged."""
    trajs = _as_list(traj)
    N = _mean_counts(trajs, grid)
    ref = np.asarray(ref, dtype=float)
    if dev is None:
        dev = N / ref - 1.0
    return list(zip(np.asarray(grid).tolist(), N.tolist(), ref.tolist(), np.asarray(dev).tolist()))


def write_plot_csv(path, rows):
    from .trajectory import format_float

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,N,ref_curve,dev\n")
        for row in rows:
            fh.write(",".join(format_float(float(v)) for v in row) + "\n")


def write_loglog_svg(path, t, N, ref=None, guides=(-1.0, -2.0), title="", width=640, height=480):
    """Static log-log plot: trajectory polyline, optional reference, slope guides."""
    t = np.asarray(t, dtype=float)
    N = np.asarray(N, dtype=float)
    ok = (t > 0) & (N > 0)
    t, N = t[ok], N[ok]
    if ref is not None:
        ref = np.asarray(ref, dtype=float)[ok]
    lx, ly = np.log10(t), np.log10(N)
    x0, x1 = lx.min(), lx.max()
    y0, y1 = ly.min(), ly.max()
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    m = 50

    def px(x):
        return m + (x - x0) / (x1 - x0) * (width - 2 * m)

    def py(y):
        return height - m - (y - y0) / (y1 - y0) * (height - 2 * m)

    def poly(xs, ys, color, dash=""):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, ys))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        return f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{extra} points="{pts}"/>'

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{m}" y1="{height - m}" x2="{width - m}" y2="{height - m}" stroke="black"/>',
        f'<line x1="{m}" y1="{m}" x2="{m}" y2="{height - m}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 10}" text-anchor="middle">log10 t</text>',
        f'<text x="15" y="{height / 2}" transform="rotate(-90 15 {height / 2})" '
        'text-anchor="middle">log10 N</text>',
    ]
    if title:
        parts.append(f'<text x="{width / 2}" y="25" text-anchor="middle">{title}</text>')
    for k in range(math.ceil(x0), math.floor(x1) + 1):
        parts.append(f'<text x="{px(k):.1f}" y="{height - m + 15}" text-anchor="middle" '
                     f'font-size="10">{k}</text>')
    for k in range(math.ceil(y0), math.floor(y1) + 1):
        parts.append(f'<text x="{m - 5}" y="{py(k):.1f}" text-anchor="end" '
                     f'font-size="10">{k}</text>')
    parts.append(poly(lx, ly, "steelblue"))
    if ref is not None:
        parts.append(poly(lx, np.log10(ref), "gray", "4 3"))
    xm = (x0 + x1) / 2
    ym = (y0 + y1) / 2
    half = (x1 - x0) / 6
    for g in guides:
        xs = np.array([xm - half, xm + half])
        parts.append(poly(xs, ym + g * (xs - xm), "firebrick", "6 4"))
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
