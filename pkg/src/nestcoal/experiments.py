"""Multi-seed scaling experiments driven by a JSON config.

Config layout::

    {
      "seed": 1,
      "seeds_per_set": 20,
      "grid_points": 25,
      "gamma": null,                 # null: sandwich estimate at depth 12
      "svg": true,
      "sets": [
        {"name": "fig3", "kind": "theorem1", "species": 1000, "lineages": 1000,
         "rate_c": [0.5, 1, 2], "window": [0.05, 0.3],
         "max_deviation": 0.15, "level_tolerance": 0.15},
        {"name": "fig2", "kind": "two_phase", "species": 100, "lineages": 10000,
         "rate_c": 0.1, "early_slope": [-1.3, -0.7], "late_slope": [-2.3, -1.7]},
        {"name": "p2", "kind": "prop2", "species": 100, "lineages": 10000,
         "rate_c": 0.1, "window": [0.002, 0.004], "max_deviation": 0.15}
      ]
    }

A set may carry ``"seeds"`` to override ``seeds_per_set``.  Replicate ``r`` of
every set runs on stream ``(seed, r)``.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .nested import NestedConfig, simulate_nested
from .trajectory import Decimation

KINDS = ("theorem1", "two_phase", "prop2")


class ConfigError(ValueError):
    pass


@dataclass
class SetConfig:
    name: str
    kind: str
    species: int
    lineages: int
    rate_c: list
    window: tuple | None = None
    max_deviation: float = 0.15
    level_tolerance: float = 0.15
    early_slope: tuple = (-1.3, -0.7)
    late_slope: tuple = (-2.3, -1.7)
    window_factor: float = 5.0
    late_end: float = 0.5
    seeds: int | None = None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["window"] = list(self.window) if self.window else None
        d["early_slope"] = list(self.early_slope)
        d["late_slope"] = list(self.late_slope)
        return d


@dataclass
class ExperimentConfig:
    sets: list
    seed: int = 1
    seeds_per_set: int = 20
    grid_points: int = analysis.DEFAULT_GRID_POINTS
    gamma: float | None = None
    svg: bool = True
    out_dir: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config: top level must be a JSON object")
        sets_raw = raw.get("sets")
        if not sets_raw:
            raise ConfigError("sets: config names no parameter sets")
        sets = []
        for i, s in enumerate(sets_raw):
            sets.append(_parse_set(i, s))
        names = [s.name for s in sets]
        if len(set(names)) != len(names):
            raise ConfigError("sets: names must be unique")
        cfg = cls(
            sets=sets,
            seed=int(raw.get("seed", 1)),
            seeds_per_set=int(raw.get("seeds_per_set", 20)),
            grid_points=int(raw.get("grid_points", analysis.DEFAULT_GRID_POINTS)),
            gamma=None if raw.get("gamma") is None else float(raw["gamma"]),
            svg=bool(raw.get("svg", True)),
            out_dir=raw.get("out_dir"),
        )
        if cfg.seeds_per_set < 1:
            raise ConfigError("seeds_per_set: must be >= 1")
        if cfg.grid_points < 5:
            raise ConfigError("grid_points: must be >= 5")
        if cfg.gamma is not None and not cfg.gamma > 0:
            raise ConfigError("gamma: must be positive")
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8") or "null")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: invalid JSON ({exc})") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "seeds_per_set": self.seeds_per_set,
            "grid_points": self.grid_points,
            "gamma": self.gamma,
            "svg": self.svg,
            "out_dir": self.out_dir,
            "sets": [s.to_dict() for s in self.sets],
        }


def _parse_set(i, s) -> SetConfig:
    where = f"sets[{i}]"
    if not isinstance(s, dict):
        raise ConfigError(f"{where}: must be an object")
    kind = s.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"{where}.kind: expected one of {KINDS}, got {kind!r}")
    for key in ("species", "lineages", "rate_c"):
        if key not in s:
            raise ConfigError(f"{where}.{key}: missing")
    rate_c = s["rate_c"] if isinstance(s["rate_c"], list) else [s["rate_c"]]
    rate_c = [float(c) for c in rate_c]
    if not rate_c or any(not c >= 0 for c in rate_c):
        raise ConfigError(f"{where}.rate_c: must be >= 0")
    if kind == "theorem1" and any(c == 0 for c in rate_c):
        raise ConfigError(f"{where}.rate_c: theorem1 needs c > 0")
    window = s.get("window")
    if kind in ("theorem1", "prop2"):
        if not window or len(window) != 2 or not (0 < window[0] < window[1]):
            raise ConfigError(f"{where}.window: need [t_lo, t_hi] with 0 < t_lo < t_hi")
        window = (float(window[0]), float(window[1]))
    species, lineages = s["species"], s["lineages"]
    if not isinstance(species, int) or species < 1:
        raise ConfigError(f"{where}.species: must be an integer >= 1")
    if not isinstance(lineages, int) or lineages < 1:
        raise ConfigError(f"{where}.lineages: must be an integer >= 1")
    sc = SetConfig(
        name=str(s.get("name", f"set{i}")),
        kind=kind,
        species=species,
        lineages=lineages,
        rate_c=rate_c,
        window=window,
        max_deviation=float(s.get("max_deviation", 0.15)),
        level_tolerance=float(s.get("level_tolerance", 0.15)),
        early_slope=tuple(s.get("early_slope", (-1.3, -0.7))),
        late_slope=tuple(s.get("late_slope", (-2.3, -1.7))),
        window_factor=float(s.get("window_factor", 5.0)),
        late_end=float(s.get("late_end", 0.5)),
        seeds=None if s.get("seeds") is None else int(s["seeds"]),
    )
    if sc.seeds is not None and sc.seeds < 1:
        raise ConfigError(f"{where}.seeds: must be >= 1")
    if kind == "two_phase":
        try:
            analysis.regime_windows(sc.species, sc.lineages, sc.rate_c[0], sc.window_factor,
                                    sc.late_end)
        except analysis.InsufficientSeparation as exc:
            raise ConfigError(f"{where}: {exc}") from None
    return sc


# ---------------------------------------------------------------- running

def _simulate(cfg: NestedConfig):
    return simulate_nested(cfg)


def run_replicates(s: int, n: int, c: float, seed: int, replicates: int, t_max: float,
                   observe=(), workers: int = 1):
    """Trajectories for streams ``(seed, 0..replicates-1)``, in replicate order."""
    dec = Decimation()
    cfgs = [NestedConfig(s, n, c, seed=seed, t_max=t_max, decimation=dec,
                         observe=tuple(observe), stream_index=r) for r in range(replicates)]
    if workers <= 1 or replicates == 1:
        return [simulate_nested(cfg) for cfg in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate, cfgs))


@dataclass
class Assertion:
    name: str
    passed: bool
    measured: float
    bound: str

    def line(self) -> str:
        return f"{self.name}: {'pass' if self.passed else 'FAIL'} (measured {self.measured:.6g}, need {self.bound})"


@dataclass
class SetResult:
    name: str
    kind: str
    reports: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    plots: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "passed": self.passed,
            "assertions": [a.__dict__ for a in self.assertions],
            "reports": {k: r.to_dict() for k, r in self.reports.items()},
        }


def _in_range(x, lo_hi):
    return lo_hi[0] <= x <= lo_hi[1]


def run_theorem1(sc: SetConfig, gamma: float, seed: int, seeds: int, grid_points: int,
                 workers: int = 1) -> SetResult:
    res = SetResult(sc.name, sc.kind)
    t_lo, t_hi = sc.window
    grid = analysis.geometric_grid(t_lo, t_hi, grid_points)
    for c in sc.rate_c:
        trajs = run_replicates(sc.species, sc.lineages, c, seed, seeds, t_hi, grid, workers)
        rep = analysis.check_theorem1(trajs, c, gamma, sc.window, grid_points)
        key = f"c={c:g}"
        res.reports[key] = rep
        res.assertions.append(Assertion(f"{sc.name} {key} max|dev|", rep.max_abs_deviation
                                        < sc.max_deviation, rep.max_abs_deviation,
                                        f"< {sc.max_deviation:g}"))
        ref = 2.0 * gamma / (c * grid**2)
        res.plots[key] = (grid, analysis.plot_rows(trajs, grid, ref))
    if len(sc.rate_c) > 1:
        # level * c should not depend on c
        scaled = [res.reports[f"c={c:g}"].level * c for c in sc.rate_c]
        ref = scaled[0]
        worst = max(abs(v / ref - 1.0) for v in scaled)
        res.assertions.append(Assertion(f"{sc.name} level*c spread", worst <= sc.level_tolerance,
                                        worst, f"<= {sc.level_tolerance:g}"))
    return res


def run_two_phase(sc: SetConfig, gamma: float, seed: int, seeds: int, grid_points: int,
                  workers: int = 1) -> SetResult:
    res = SetResult(sc.name, sc.kind)
    c = sc.rate_c[0]
    w = analysis.regime_windows(sc.species, sc.lineages, c, sc.window_factor, sc.late_end)
    eg = analysis.geometric_grid(*w.early, grid_points)
    lg = analysis.geometric_grid(*w.late, grid_points)
    trajs = run_replicates(sc.species, sc.lineages, c, seed, seeds, w.late[1],
                           np.concatenate((eg, lg)), workers)
    cfg = NestedConfig(sc.species, sc.lineages, c)
    early, late = analysis.two_phase_detect(trajs, cfg, grid_points, sc.window_factor, sc.late_end)
    prop2 = analysis.check_prop2(trajs, sc.species, w.early, grid_points)
    res.reports.update(early=early, late=late, prop2_early=prop2)
    res.assertions.append(Assertion(f"{sc.name} early slope", _in_range(early.slope, sc.early_slope),
                                    early.slope, f"in {list(sc.early_slope)}"))
    res.assertions.append(Assertion(f"{sc.name} late slope", _in_range(late.slope, sc.late_slope),
                                    late.slope, f"in {list(sc.late_slope)}"))
    grid = np.concatenate((eg, lg))
    ref = analysis.heuristic_lineage_curve(sc.species, sc.lineages, c, gamma, grid)
    res.plots["all"] = (grid, analysis.plot_rows(trajs, grid, ref))
    return res


def run_prop2(sc: SetConfig, gamma: float, seed: int, seeds: int, grid_points: int,
              workers: int = 1) -> SetResult:
    res = SetResult(sc.name, sc.kind)
    t_lo, t_hi = sc.window
    grid = analysis.geometric_grid(t_lo, t_hi, grid_points)
    for c in sc.rate_c:
        trajs = run_replicates(sc.species, sc.lineages, c, seed, seeds, t_hi, grid, workers)
        rep = analysis.check_prop2(trajs, sc.species, sc.window, grid_points)
        key = f"c={c:g}"
        res.reports[key] = rep
        res.assertions.append(Assertion(f"{sc.name} {key} max|dev|", rep.max_abs_deviation
                                        < sc.max_deviation, rep.max_abs_deviation,
                                        f"< {sc.max_deviation:g}"))
        ref = 2.0 * sc.species / grid
        res.plots[key] = (grid, analysis.plot_rows(trajs, grid, ref))
    return res


RUNNERS = {"theorem1": run_theorem1, "two_phase": run_two_phase, "prop2": run_prop2}


def run_experiment(cfg: ExperimentConfig, gamma: float, out_dir=None, workers: int = 1):
    """Run every set; write per-set CSV, JSON and optional SVG into ``out_dir``."""
    results = []
    written = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for sc in cfg.sets:
        res = RUNNERS[sc.kind](sc, gamma, cfg.seed, sc.seeds or cfg.seeds_per_set, cfg.grid_points, workers)
        results.append(res)
        if out is None:
            continue
        for key, (grid, rows) in res.plots.items():
            stem = f"{sc.name}_{key}".replace("=", "").replace(" ", "")
            csv_path = out / f"{stem}.csv"
            analysis.write_plot_csv(csv_path, rows)
            written.append(str(csv_path))
            if cfg.svg:
                svg_path = out / f"{stem}.svg"
                t = [r[0] for r in rows]
                analysis.write_loglog_svg(svg_path, t, [r[1] for r in rows],
                                          ref=[r[2] for r in rows], title=f"{sc.name} {key}")
                written.append(str(svg_path))
        json_path = out / f"{sc.name}_report.json"
        json_path.write_text(json.dumps(res.to_dict(), indent=2) + "\n", encoding="utf-8")
        written.append(str(json_path))
    return results, written


def default_gamma(seed: int = 1, workers: int = 1, depth: int = 12, replicates: int = 100_000) -> float:
    from .rde import estimate_gamma

    est = estimate_gamma(depth, replicates, seed, workers)
    return 0.5 * (est.mean_lower + est.mean_upper)
