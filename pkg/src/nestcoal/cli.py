"""Command-line front end.

Exit codes: 0 ok, 2 invalid configuration, 3 fixed-point iteration did not
converge, 4 a scaling assertion failed, 5 a verification property failed.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import tempfile
from pathlib import Path

from . import __version__

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_ASSERTION = 4
EXIT_VERIFY = 5

OUT_DIR_ENV = "NESTCOAL_OUT_DIR"
FULL_SCALE_REPLICATES = 10_000_000


class UsageError(Exception):
    pass


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "nestcoal_out"))


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def atomic_write(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(path, command, argv, config, seed, started, outputs):
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": seed,
        "version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": [str(p) for p in outputs],
    }
    atomic_write(path, json.dumps(manifest, indent=2) + "\n")
    return path


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


# ---------------------------------------------------------------- simulate

def cmd_simulate(args, argv) -> int:
    from .nested import NestedConfig, simulate_nested
    from .trajectory import Decimation

    started = _now()
    if args.t_max is None and not args.to_absorption:
        raise UsageError("t_max: give --t-max or --to-absorption")
    try:
        dec = Decimation.parse(args.decimate)
    except ValueError as exc:
        raise UsageError(f"decimate: {exc}") from None
    try:
        cfg = NestedConfig(args.species, args.lineages, args.rate_c, seed=args.seed,
                           t_max=None if args.to_absorption else args.t_max, decimation=dec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out) if args.out else default_out_dir() / "trajectory.csv"
    traj = simulate_nested(cfg, progress=args.progress)
    atomic_write(out, traj.to_csv())
    resolved = cfg.to_dict()
    resolved.update(lineage_merges=traj.lineage_merges, species_merges=traj.species_merges)
    write_manifest(out.with_name(out.name + ".manifest.json"), "simulate", argv, resolved,
                   args.seed, started, [out])
    return EXIT_OK


# ---------------------------------------------------------------- estimate-gamma

def cmd_estimate_gamma(args, argv) -> int:
    from . import rde

    started = _now()
    out = Path(args.out) if args.out else default_out_dir() / f"gamma_{args.method}.json"
    status = EXIT_OK
    if args.workers < 1:
        raise UsageError("workers: must be >= 1")
    if args.method == "bounds":
        lower, upper = rde.gamma_analytic_bounds()
        payload = {"method": "bounds", "lower": lower, "upper": upper,
                   "jensen_residual": rde.jensen_residual(upper)}
        config = {"method": "bounds"}
    elif args.method == "sandwich":
        replicates = args.replicates
        if replicates is None:
            replicates = FULL_SCALE_REPLICATES if args.full_scale else 100_000
        if replicates < 1:
            raise UsageError("replicates: must be >= 1")
        if not 0 <= args.depth <= rde.MAX_DEPTH:
            raise UsageError(f"depth: must be in 0..{rde.MAX_DEPTH}")
        est = rde.estimate_gamma(args.depth, replicates, args.seed, args.workers)
        payload = est.to_dict()
        config = {"method": "sandwich", "depth": args.depth, "replicates": replicates,
                  "seed": args.seed, "workers": args.workers}
    else:
        if args.particles < 1000:
            raise UsageError("particles: must be >= 1000")
        if not args.tol > 0:
            raise UsageError("tol: must be positive")
        config = {"method": "rde", "particles": args.particles, "tol": args.tol,
                  "max_iter": args.max_iter, "init": args.init, "seed": args.seed}
        try:
            res = rde.iterate_to_fixed_point(args.particles, args.tol, args.max_iter, args.init,
                                             rde.RngStream(args.seed))
            payload = res.to_dict()
        except rde.NonConvergenceError as exc:
            payload = {"method": "rde", "error": str(exc), "distance_sequence": exc.distances}
            status = EXIT_NONCONVERGENCE
    atomic_write(out, _json_dump(payload))
    write_manifest(out.with_name(out.name + ".manifest.json"), "estimate-gamma", argv, config,
                   args.seed if args.method != "bounds" else None, started, [out])
    if status:
        print(payload["error"], file=sys.stderr)
    return status


# ---------------------------------------------------------------- ltt

def cmd_ltt(args, argv) -> int:
    from . import experiments

    started = _now()
    try:
        cfg = experiments.ExperimentConfig.load(args.config)
    except (OSError, experiments.ConfigError) as exc:
        raise UsageError(str(exc)) from None
    if args.full_scale:
        cfg.sets.append(experiments._parse_set(len(cfg.sets), {
            "name": "fig2_full", "kind": "two_phase", "species": 2000, "lineages": 100_000,
            "rate_c": 0.1, "seeds": 1}))
    out_dir = Path(args.out_dir or cfg.out_dir or default_out_dir())
    gamma = args.gamma if args.gamma is not None else cfg.gamma
    if gamma is None:
        gamma = experiments.default_gamma(seed=cfg.seed, workers=args.workers)
    if not gamma > 0:
        raise UsageError("gamma: must be positive")
    results, written = experiments.run_experiment(cfg, gamma, out_dir, args.workers)
    failed = []
    for res in results:
        for a in res.assertions:
            print(a.line())
            if not a.passed:
                failed.append(a.name)
    resolved = cfg.to_dict()
    resolved["gamma"] = gamma
    resolved["out_dir"] = str(out_dir)
    write_manifest(out_dir / "manifest.json", "ltt", argv, resolved, cfg.seed, started, written)
    if failed:
        print("failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_OK


# ---------------------------------------------------------------- verify

def cmd_verify(args, argv) -> int:
    from . import verify

    started = _now()
    if args.suite not in ("core", "nested", "rde", "all"):
        raise UsageError(f"suite: unknown suite {args.suite!r}")
    checks = verify.run_suite(args.suite, args.seed)
    for chk in checks:
        print(chk.line())
    out = Path(args.out) if args.out else default_out_dir() / f"verify_{args.suite}.json"
    atomic_write(out, _json_dump([chk.__dict__ for chk in checks]))
    write_manifest(out.with_name(out.name + ".manifest.json"), "verify", argv,
                   {"suite": args.suite, "seed": args.seed}, args.seed, started, [out])
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY


# ---------------------------------------------------------------- replay

def cmd_replay(args, argv) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        inner = manifest["argv"]
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"manifest: cannot read ({exc})") from None
    return main(inner)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nestcoal", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate one nested coalescent trajectory")
    s.add_argument("--species", type=int, required=True)
    s.add_argument("--lineages", type=int, required=True)
    s.add_argument("--rate-c", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    stop = s.add_mutually_exclusive_group()
    stop.add_argument("--t-max", type=float)
    stop.add_argument("--to-absorption", action="store_true")
    s.add_argument("--out")
    s.add_argument("--decimate", default="geometric:1.02",
                   help="all-events | geometric[:ratio] | every-kth:k")
    s.add_argument("--progress", action="store_true", help="event counter on stderr")
    s.set_defaults(func=cmd_simulate)

    g = sub.add_parser("estimate-gamma", help="estimate the constant gamma")
    g.add_argument("--method", choices=("sandwich", "rde", "bounds"), required=True)
    g.add_argument("--depth", type=int, default=12)
    g.add_argument("--replicates", type=int)
    g.add_argument("--particles", type=int, default=100_000)
    g.add_argument("--tol", type=float, default=1e-3)
    g.add_argument("--max-iter", type=int, default=200)
    g.add_argument("--init", choices=("delta2", "deltaInf"), default="delta2")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--full-scale", action="store_true", help="1e7 sandwich replicates")
    g.add_argument("--out")
    g.set_defaults(func=cmd_estimate_gamma)

    lt = sub.add_parser("ltt", help="run scaling experiments from a JSON config")
    lt.add_argument("--config", required=True)
    lt.add_argument("--out-dir")
    lt.add_argument("--gamma", type=float)
    lt.add_argument("--workers", type=int, default=1)
    lt.add_argument("--full-scale", action="store_true",
                    help="add a full-size two-phase run (s=2000, n=1e5)")
    lt.set_defaults(func=cmd_ltt)

    v = sub.add_parser("verify", help="run property suites")
    v.add_argument("--suite", required=True)
    v.add_argument("--seed", type=int, default=1)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
