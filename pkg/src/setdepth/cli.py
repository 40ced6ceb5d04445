"""Command-line front end: simulate, decompose, depth, outliers, DD-plots, tests, reproduce.

Every command is a seeded batch job; rerunning with the same flags rewrites
byte-identical files. Exit codes: 0 success, 2 usage error, 3 data error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .depth import KINDS, DepthConfigError, DepthEngine, DepthEstimatorConfig, DepthVector
from .io import DataError, load_sample_or_images, save_raster, save_sample
from .raster import DoesNotFitError, EmptySetError, Grid, GridMismatchError, SetSample

DEFAULT_SEED = 0
THREADS_ENV = "SETDEPTH_THREADS"
EXIT_USAGE = 2
EXIT_DATA = 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- argument plumbing

def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return int(raw)
    except ValueError:
        return 1


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global")
    g.add_argument("--seed", type=int, default=DEFAULT_SEED)
    g.add_argument("--threads", type=int, default=_default_threads(),
                   help=f"worker threads (default from ${THREADS_ENV}, else 1)")
    g.add_argument("--out", default=None, help="output file or directory (default stdout)")
    g.add_argument("--format", choices=("csv", "json"), default=None,
                   help="default: from the --out suffix, else csv (json for tests)")
    g.add_argument("--config", default=None, help="JSON file of flag values; explicit flags win")
    return p


def _depth_flags(p: argparse.ArgumentParser, default_kind: str = "band", multi: bool = False):
    g = p.add_argument_group("depth estimator")
    if multi:
        g.add_argument("--depths", default=default_kind,
                       help=f"comma-separated depth kinds from {','.join(KINDS)}")
    else:
        g.add_argument("--depth", choices=KINDS, default=default_kind)
    g.add_argument("--n", type=int, default=3, help="band depth subset size")
    g.add_argument("--s", type=int, default=1000, help="subsets (band) or subsamples (simplicial)")
    g.add_argument("--m", type=int, default=3, help="simplicial depth subsample size")
    g.add_argument("--N", type=int, default=5, help="simplicial weight grid resolution")
    g.add_argument("--S-exp", dest="S_exp", type=int, default=20,
                   help="Minkowski averages per subsample size (expectation depth)")
    g.add_argument("--max-m", dest="max_m", type=int, default=20)
    g.add_argument("--fd-order", dest="fd_order", type=int, choices=(1, 2, 3), default=1)
    g.add_argument("--tolerance-px", dest="tolerance_px", type=int, default=0)
    g.add_argument("--replace", action="store_true", help="draw subsets with replacement")
    g.add_argument("--max-combinations", dest="max_combinations", type=int, default=10_000)


def _depth_config(args, kind: str | None = None) -> DepthEstimatorConfig:
    return DepthEstimatorConfig(kind=kind or args.depth, n=args.n, s=args.s, m=args.m, N=args.N,
                                S_exp=args.S_exp, max_m=args.max_m, fd_order=args.fd_order,
                                seed=args.seed, tolerance_px=args.tolerance_px,
                                replace=args.replace, max_combinations=args.max_combinations)


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="setdepth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", parents=[common], help="simulate a sample or a realisation")
    p.add_argument("--model", required=True,
                   choices=("discs", "particle", "boolean", "mixture", "probe", "table1-probes"))
    p.add_argument("--params", default=None, help="JSON parameter file (particle or boolean)")
    p.add_argument("--M", type=int, default=100, help="sample size")
    p.add_argument("--grid", type=int, nargs="+", default=None, metavar="SIZE",
                   help="grid width [height] in pixels")
    p.add_argument("--pixel-size", dest="pixel_size", type=float, default=1.0)
    p.add_argument("--r-min", dest="r_min", type=float, default=2.0)
    p.add_argument("--r-max", dest="r_max", type=float, default=4.0)
    p.add_argument("--particle-model", dest="particle_model", default="model1",
                   choices=("model1", "model2", "model3"))
    p.add_argument("--boolean-model", dest="boolean_model", default="boolean-disc",
                   choices=("boolean-disc", "boolean-ellipse"))
    p.add_argument("--p-annulus", dest="p_annulus", type=float, default=0.2)
    p.add_argument("--kind", default="disc", help="probe shape kind")
    p.add_argument("--shape-params", dest="shape_params", default="{}",
                   help="probe shape parameters as a JSON object")

    p = sub.add_parser("decompose", parents=[common], help="split a binary image into sets")
    p.add_argument("image")
    p.add_argument("--mode", choices=("components", "closest-hole"), default="components")
    p.add_argument("--connectivity", type=int, choices=(4, 8), default=8)
    p.add_argument("--drop-border", dest="drop_border", action="store_true", default=True)
    p.add_argument("--keep-border", dest="drop_border", action="store_false")
    p.add_argument("--min-px", dest="min_px", type=int, default=1)
    p.add_argument("--component-size", dest="component_size", type=int, default=None,
                   help="side of the square component grid (default 100, enlarged if needed)")
    p.add_argument("--foreground", choices=("white", "black"), default="white")
    p.add_argument("--pixel-size", dest="pixel_size", type=float, default=None)

    p = sub.add_parser("depth", parents=[common], help="depth of sets within a reference sample")
    p.add_argument("--sample", required=True, help="sets to evaluate")
    p.add_argument("--reference", default=None, help="reference sample (default: --sample)")
    _depth_flags(p)

    p = sub.add_parser("outliers", parents=[common], help="flag probes with depth < threshold")
    p.add_argument("--sample", required=True)
    p.add_argument("--probes", required=True)
    p.add_argument("--threshold", type=float, default=0.05)
    _depth_flags(p, multi=True)

    p = sub.add_parser("ddplot", parents=[common], help="DD-plot of two samples")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--svg", default=None, help="also write an SVG scatter here")
    _depth_flags(p)

    p = sub.add_parser("test-envelope", parents=[common], help="global envelope two-sample test")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--perms", type=int, default=99)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--include-matrix", dest="include_matrix", action="store_true")
    _depth_flags(p)

    p = sub.add_parser("test-regression", parents=[common], help="DD-plot regression test")
    p.add_argument("--ddplot", default=None, help="DD-plot CSV (instead of --x/--y)")
    p.add_argument("--x", default=None)
    p.add_argument("--y", default=None)
    p.add_argument("--bootstrap", type=int, default=1000)
    _depth_flags(p)

    p = sub.add_parser("reproduce", parents=[common], help="desk-scale experiment reproductions")
    p.add_argument("experiment", choices=("table1", "particle-ddplots", "mixture", "power-study"))
    p.add_argument("--n-seeds", dest="n_seeds", type=int, default=1,
                   help="table1: run seeds seed..seed+n-1")
    p.add_argument("--M", type=int, default=100)
    p.add_argument("--runs", type=int, default=25)
    p.add_argument("--perms", type=int, default=None, help="permutations (mixture 99, power 49)")
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--models", default="boolean-disc,boolean-ellipse")
    p.add_argument("--external", action="append", default=[], metavar="MODEL=DIR",
                   help="use realisation images from DIR for MODEL (repeatable)")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv):
    """Parse with ``--config`` values as defaults, so explicit flags still win."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise DataError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.config}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"{args.config}: expected a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    cfg.pop("config", None)
    if cfg.pop("command", args.command) != args.command:
        raise UsageError(f"{args.config} is for a different command")
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[args.command]
    known = {a.dest for a in sp._actions}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise UsageError(f"{args.config}: unknown keys for {args.command}: {unknown}")
    sp.set_defaults(**cfg)
    return parser.parse_args(argv)


# ---------------------------------------------------------------- output helpers

def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _num(v: float) -> str:
    return "%.17g" % v


def _grid(args) -> Grid | None:
    if args.grid is None:
        return None
    if len(args.grid) > 2:
        raise UsageError("--grid takes WIDTH [HEIGHT]")
    w = args.grid[0]
    h = args.grid[1] if len(args.grid) == 2 else w
    return Grid(w, h, args.pixel_size)


def _require_out(args, what: str) -> Path:
    if args.out is None:
        raise UsageError(f"{args.command} writes {what}; pass --out")
    return Path(args.out)


# ---------------------------------------------------------------- commands

def cmd_simulate(args, pool):
    from . import simulate as sim
    from .experiments import POWER_MODELS, TABLE1_GRID, TABLE1_PROBES, particle_params
    out = _require_out(args, "a sample directory")
    grid = _grid(args)
    params = sim.load_params(args.params) if args.params else None
    if args.model == "discs":
        sample = sim.gen_disc_sample(args.M, args.r_min, args.r_max, grid or Grid(100, 100, args.pixel_size),
                                     seed=args.seed, sample_id="discs")
    elif args.model == "particle":
        if params is None:
            params = particle_params(args.particle_model, grid or Grid(64, 64, args.pixel_size))
        elif not isinstance(params, sim.ParticleModelParams):
            raise UsageError(f"{args.params} is not a particle parameter file")
        sample = sim.gen_particle_sample(params, args.M, seed=args.seed, sample_id="particles")
    elif args.model == "mixture":
        sample = sim.gen_mixture_disc_annulus(args.M, args.p_annulus,
                                              grid=grid or Grid(32, 32, args.pixel_size),
                                              seed=args.seed)
    elif args.model == "probe":
        try:
            shape = json.loads(args.shape_params)
        except json.JSONDecodeError as exc:
            raise UsageError(f"--shape-params is not valid JSON ({exc})") from exc
        r = sim.gen_probe_shape(args.kind, shape, grid or TABLE1_GRID)
        sample = SetSample([r], [args.kind], "probe")
    elif args.model == "table1-probes":
        g = grid or TABLE1_GRID
        sets, names = [], []
        for k, (name, kind, prm) in enumerate(TABLE1_PROBES):
            prm = dict(prm)
            if kind in ("disc_with_random_holes", "disc_plus_satellites"):
                prm["seed"] = args.seed * 1000 + k
            sets.append(sim.gen_probe_shape(kind, prm, g))
            names.append(name)
        sample = SetSample(sets, names, "table1-probes")
    else:  # boolean
        if params is None:
            params = POWER_MODELS[args.boolean_model]
        elif not isinstance(params, sim.BooleanModelParams):
            raise UsageError(f"{args.params} is not a Boolean parameter file")
        img, count = sim.gen_boolean_realisation(params, args.seed, return_count=True)
        out.mkdir(parents=True, exist_ok=True)
        save_raster(out / "realisation.pbm", img)
        (out / "simulation.json").write_text(_json_text(
            {"params": params.to_dict(), "seed": args.seed, "grains": int(count)}))
        return 0
    save_sample(out, sample, extra={"seed": args.seed, "model": args.model})
    return 0


def cmd_decompose(args, pool):
    from .pipeline import DecompositionConfig, decompose, ingest_image, save_decomposition
    out = _require_out(args, "a sample directory")
    img = ingest_image(args.image, foreground=args.foreground, pixel_size=args.pixel_size)
    grid = None
    if args.component_size is not None:
        grid = Grid(args.component_size, args.component_size, img.pixel_size)
    cfg = DecompositionConfig(mode=args.mode.replace("-", "_"), connectivity=args.connectivity,
                              drop_border=args.drop_border, min_component_px=args.min_px,
                              component_grid=grid)
    comps = decompose(img, cfg, source_id=Path(args.image).stem)
    save_decomposition(out, comps, args.image, cfg)
    return 0


def cmd_depth(args, pool):
    sample = load_sample_or_images(args.sample)
    ref = load_sample_or_images(args.reference) if args.reference else sample
    cfg = _depth_config(args)
    if args.reference:
        engine = DepthEngine(list(sample) + list(ref), cfg)
        vals = engine.depths(np.arange(len(sample)), np.arange(len(sample), len(sample) + len(ref)))
    else:
        engine = DepthEngine(list(sample), cfg)
        idx = np.arange(len(sample))
        vals = engine.depths(idx, idx)
    vec = DepthVector(vals, ref.sample_id, cfg, list(sample.ids))
    if args.format == "json":
        _emit(_json_text({"reference": ref.sample_id, "config": cfg.to_dict(),
                          "set_ids": vec.set_ids, "depth": vec.values.tolist()}), args.out)
    else:
        _emit(vec.csv_text(), args.out)
    return 0


def outlier_table(sample: SetSample, probes: SetSample, kinds, make_config, threshold: float):
    """Rows of (probe_id, kind, depth, flagged); probes join the reference sample."""
    if len(probes) == 0:
        return []
    pool = list(sample) + list(probes)
    idx = np.arange(len(pool))
    probe_idx = idx[len(sample):]
    rows = []
    per_kind = {}
    for kind in kinds:
        engine = DepthEngine(pool, make_config(kind))
        per_kind[kind] = engine.depths(probe_idx, idx)
    for j, pid in enumerate(probes.ids):
        for kind in kinds:
            v = float(per_kind[kind][j])
            rows.append((pid, kind, v, v < threshold))
    return rows


def cmd_outliers(args, pool):
    kinds = [k.strip() for k in args.depths.split(",") if k.strip()]
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        raise UsageError(f"unknown depth kinds {bad}; choose from {', '.join(KINDS)}")
    sample = load_sample_or_images(args.sample)
    probes = load_sample_or_images(args.probes)
    if len(probes) and len(sample) and probes.grid != sample.grid:
        raise GridMismatchError(f"probe grid {probes.grid} differs from sample grid {sample.grid}")
    rows = outlier_table(sample, probes, kinds, lambda k: _depth_config(args, k), args.threshold)
    if args.format == "json":
        _emit(_json_text({"threshold": args.threshold, "depths": kinds,
                          "config": _depth_config(args, kinds[0]).to_dict(),
                          "rows": [{"probe_id": p, "depth_kind": k, "depth": v, "outlier": f}
                                   for p, k, v, f in rows]}), args.out)
    else:
        _emit(_csv_text(["probe_id", "depth_kind", "depth", "outlier"],
                        [(p, k, _num(v), int(f)) for p, k, v, f in rows]), args.out)
    return 0


def _two_samples(args):
    X = load_sample_or_images(args.x)
    Y = load_sample_or_images(args.y)
    if len(X) == 0 or len(Y) == 0:
        raise DataError("both samples must contain at least one set")
    if X.grid != Y.grid:
        raise GridMismatchError(f"sample grids differ: {X.grid} vs {Y.grid}")
    return X, Y


def cmd_ddplot(args, pool):
    from .ddplot import compute_ddplot, render_svg
    X, Y = _two_samples(args)
    plot = compute_ddplot(X, Y, _depth_config(args))
    if args.format == "json":
        _emit(_json_text({"config": plot.depth_config.to_dict(),
                          "points": [{"set_id": i, "origin": o, "depth_x": x, "depth_y": y}
                                     for x, y, o, i in plot.points]}), args.out)
    else:
        _emit(_csv_text(["set_id", "origin", "depth_x", "depth_y"],
                        [(i, o, _num(x), _num(y)) for x, y, o, i in plot.points]), args.out)
    if args.svg:
        Path(args.svg).write_text(render_svg(plot))
    return 0


def cmd_test_envelope(args, pool):
    from .twosample import envelope_test
    X, Y = _two_samples(args)
    res = envelope_test(X, Y, _depth_config(args), S=args.perms, alpha=args.alpha,
                        seed=args.seed, executor=pool)
    if args.format == "csv":
        rows = [(k, res.set_ids[k], res.origin[k], _num(res.T[0, k]), _num(res.T_low[k]),
                 _num(res.T_upp[k]), int(k in set(res.responsible.tolist())))
                for k in range(res.T.shape[1])]
        text = f"# p_value={_num(res.p_value)} alpha={res.alpha} S={res.S}\n" + _csv_text(
            ["index", "set_id", "origin", "T", "T_low", "T_upp", "responsible"], rows)
        _emit(text, args.out)
    else:
        _emit(_json_text(res.to_dict(args.include_matrix)), args.out)
    return 0


def cmd_test_regression(args, pool):
    from .ddplot import compute_ddplot, read_ddplot_csv
    from .twosample import regression_test
    if args.ddplot:
        if not Path(args.ddplot).exists():
            raise DataError(f"{args.ddplot}: no such file")
        plot = read_ddplot_csv(args.ddplot)
        cfg = None
    elif args.x and args.y:
        X, Y = _two_samples(args)
        cfg = _depth_config(args)
        plot = compute_ddplot(X, Y, cfg)
    else:
        raise UsageError("test-regression needs --ddplot or both --x and --y")
    res = regression_test(plot, B=args.bootstrap, seed=args.seed)
    d = res.to_dict()
    d["rejects_at_0.05"] = res.rejects(0.05)
    if cfg is not None:
        d["depth"] = cfg.to_dict()
    if args.format == "csv":
        _emit(_csv_text(["key", "value"],
                        [(k, _num(v) if isinstance(v, float) else v)
                         for k, v in d.items() if not isinstance(v, dict)]), args.out)
    else:
        _emit(_json_text(d), args.out)
    return 0


def _parse_external(items) -> dict:
    out = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--external expects MODEL=DIR, got {item!r}")
        if not Path(path).is_dir():
            raise DataError(f"--external {name}: {path} is not a directory")
        out[name] = Path(path)
    return out


def cmd_reproduce(args, pool):
    from . import experiments as ex
    out = Path(args.out or args.experiment)
    if args.experiment == "table1":
        ex.run_table1(out, seeds=tuple(range(args.seed, args.seed + args.n_seeds)), M=args.M)
    elif args.experiment == "particle-ddplots":
        ex.run_particle_ddplots(out, seed=args.seed, M=args.M)
    elif args.experiment == "mixture":
        ex.run_mixture(out, runs=args.runs, seed=args.seed, M=args.M, S=args.perms or 99,
                       executor=pool)
    else:
        models = [m.strip() for m in args.models.split(",") if m.strip()]
        external = _parse_external(args.external)
        unknown = [m for m in models if m not in ex.POWER_MODELS and m not in external]
        if unknown or len(models) < 2:
            raise UsageError(f"--models needs two or more of {sorted(ex.POWER_MODELS)} "
                             f"or --external names; unknown: {unknown}")
        ex.run_power_study(out, models=models, pairs=args.pairs, S=args.perms or 49,
                           seed=args.seed, external=external, executor=pool)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "decompose": cmd_decompose,
    "depth": cmd_depth,
    "outliers": cmd_outliers,
    "ddplot": cmd_ddplot,
    "test-envelope": cmd_test_envelope,
    "test-regression": cmd_test_regression,
    "reproduce": cmd_reproduce,
}


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"setdepth: warning: {message}", file=sys.stderr)


def main(argv=None) -> int:
    warnings.showwarning = _show_warning
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.format is None:
            suffix = Path(args.out).suffix.lower() if args.out else ""
            args.format = suffix[1:] if suffix in (".csv", ".json") else \
                ("json" if args.command.startswith("test-") else "csv")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        pool = ThreadPoolExecutor(args.threads) if args.threads > 1 else None
        try:
            return COMMANDS[args.command](args, pool)
        finally:
            if pool is not None:
                pool.shutdown()
    except SystemExit as exc:
        # argparse reports usage errors with code 2
        return int(exc.code or 0)
    except (DataError, GridMismatchError, EmptySetError, DoesNotFitError, OSError) as exc:
        print(f"setdepth: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, DepthConfigError, ValueError) as exc:
        print(f"setdepth: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
