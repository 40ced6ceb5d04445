"""Desk-scale reproductions of the outlier table, DD-plot studies and test experiments."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .depth import DepthEngine, DepthEstimatorConfig, OUTLIER_THRESHOLD
from .raster import Grid, SetSample
from .simulate import (BooleanModelParams, ParticleModelParams, gen_boolean_realisation,
                       gen_disc_sample, gen_mixture_disc_annulus, gen_particle_sample,
                       gen_probe_shape)

# ---------------------------------------------------------------- outlier table

TABLE1_GRID = Grid(100, 100, 1.0)

TABLE1_PROBES = [
    ("ellipse", "ellipse", {"a": 3.8, "b": 2.2}),
    ("square", "square", {"side": 5.0}),
    ("annulus", "annulus", {"r_out": 3.0, "r_in": 0.8}),
    ("holed_disc", "disc_with_random_holes", {"r": 3.0, "drop_prob": 0.2}),
    ("attached_satellites", "disc_plus_satellites",
     {"r_main": 2.5, "r_sat": 0.5, "count": 2, "distance": 3.0}),
    ("disjoint_satellite", "disc_plus_satellites",
     {"r_main": 3.0, "r_sat": 0.3, "count": 1, "distance": 30.0}),
    ("two_disc_union", "disc_union", {"r1": 2.8, "r2": 1.5, "offset": 4.0}),
]

# "+" marks in the published outlier table, one string per probe row
TABLE1_EXPECTED = {
    "infimal": "-------",
    "signed_distance": "++-++--",
    "band": "--++-++",
    "simplicial": "--++-++",
    "expectation": "-----++",
    "hausdorff_typeB": "-----+-",
    "lebesgue_typeB": "-------",
}

TABLE1_DEPTHS = {
    "infimal": DepthEstimatorConfig(kind="infimal"),
    "signed_distance_2": DepthEstimatorConfig(kind="signed_distance", fd_order=2),
    "signed_distance_3": DepthEstimatorConfig(kind="signed_distance", fd_order=3),
    "band": DepthEstimatorConfig(kind="band", n=3, s=1000),
    "simplicial": DepthEstimatorConfig(kind="simplicial", m=3, N=5, s=100),
    "expectation": DepthEstimatorConfig(kind="expectation", S_exp=20, max_m=20),
    "hausdorff_typeB": DepthEstimatorConfig(kind="hausdorff_typeB"),
    "lebesgue_typeB": DepthEstimatorConfig(kind="lebesgue_typeB"),
}


def table1_sample(seed: int, M: int = 100, grid: Grid = TABLE1_GRID):
    """The disc sample with the probe shapes appended; returns (sample, probe names)."""
    discs = gen_disc_sample(M, 2.0, 4.0, grid, seed=seed)
    probes, names = [], []
    for k, (name, kind, params) in enumerate(TABLE1_PROBES):
        p = dict(params)
        if kind in ("disc_with_random_holes", "disc_plus_satellites"):
            p["seed"] = seed * 1000 + k
        probes.append(gen_probe_shape(kind, p, grid))
        names.append(name)
    sample = discs + SetSample(probes, names, "probes")
    return sample, names


def table1_depths(seed: int, depths: dict | None = None, M: int = 100) -> dict:
    """Depth of each probe within the disc sample plus all probes, per depth column."""
    depths = depths or TABLE1_DEPTHS
    sample, names = table1_sample(seed, M)
    K = len(sample)
    idx = np.arange(K)
    probes = np.arange(K - len(names), K)
    out = {}
    for col, cfg in depths.items():
        engine = DepthEngine(list(sample), cfg.with_seed(seed))
        out[col] = engine.depths(probes, idx)
    return out


def table1_pattern(values: dict) -> dict:
    """Collapse depth columns to "+"/"-" strings; signed-distance orders are OR-ed."""
    flags = {k: np.asarray(v) < OUTLIER_THRESHOLD for k, v in values.items()}
    if "signed_distance_2" in flags and "signed_distance_3" in flags:
        flags["signed_distance"] = flags.pop("signed_distance_2") | flags.pop("signed_distance_3")
    return {k: "".join("+" if f else "-" for f in v) for k, v in flags.items()}


def run_table1(out_dir, seeds=(1,), M: int = 100) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = [p[0] for p in TABLE1_PROBES]
    result = {"seeds": list(seeds), "probes": names, "runs": []}
    with open(out / "table1_depths.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "depth", *names])
        for seed in seeds:
            vals = table1_depths(seed, M=M)
            for col, v in vals.items():
                w.writerow([seed, col, *[repr(float(x)) for x in v]])
            pat = table1_pattern(vals)
            result["runs"].append({"seed": seed, "pattern": pat})
    # flag matrix: probe rows by depth columns, for the first seed
    pat = result["runs"][0]["pattern"]
    cols = list(TABLE1_EXPECTED)
    with open(out / "table1_flags.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["probe", *cols])
        for i, name in enumerate(names):
            w.writerow([name, *[pat[c][i] for c in cols]])
    (out / "manifest.json").write_text(json.dumps(
        {"experiment": "table1", "seeds": list(seeds), "M": M,
         "depths": {k: v.to_dict() for k, v in TABLE1_DEPTHS.items()},
         "expected": TABLE1_EXPECTED, "runs": result["runs"]}, indent=2) + "\n")
    return result


# ---------------------------------------------------------------- particle DD-plots

PARTICLE_MODELS = {
    # (mu_R, sigma_R, d, lambda, mu_r, sigma_r) as published
    "model1": (3.0, 0.5, 9.0, 1.5, 5.0, 3.0),
    "model2": (12.0, 1.5, 5.0, 3.0, 3.0, 0.5),
    "model3": (9.0, 2.5, 5.0, 3.0, 3.0, 0.5),
}
PARTICLE_GRID = Grid(64, 64, 1.0)


def particle_params(name: str, grid: Grid = PARTICLE_GRID) -> ParticleModelParams:
    mu_R, sigma_R, d, lam, mu_r, sigma_r = PARTICLE_MODELS[name]
    return ParticleModelParams(mu_R, sigma_R, d, lam, mu_r, sigma_r, grid)


def run_particle_ddplots(out_dir, seed: int = 1, M: int = 100, n: int = 3, s: int = 1000) -> dict:
    """Model 1 against itself, against Model 2 and against Model 3."""
    from .ddplot import compute_ddplot, export_ddplot
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = DepthEstimatorConfig(kind="band", n=n, s=s, seed=seed)
    base = gen_particle_sample(particle_params("model1"), M, seed=seed * 10 + 1, sample_id="model1")
    others = {
        "model1": gen_particle_sample(particle_params("model1"), M, seed=seed * 10 + 2,
                                      sample_id="model1b"),
        "model2": gen_particle_sample(particle_params("model2"), M, seed=seed * 10 + 3,
                                      sample_id="model2"),
        "model3": gen_particle_sample(particle_params("model3"), M, seed=seed * 10 + 4,
                                      sample_id="model3"),
    }
    summary = {}
    for name, other in others.items():
        plot = compute_ddplot(base, other, cfg)
        stem = f"ddplot_model1_vs_{name}"
        export_ddplot(plot, out / f"{stem}.csv", out / f"{stem}.svg")
        summary[name] = {"mean_abs_difference": float(np.abs(plot.difference()).mean())}
    (out / "manifest.json").write_text(json.dumps(
        {"experiment": "particle-ddplots", "seed": seed, "M": M, "depth": cfg.to_dict(),
         "models": PARTICLE_MODELS, "summary": summary}, indent=2) + "\n")
    return summary


# ---------------------------------------------------------------- mixture example

MIXTURE_GRID = Grid(32, 32, 1.0)
MIXTURE_DEPTH = DepthEstimatorConfig(kind="band", n=8, s=1000)


@dataclass
class MixtureRun:
    seed: int
    regression_p0: float
    regression_p1: float
    regression_p_adjusted: float
    envelope_p: float
    n_annuli: int
    responsible: list
    responsible_annuli: int


def mixture_run(seed: int, M: int = 100, S: int = 99, B: int = 1000,
                depth: DepthEstimatorConfig = MIXTURE_DEPTH, executor=None):
    """Disc sample against the disc/annulus mixture: DD-plot, regression and envelope test."""
    from .ddplot import compute_ddplot
    from .twosample import envelope_test, regression_test
    X = gen_disc_sample(M, 8.0, 10.0, MIXTURE_GRID, seed=2 * seed, sample_id="discs")
    Y = gen_mixture_disc_annulus(M, 0.2, grid=MIXTURE_GRID, seed=2 * seed + 1, sample_id="mixture")
    cfg = depth.with_seed(seed)
    plot = compute_ddplot(X, Y, cfg)
    reg = regression_test(plot, B=B, seed=seed)
    env = envelope_test(X, Y, cfg, S=S, alpha=0.05, seed=seed, executor=executor)
    ids = list(X.ids) + list(Y.ids)
    annuli = {k for k in range(len(X), len(ids)) if ids[k].endswith("-annulus")}
    resp = [int(k) for k in env.responsible]
    run = MixtureRun(seed, reg.p0, reg.p1, reg.p_adjusted, env.p_value, len(annuli),
                     resp, len(annuli.intersection(resp)))
    return run, plot, env


def run_mixture(out_dir, runs: int = 25, seed: int = 1, M: int = 100, S: int = 99,
                executor=None) -> list:
    from .ddplot import export_ddplot, render_svg
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in range(runs):
        run, plot, env = mixture_run(seed + r, M=M, S=S, executor=executor)
        rows.append(run)
        if r == 0:
            export_ddplot(plot, out / "ddplot_first_run.csv")
            (out / "ddplot_first_run.svg").write_text(render_svg(plot, highlight=env.responsible))
            env.to_json(out / "envelope_first_run.json")
    with open(out / "mixture_runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "regression_p0", "regression_p1", "regression_p_adjusted",
                    "envelope_p", "n_annuli", "n_responsible", "responsible_annuli"])
        for x in rows:
            w.writerow([x.seed, repr(x.regression_p0), repr(x.regression_p1),
                        repr(x.regression_p_adjusted), repr(x.envelope_p), x.n_annuli,
                        len(x.responsible), x.responsible_annuli])
    (out / "manifest.json").write_text(json.dumps(
        {"experiment": "mixture", "seeds": [seed + r for r in range(runs)], "M": M, "S": S,
         "depth": MIXTURE_DEPTH.to_dict(), "grid": [MIXTURE_GRID.width, MIXTURE_GRID.height]},
        indent=2) + "\n")
    return rows


# ---------------------------------------------------------------- null calibration

NULL_DEPTH = DepthEstimatorConfig(kind="band", n=5, s=200)


def null_run(seed: int, M: int = 50, S: int = 99, depth: DepthEstimatorConfig = NULL_DEPTH,
             executor=None):
    from .twosample import envelope_test
    X = gen_disc_sample(M, 8.0, 10.0, MIXTURE_GRID, seed=2 * seed, sample_id="X")
    Y = gen_disc_sample(M, 8.0, 10.0, MIXTURE_GRID, seed=2 * seed + 1, sample_id="Y")
    return envelope_test(X, Y, depth.with_seed(seed), S=S, alpha=0.05, seed=seed, executor=executor)


# ---------------------------------------------------------------- power study

POWER_WINDOW = Grid(400, 400, 0.0625)
POWER_MODELS = {
    "boolean-disc": BooleanModelParams(POWER_WINDOW, 0.4, "disc", r_min=0.5, r_max=1.0),
    "boolean-ellipse": BooleanModelParams(POWER_WINDOW, 0.4, "ellipse", a_min=0.5, a_max=1.0,
                                          b_min=0.2, b_max=0.7),
}
POWER_DEPTHS = {
    "band": DepthEstimatorConfig(kind="band", n=8, s=1000),
    "signed_distance": DepthEstimatorConfig(kind="signed_distance", fd_order=1),
}


def component_crops(img, connectivity: int = 8):
    """Crops of the components that do not touch the window border."""
    from scipy import ndimage
    from .raster import _structure
    lab, n = ndimage.label(img.mask, structure=_structure(connectivity))
    border = set(np.unique(np.concatenate([lab[0], lab[-1], lab[:, 0], lab[:, -1]]))) - {0}
    return [lab[sl] == i for i, sl in enumerate(ndimage.find_objects(lab), start=1)
            if i not in border]


def paired_component_samples(img_x, img_y, ids=("X", "Y")):
    """Components of two realisations centred on one grid that fits them all."""
    from .raster import BinaryRaster, centroid_centre, fitting_grid
    cx, cy = component_crops(img_x), component_crops(img_y)
    grid = fitting_grid(cx + cy, img_x.pixel_size)
    make = lambda crops, sid: SetSample(
        [centroid_centre(BinaryRaster(c, img_x.pixel_size), grid) for c in crops],
        [f"{sid}:{i:04d}" for i in range(len(crops))], sid)
    return make(cx, ids[0]), make(cy, ids[1])


def realisation(model, seed: int, external: dict | None = None):
    """A simulated Boolean realisation, or the seed-th image of an external directory."""
    if external and model in external:
        from .io import load_raster
        files = sorted(p for p in Path(external[model]).iterdir()
                       if p.suffix.lower() in (".pbm", ".png"))
        return load_raster(files[seed % len(files)])
    return gen_boolean_realisation(POWER_MODELS[model], seed)


def power_pair(model_x: str, model_y: str, pair: int, seed: int = 1, S: int = 49,
               depths: dict | None = None, external: dict | None = None, executor=None) -> dict:
    """Envelope-test p-values for one realisation pair under each depth."""
    from .twosample import envelope_test
    depths = depths or POWER_DEPTHS
    sx = seed * 100_003 + 2 * pair
    img_x = realisation(model_x, sx, external)
    img_y = realisation(model_y, sx + 1, external)
    X, Y = paired_component_samples(img_x, img_y, (model_x, model_y))
    out = {"pair": pair, "n_x": len(X), "n_y": len(Y)}
    for name, cfg in depths.items():
        res = envelope_test(X, Y, cfg.with_seed(sx), S=S, alpha=0.05, seed=sx, executor=executor)
        out[name] = res.p_value
    return out


def run_power_study(out_dir, models=("boolean-disc", "boolean-ellipse"), pairs: int = 20,
                    S: int = 49, seed: int = 1, external: dict | None = None,
                    executor=None) -> dict:
    """Rejection rates for every pair of distinct models."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    models = list(models)
    combos = [(a, b) for i, a in enumerate(models) for b in models[i + 1:]]
    rates = {}
    with open(out / "power_pvalues.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model_x", "model_y", "pair", "n_x", "n_y", *POWER_DEPTHS])
        for a, b in combos:
            ps = {d: [] for d in POWER_DEPTHS}
            for p in range(pairs):
                r = power_pair(a, b, p, seed, S, external=external, executor=executor)
                w.writerow([a, b, p, r["n_x"], r["n_y"], *[repr(r[d]) for d in POWER_DEPTHS]])
                for d in POWER_DEPTHS:
                    ps[d].append(r[d])
            rates[f"{a} vs {b}"] = {d: float(np.mean(np.array(v) <= 0.05)) for d, v in ps.items()}
    with open(out / "power_rates.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["comparison", *POWER_DEPTHS])
        for k, v in rates.items():
            w.writerow([k, *[repr(v[d]) for d in POWER_DEPTHS]])
    (out / "manifest.json").write_text(json.dumps(
        {"experiment": "power-study", "models": models, "pairs": pairs, "S": S, "seed": seed,
         "depths": {k: v.to_dict() for k, v in POWER_DEPTHS.items()},
         "external": {k: str(v) for k, v in (external or {}).items()}, "rates": rates},
        indent=2) + "\n")
    return rates


EXPERIMENTS = ("table1", "particle-ddplots", "mixture", "power-study")
