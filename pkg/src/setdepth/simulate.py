"""Seeded generators for the synthetic set models.

Shapes are given in length units and centred on the grid centre; a pixel is
on iff its centre lies inside the continuous shape.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .raster import BinaryRaster, DoesNotFitError, Grid, SetSample


def make_rng(seed, *keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *keys])))


def _centres(grid: Grid):
    """Pixel-centre coordinates (y, x) in length units, origin at the grid centre."""
    cy, cx = grid.centre
    y = (np.arange(grid.height) - cy) * grid.pixel_size
    x = (np.arange(grid.width) - cx) * grid.pixel_size
    return y[:, None], x[None, :]


def _half_extent(grid: Grid):
    """Largest |y|, |x| of a pixel centre on the smaller side of the grid centre."""
    cy, cx = grid.centre
    return (min(cy, grid.height - 1 - cy) * grid.pixel_size,
            min(cx, grid.width - 1 - cx) * grid.pixel_size)


def _require_fit(extent_y: float, extent_x: float, grid: Grid, what: str):
    hy, hx = _half_extent(grid)
    # half a pixel of slack: a boundary exactly between two centres still fits
    if extent_y > hy + grid.pixel_size / 2 or extent_x > hx + grid.pixel_size / 2:
        raise DoesNotFitError(f"{what} of half-extent ({extent_y:g}, {extent_x:g}) does not fit {grid}")


def disc_mask(grid: Grid, r: float, cy: float = 0.0, cx: float = 0.0) -> np.ndarray:
    y, x = _centres(grid)
    return (y - cy) ** 2 + (x - cx) ** 2 <= r * r


def ellipse_mask(grid: Grid, a: float, b: float, theta: float = 0.0,
                 cy: float = 0.0, cx: float = 0.0) -> np.ndarray:
    """Semi-axis ``a`` along x rotated by ``theta``, semi-axis ``b`` across it."""
    y, x = _centres(grid)
    dy, dx = y - cy, x - cx
    c, s = math.cos(theta), math.sin(theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _stamp_disc(out: np.ndarray, grid: Grid, r: float, cy: float, cx: float,
                keep_tiny: bool = False):
    """OR a disc into ``out``, touching only its bounding box (clipped to the grid)."""
    ps = grid.pixel_size
    oy, ox = grid.centre
    r0 = max(0, int(math.floor((cy - r) / ps)) + oy)
    r1 = min(grid.height, int(math.ceil((cy + r) / ps)) + oy + 1)
    c0 = max(0, int(math.floor((cx - r) / ps)) + ox)
    c1 = min(grid.width, int(math.ceil((cx + r) / ps)) + ox + 1)
    if r0 < r1 and c0 < c1:
        yy = (np.arange(r0, r1) - oy)[:, None] * ps
        xx = (np.arange(c0, c1) - ox)[None, :] * ps
        hit = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        out[r0:r1, c0:c1] |= hit
        if hit.any() or not keep_tiny:
            return
    if keep_tiny:
        # a grain smaller than a pixel still marks the pixel holding its centre
        pr, pc = int(math.floor(cy / ps + 0.5)) + oy, int(math.floor(cx / ps + 0.5)) + ox
        if 0 <= pr < grid.height and 0 <= pc < grid.width:
            out[pr, pc] = True


def _stamp_ellipse(out, grid, a, b, theta, cy, cx):
    ps = grid.pixel_size
    oy, ox = grid.centre
    r = max(a, b)
    r0 = max(0, int(math.floor((cy - r) / ps)) + oy)
    r1 = min(grid.height, int(math.ceil((cy + r) / ps)) + oy + 1)
    c0 = max(0, int(math.floor((cx - r) / ps)) + ox)
    c1 = min(grid.width, int(math.ceil((cx + r) / ps)) + ox + 1)
    if r0 >= r1 or c0 >= c1:
        return
    dy = (np.arange(r0, r1) - oy)[:, None] * ps - cy
    dx = (np.arange(c0, c1) - ox)[None, :] * ps - cx
    c, s = math.cos(theta), math.sin(theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    out[r0:r1, c0:c1] |= (u / a) ** 2 + (v / b) ** 2 <= 1.0


# ---------------------------------------------------------------- probe shapes

PROBE_KINDS = ("disc", "ellipse", "square", "annulus", "disc_with_random_holes",
               "disc_plus_satellites", "disc_union")


def gen_probe_shape(kind: str, params: dict, grid: Grid) -> BinaryRaster:
    """Rasterise one named probe shape centred on ``grid``.

    ``disc_with_random_holes`` removes interior pixels of a disc independently
    with probability ``drop_prob``. ``disc_plus_satellites`` places ``count``
    satellite discs with centres at ``distance`` from the centre and
    uniformly random angles; a satellite too small to cover a pixel centre
    keeps the pixel holding its centre.
    """
    p = dict(params)
    ps = grid.pixel_size
    if kind == "disc":
        r = p["r"]
        _require_fit(r, r, grid, kind)
        mask = disc_mask(grid, r)
    elif kind == "ellipse":
        a, b, th = p["a"], p["b"], p.get("theta", 0.0)
        ext = max(a, b) if th else None
        _require_fit(ext or b, ext or a, grid, kind)
        mask = ellipse_mask(grid, a, b, th)
    elif kind == "square":
        h = p["side"] / 2
        _require_fit(h, h, grid, kind)
        y, x = _centres(grid)
        # half-open so that edges falling on pixel centres do not add a row
        mask = (y >= -h) & (y < h) & (x >= -h) & (x < h)
    elif kind == "annulus":
        ro, ri = p["r_out"], p["r_in"]
        if ri >= ro:
            raise ValueError("annulus needs r_in < r_out")
        _require_fit(ro, ro, grid, kind)
        y, x = _centres(grid)
        d2 = y * y + x * x
        mask = (d2 <= ro * ro) & (d2 >= ri * ri)
    elif kind == "disc_with_random_holes":
        r = p["r"]
        _require_fit(r, r, grid, kind)
        mask = disc_mask(grid, r)
        interior = mask.copy()
        interior[1:, :] &= mask[:-1, :]
        interior[:-1, :] &= mask[1:, :]
        interior[:, 1:] &= mask[:, :-1]
        interior[:, :-1] &= mask[:, 1:]
        rng = make_rng(p.get("seed", 0), 11)
        drop = interior & (rng.random(mask.shape) < p["drop_prob"])
        mask = mask & ~drop
    elif kind == "disc_plus_satellites":
        r, rs, cnt, dist = p["r_main"], p["r_sat"], int(p["count"]), p["distance"]
        _require_fit(dist + rs, dist + rs, grid, kind)
        mask = disc_mask(grid, r)
        rng = make_rng(p.get("seed", 0), 12)
        for ang in rng.uniform(0.0, 2 * math.pi, cnt):
            _stamp_disc(mask, grid, rs, dist * math.sin(ang), dist * math.cos(ang), keep_tiny=True)
    elif kind == "disc_union":
        r1, r2, off = p["r1"], p["r2"], p["offset"]
        _require_fit(max(r1, r2), max(r1, off + r2), grid, kind)
        mask = disc_mask(grid, r1) | disc_mask(grid, r2, 0.0, off)
    else:
        raise ValueError(f"unknown probe kind {kind!r}; choose from {PROBE_KINDS}")
    return BinaryRaster(mask, ps)


# ---------------------------------------------------------------- samples

def gen_disc_sample(M: int, lo: float, hi: float, grid: Grid, seed: int = 0,
                    sample_id: str = "discs") -> SetSample:
    _require_fit(hi, hi, grid, "disc")
    radii = make_rng(seed, 21).uniform(lo, hi, M)
    return SetSample([BinaryRaster(disc_mask(grid, r), grid.pixel_size) for r in radii],
                     [f"{i:04d}" for i in range(M)], sample_id)


@dataclass
class ParticleModelParams:
    mu_R: float
    sigma_R: float
    d: float
    lam: float
    mu_r: float
    sigma_r: float
    grid: Grid = field(default_factory=lambda: Grid(64, 64, 1.0))

    def __post_init__(self):
        if isinstance(self.grid, dict):
            self.grid = Grid(**self.grid)
        if self.sigma_R < 0 or self.sigma_r < 0 or self.lam < 0 or self.d < 0:
            raise ValueError("sigma_R, sigma_r, lambda and d must be non-negative")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict):
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


def gen_particle(params: ParticleModelParams, seed: int = 0) -> BinaryRaster:
    """One two-stage particle: a main ball plus Poisson many balls centred in its outer ring.

    Radii are normal draws truncated at zero. Satellite centres are uniform in
    area on the ring between ``max(R - d, 0)`` and ``R``. Parts beyond the
    grid are clipped; the grid must cover the three-sigma extent.
    """
    pr = params
    g = pr.grid
    reach = pr.mu_R + 3 * pr.sigma_R + pr.mu_r + 3 * pr.sigma_r
    _require_fit(reach, reach, g, "particle model")
    rng = make_rng(seed, 31)
    R = max(0.0, rng.normal(pr.mu_R, pr.sigma_R))
    count = rng.poisson(pr.lam)
    inner = max(R - pr.d, 0.0)
    rad = np.sqrt(rng.uniform(inner * inner, R * R, count))
    ang = rng.uniform(0.0, 2 * math.pi, count)
    sat_r = np.maximum(0.0, rng.normal(pr.mu_r, pr.sigma_r, count))
    out = np.zeros(g.shape, dtype=bool)
    _stamp_disc(out, g, R, 0.0, 0.0)
    for rr, aa, sr in zip(rad, ang, sat_r):
        _stamp_disc(out, g, sr, rr * math.sin(aa), rr * math.cos(aa))
    return BinaryRaster(out, g.pixel_size)


def gen_particle_sample(params: ParticleModelParams, M: int, seed: int = 0,
                        sample_id: str = "particles") -> SetSample:
    seeds = np.random.SeedSequence(int(seed)).generate_state(M, dtype=np.uint64)
    return SetSample([gen_particle(params, int(s)) for s in seeds],
                     [f"{i:04d}" for i in range(M)], sample_id)


@dataclass
class BooleanModelParams:
    window: Grid = field(default_factory=lambda: Grid(400, 400, 0.0625))
    intensity: float = 0.4
    grain: str = "disc"
    r_min: float = 0.5
    r_max: float = 1.0
    a_min: float = 0.5
    a_max: float = 1.0
    b_min: float = 0.2
    b_max: float = 0.7

    def __post_init__(self):
        if isinstance(self.window, dict):
            self.window = Grid(**self.window)
        if not self.intensity > 0:
            raise ValueError("intensity must be positive")
        if self.grain not in ("disc", "ellipse"):
            raise ValueError(f"grain must be 'disc' or 'ellipse', got {self.grain!r}")
        if self.r_min > self.r_max or self.a_min > self.a_max or self.b_min > self.b_max:
            raise ValueError("grain interval bounds out of order")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict):
        return cls(**d)


def boolean_germs(params: BooleanModelParams, rng: np.random.Generator):
    """Germ positions and grain parameters: arrays (y, x, a, b, theta)."""
    g = params.window
    ps = g.pixel_size
    cy, cx = g.centre
    ylo, yhi = (-cy - 0.5) * ps, (g.height - cy - 0.5) * ps
    xlo, xhi = (-cx - 0.5) * ps, (g.width - cx - 0.5) * ps
    count = rng.poisson(params.intensity * (yhi - ylo) * (xhi - xlo))
    y = rng.uniform(ylo, yhi, count)
    x = rng.uniform(xlo, xhi, count)
    if params.grain == "disc":
        a = rng.uniform(params.r_min, params.r_max, count)
        b = a
        th = np.zeros(count)
    else:
        a = rng.uniform(params.a_min, params.a_max, count)
        b = rng.uniform(params.b_min, params.b_max, count)
        th = rng.uniform(0.0, math.pi, count)
    return y, x, a, b, th


def gen_boolean_realisation(params: BooleanModelParams, seed: int = 0,
                            return_count: bool = False):
    g = params.window
    y, x, a, b, th = boolean_germs(params, make_rng(seed, 41))
    out = np.zeros(g.shape, dtype=bool)
    for yi, xi, ai, bi, ti in zip(y, x, a, b, th):
        if params.grain == "disc":
            _stamp_disc(out, g, ai, yi, xi)
        else:
            _stamp_ellipse(out, g, ai, bi, ti, yi, xi)
    r = BinaryRaster(out, g.pixel_size)
    return (r, len(y)) if return_count else r


def gen_mixture_disc_annulus(M: int, p_annulus: float = 0.2, disc_r=(8.0, 10.0),
                             ann_inner=(2.0, 4.0), ann_outer=(8.0, 10.0),
                             grid: Grid | None = None, seed: int = 0,
                             sample_id: str = "mixture") -> SetSample:
    """Discs, or with probability ``p_annulus`` annuli; ids end in ``-disc`` or ``-annulus``."""
    grid = grid or Grid(32, 32, 1.0)
    top = max(disc_r[1], ann_outer[1])
    _require_fit(top, top, grid, "mixture member")
    rng = make_rng(seed, 51)
    sets, ids = [], []
    y, x = _centres(grid)
    d2 = y * y + x * x
    for i in range(M):
        if rng.random() < p_annulus:
            ro = rng.uniform(*ann_outer)
            ri = rng.uniform(*ann_inner)
            sets.append(BinaryRaster((d2 <= ro * ro) & (d2 >= ri * ri), grid.pixel_size))
            ids.append(f"{i:04d}-annulus")
        else:
            r = rng.uniform(*disc_r)
            sets.append(BinaryRaster(d2 <= r * r, grid.pixel_size))
            ids.append(f"{i:04d}-disc")
    return SetSample(sets, ids, sample_id)


# ---------------------------------------------------------------- parameter files

def load_params(path):
    """Read a JSON parameter file into the matching params class by its ``model`` key."""
    d = json.loads(Path(path).read_text())
    model = d.pop("model", None)
    if model == "particle":
        return ParticleModelParams.from_dict(d)
    if model == "boolean":
        return BooleanModelParams.from_dict(d)
    raise ValueError(f"{path}: 'model' must be 'particle' or 'boolean', got {model!r}")


def save_params(path, params):
    d = params.to_dict()
    d["model"] = "particle" if isinstance(params, ParticleModelParams) else "boolean"
    Path(path).write_text(json.dumps(d, indent=2) + "\n")
