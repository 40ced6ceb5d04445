"""Binary rasters as closed sets, and the geometry every depth needs.

Pixel ``(r, c)`` of an ``h x w`` mask sits at the centred integer coordinate
``(r - h // 2, c - w // 2)``; all scaling and Minkowski arithmetic is done in
those coordinates. A pixel stands for the closed unit square around its
centre.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Iterator, Sequence

import numpy as np
from scipy import ndimage

from . import kernels


class GridMismatchError(ValueError):
    pass


class EmptySetError(ValueError):
    pass


class DoesNotFitError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    width: int
    height: int
    pixel_size: float = 1.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"grid dimensions must be positive, got {self.width}x{self.height}")
        if not self.pixel_size > 0:
            raise ValueError(f"pixel_size must be positive, got {self.pixel_size}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def centre(self) -> tuple[int, int]:
        return (self.height // 2, self.width // 2)


class BinaryRaster:
    """Immutable boolean mask with a physical pixel size."""

    __slots__ = ("_mask", "_pixel_size")

    def __init__(self, mask, pixel_size: float = 1.0):
        arr = np.array(mask, dtype=bool, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError("mask must have at least one pixel")
        if not pixel_size > 0:
            raise ValueError(f"pixel_size must be positive, got {pixel_size}")
        arr.setflags(write=False)
        self._mask = arr
        self._pixel_size = float(pixel_size)

    @classmethod
    def empty(cls, grid: Grid) -> "BinaryRaster":
        return cls(np.zeros(grid.shape, dtype=bool), grid.pixel_size)

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    @property
    def pixel_size(self) -> float:
        return self._pixel_size

    @property
    def height(self) -> int:
        return self._mask.shape[0]

    @property
    def width(self) -> int:
        return self._mask.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._mask.shape

    @property
    def grid(self) -> Grid:
        return Grid(self.width, self.height, self._pixel_size)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self._mask))

    @property
    def area(self) -> float:
        return self.count * self._pixel_size ** 2

    def is_empty(self) -> bool:
        return not self._mask.any()

    def is_full(self) -> bool:
        return bool(self._mask.all())

    def coords(self) -> np.ndarray:
        """Centred integer coordinates of the on-pixels, shape (k, 2)."""
        idx = np.argwhere(self._mask)
        return idx - np.array(self.grid.centre)

    def with_mask(self, mask) -> "BinaryRaster":
        return BinaryRaster(mask, self._pixel_size)

    def __eq__(self, other):
        if not isinstance(other, BinaryRaster):
            return NotImplemented
        return (self._pixel_size == other._pixel_size
                and self.shape == other.shape
                and np.array_equal(self._mask, other._mask))

    def __hash__(self):
        return hash((self.shape, self._pixel_size, self._mask.tobytes()))

    def __repr__(self):
        return (f"BinaryRaster({self.width}x{self.height}, pixel_size={self._pixel_size}, "
                f"on={self.count})")


@dataclass
class SetSample:
    """Ordered sets sharing one grid."""

    sets: list
    ids: list = None
    sample_id: str = "sample"

    def __post_init__(self):
        self.sets = list(self.sets)
        if self.ids is None:
            self.ids = [f"{i:04d}" for i in range(len(self.sets))]
        self.ids = [str(i) for i in self.ids]
        if len(self.ids) != len(self.sets):
            raise ValueError("ids and sets differ in length")
        if self.sets:
            g = self.sets[0].grid
            for s in self.sets[1:]:
                if s.grid != g:
                    raise GridMismatchError(f"sample mixes grids {g} and {s.grid}")

    @property
    def grid(self) -> Grid | None:
        return self.sets[0].grid if self.sets else None

    def __len__(self):
        return len(self.sets)

    def __getitem__(self, i):
        return self.sets[i]

    def __iter__(self) -> Iterator[BinaryRaster]:
        return iter(self.sets)

    def stack(self) -> np.ndarray:
        return np.stack([s.mask for s in self.sets]) if self.sets else np.zeros((0, 0, 0), bool)

    def subset(self, idx, sample_id=None) -> "SetSample":
        idx = list(idx)
        return SetSample([self.sets[i] for i in idx], [self.ids[i] for i in idx],
                         sample_id or self.sample_id)

    def __add__(self, other: "SetSample") -> "SetSample":
        return SetSample(self.sets + other.sets, self.ids + other.ids,
                         f"{self.sample_id}+{other.sample_id}")


@dataclass
class ComponentSet:
    components: list
    source_id: str = ""
    # per-component notes, e.g. "no-hole" from the closest-hole decomposition
    flags: list = field(default_factory=list)

    def __len__(self):
        return len(self.components)

    def to_sample(self, sample_id=None) -> SetSample:
        ids = [f"{self.source_id}:{i:04d}" if self.source_id else f"{i:04d}"
               for i in range(len(self.components))]
        return SetSample(self.components, ids, sample_id or self.source_id or "components")


def _check_same_grid(a: BinaryRaster, b: BinaryRaster):
    if a.grid != b.grid:
        raise GridMismatchError(f"grids differ: {a.grid} vs {b.grid}")


# ---------------------------------------------------------------- set algebra

def union(a: BinaryRaster, b: BinaryRaster) -> BinaryRaster:
    _check_same_grid(a, b)
    return a.with_mask(a.mask | b.mask)


def intersection(a: BinaryRaster, b: BinaryRaster) -> BinaryRaster:
    _check_same_grid(a, b)
    return a.with_mask(a.mask & b.mask)


def complement(a: BinaryRaster) -> BinaryRaster:
    return a.with_mask(~a.mask)


def dilate(a: BinaryRaster, rings: int = 1) -> BinaryRaster:
    """Grow by ``rings`` pixel rings (3x3 square element)."""
    if rings <= 0 or a.is_empty():
        return a
    return a.with_mask(ndimage.binary_dilation(a.mask, np.ones((3, 3), bool), iterations=rings))


def erode(a: BinaryRaster, rings: int = 1) -> BinaryRaster:
    """Shrink by ``rings`` pixel rings; pixels beyond the grid count as off."""
    if rings <= 0 or a.is_empty():
        return a
    return a.with_mask(ndimage.binary_erosion(a.mask, np.ones((3, 3), bool), iterations=rings,
                                              border_value=0))


def is_subset(a: BinaryRaster, b: BinaryRaster, tolerance_px: int = 0) -> bool:
    """True iff every on-pixel of ``a`` is on in ``b``.

    With ``tolerance_px > 0`` the test is against ``b`` dilated by that many
    pixel rings. This relaxes the exact set inclusion used by the depths.
    """
    _check_same_grid(a, b)
    if tolerance_px:
        b = dilate(b, tolerance_px)
    return not np.any(a.mask & ~b.mask)


def symmetric_difference_area(a: BinaryRaster, b: BinaryRaster) -> float:
    _check_same_grid(a, b)
    return np.count_nonzero(a.mask ^ b.mask) * a.pixel_size ** 2


# ---------------------------------------------------------------- distances

def squared_distance_transform(a: BinaryRaster) -> np.ndarray:
    """Squared distance in pixels from every pixel centre to the nearest on-pixel."""
    return kernels.sq_edt(a.mask)


def distance_transform(a: BinaryRaster) -> np.ndarray:
    """Euclidean distance (length units) to the nearest on-pixel of ``a``."""
    return np.sqrt(kernels.sq_edt(a.mask)) * a.pixel_size


def hausdorff_distance(a: BinaryRaster, b: BinaryRaster) -> float:
    _check_same_grid(a, b)
    if a.is_empty() or b.is_empty():
        raise EmptySetError("Hausdorff distance is undefined for an empty set")
    da = kernels.sq_edt(a.mask)
    db = kernels.sq_edt(b.mask)
    sq = max(db[a.mask].max(), da[b.mask].max())
    return math.sqrt(sq) * a.pixel_size


def signed_distance_field(a: BinaryRaster) -> np.ndarray:
    """Distance to ``a`` outside it, minus the distance to the complement inside.

    The complement is taken within the raster's own grid.
    """
    if a.is_empty() or a.is_full():
        raise EmptySetError("signed distance needs a set that is neither empty nor full")
    outside = np.sqrt(kernels.sq_edt(a.mask))
    inside = np.sqrt(kernels.sq_edt(~a.mask))
    return np.where(a.mask, -inside, outside) * a.pixel_size


# ---------------------------------------------------------------- placement

def _crop(a: BinaryRaster):
    """Bounding-box crop and the centred coordinate of its top-left pixel."""
    rows = np.flatnonzero(a.mask.any(axis=1))
    cols = np.flatnonzero(a.mask.any(axis=0))
    if rows.size == 0:
        return None
    r0, r1, c0, c1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    cr, cc = a.grid.centre
    return a.mask[r0:r1, c0:c1], int(r0 - cr), int(c0 - cc)


def _place(mask, r0: int, c0: int, shape) -> np.ndarray:
    """Write a crop whose top-left sits at centred ``(r0, c0)`` into a new grid, clipping."""
    h, w = shape
    out = np.zeros((h, w), dtype=bool)
    if mask is None:
        return out
    top, left = r0 + h // 2, c0 + w // 2
    mh, mw = mask.shape
    sr0, sc0 = max(0, -top), max(0, -left)
    dr0, dc0 = max(0, top), max(0, left)
    dr1, dc1 = min(h, top + mh), min(w, left + mw)
    if dr1 > dr0 and dc1 > dc0:
        out[dr0:dr1, dc0:dc1] = mask[sr0:sr0 + dr1 - dr0, sc0:sc0 + dc1 - dc0]
    return out


def _point_sum(crop_a, crop_b):
    """Minkowski sum of two crops; returns a crop in the same convention."""
    ma, ra, ca = crop_a
    mb, rb, cb = crop_b
    if np.count_nonzero(mb) > np.count_nonzero(ma):
        ma, ra, ca, mb, rb, cb = mb, rb, cb, ma, ra, ca
    shifts = np.argwhere(mb).astype(np.int64)
    h = ma.shape[0] + mb.shape[0] - 1
    w = ma.shape[1] + mb.shape[1] - 1
    out = kernels.dilate_points(np.ascontiguousarray(ma), shifts, h, w)
    return out, ra + rb, ca + cb


def minkowski_sum(a: BinaryRaster, b: BinaryRaster) -> BinaryRaster:
    """Pixelwise Minkowski sum; the output grid is ``(h_a + h_b, w_a + w_b)``."""
    if a.pixel_size != b.pixel_size:
        raise GridMismatchError("minkowski_sum needs equal pixel sizes")
    shape = (a.height + b.height, a.width + b.width)
    ca, cb = _crop(a), _crop(b)
    if ca is None or cb is None:
        return BinaryRaster(np.zeros(shape, bool), a.pixel_size)
    m, r0, c0 = _point_sum(ca, cb)
    return BinaryRaster(_place(m, r0, c0, shape), a.pixel_size)


def _half_open_bounds(y, num, den):
    """Integer pixel indices c with |y * den / num - c| <= 1/2, as (lo, hi)."""
    y = np.asarray(y, dtype=np.int64)
    t = 2 * y * den
    lo = -((-(t - num)) // (2 * num))  # ceil((t - num) / 2num)
    hi = (t + num) // (2 * num)
    return lo, hi


def scale(a: BinaryRaster, factor, shape=None) -> BinaryRaster:
    """Scale about the grid centre.

    An output pixel is on iff its centre divided by ``factor`` lies in the
    closed square of some on-pixel of ``a``. ``factor`` is turned into an
    exact fraction so the result does not depend on float rounding.
    """
    f = Fraction(factor).limit_denominator(10 ** 6) if not isinstance(factor, Fraction) else factor
    if f <= 0:
        raise ValueError(f"scale factor must be positive, got {factor}")
    shape = tuple(shape) if shape is not None else a.shape
    out = np.zeros(shape, dtype=bool)
    crop = _crop(a)
    if crop is None:
        return BinaryRaster(out, a.pixel_size)
    m, r0, c0 = crop
    num, den = f.numerator, f.denominator
    ys = np.arange(shape[0]) - shape[0] // 2
    xs = np.arange(shape[1]) - shape[1] // 2
    rlo, rhi = _half_open_bounds(ys, num, den)
    clo, chi = _half_open_bounds(xs, num, den)
    for rr in (rlo, rhi):
        ri = rr - r0
        rok = (ri >= 0) & (ri < m.shape[0])
        for cc in (clo, chi):
            ci = cc - c0
            cok = (ci >= 0) & (ci < m.shape[1])
            sub = m[np.clip(ri, 0, m.shape[0] - 1)][:, np.clip(ci, 0, m.shape[1] - 1)]
            out |= sub & rok[:, None] & cok[None, :]
    return BinaryRaster(out, a.pixel_size)


def _lattice_combination(crops, ns, total, shape):
    """Rasterise ``(1/total) * sum_l scale(F_l, n_l)`` onto a centred grid.

    ``scale(F, n)`` for integer ``n`` is ``n*C + box(n // 2)`` with ``C`` the
    on-pixel coordinates, so the Minkowski sum is the sparse lattice sum
    ``sum n_l C_l`` grown by a box of half-width ``sum n_l // 2``; dividing
    by ``total`` samples that lattice at multiples of ``total``.
    """
    acc = None
    half = 0
    for (m, r0, c0), n in zip(crops, ns):
        pts = np.argwhere(m).astype(np.int64) * n
        off = np.array([r0, c0], dtype=np.int64) * n
        half += n // 2
        if acc is None:
            ext = pts.max(axis=0) + 1
            q = np.zeros(tuple(ext), dtype=bool)
            q[pts[:, 0], pts[:, 1]] = True
            acc = (q, off)
            continue
        q, qoff = acc
        span = pts.max(axis=0)
        q = kernels.dilate_points(q, pts, q.shape[0] + span[0], q.shape[1] + span[1])
        acc = (q, qoff + off)
    q, qoff = acc
    if half:
        q = np.pad(q, half)
        qoff = qoff - half
        q = ndimage.maximum_filter(q, size=2 * half + 1, mode="constant", cval=0)
    # output pixel y is on iff q[total * y - qoff] is on
    lo = -((-qoff) // total)
    hi = (qoff + np.array(q.shape) - 1) // total
    if np.any(hi < lo):
        return np.zeros(shape, dtype=bool)
    start = lo * total - qoff
    sampled = q[start[0]::total, start[1]::total][: hi[0] - lo[0] + 1, : hi[1] - lo[1] + 1]
    return _place(sampled, int(lo[0]), int(lo[1]), shape)


def _integer_weights(weights, tol=1e-9):
    fr = [Fraction(w).limit_denominator(1000) for w in weights]
    if any(f < 0 for f in fr):
        raise ValueError("weights must be non-negative")
    if abs(sum(weights) - 1.0) > tol or sum(fr) != 1:
        raise ValueError(f"weights must sum to 1, got {sum(weights)!r}")
    total = reduce(math.lcm, (f.denominator for f in fr), 1)
    return [int(f * total) for f in fr], total


def minkowski_convex_combination(sets: Sequence[BinaryRaster], weights,
                                 shape=None) -> BinaryRaster:
    """``p_1 F_1 + ... + p_m F_m`` on the grid of the first set (or ``shape``).

    Weights are read as exact fractions ``n_l / N`` and the result equals
    ``scale(sum_l scale(F_l, n_l), 1/N)``.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("need at least one set")
    if len(weights) != len(sets):
        raise ValueError("one weight per set")
    ps = {s.pixel_size for s in sets}
    if len(ps) != 1:
        raise GridMismatchError("sets must share a pixel size")
    ns, total = _integer_weights(weights)
    shape = tuple(shape) if shape is not None else sets[0].shape
    used = [(s, n) for s, n in zip(sets, ns) if n > 0]
    crops = [_crop(s) for s, _ in used]
    if any(c is None for c in crops):
        return BinaryRaster(np.zeros(shape, bool), sets[0].pixel_size)
    mask = _lattice_combination(crops, [n for _, n in used], total, shape)
    return BinaryRaster(mask, sets[0].pixel_size)


def _average_crops(crops, shape, max_accum_pixels):
    n = len(crops)
    ext = np.sum([np.array(c[0].shape) for c in crops], axis=0)
    if max_accum_pixels is None or n < 4 or int(ext[0]) * int(ext[1]) <= max_accum_pixels:
        return _lattice_combination(crops, [1] * n, n, shape)
    # fold: average equal-count groups first, then average the group means
    groups = max(2, int(round(math.sqrt(n))))
    parts = np.array_split(np.arange(n), groups)
    big = tuple(int(v) for v in ext // groups + 3)
    means = []
    for p in parts:
        sub = _average_crops([crops[i] for i in p], big, max_accum_pixels)
        c = _crop(BinaryRaster(sub))
        if c is None:
            return np.zeros(shape, dtype=bool)
        means.append(c)
    return _lattice_combination(means, [1] * len(means), len(means), shape)


def minkowski_average(sets: Sequence[BinaryRaster], shape=None,
                      max_accum_pixels: int | None = 4_000_000) -> BinaryRaster:
    """``(A_1 + ... + A_n) / n``: full-resolution point sum, then one rescale.

    When the running sum would exceed ``max_accum_pixels`` the sets are
    averaged in groups first and the group means averaged with equal
    weight. That is exact in the continuum and only approximately so on
    the raster when the groups differ in size.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("minkowski_average of an empty list")
    if len({s.pixel_size for s in sets}) != 1:
        raise GridMismatchError("sets must share a pixel size")
    shape = tuple(shape) if shape is not None else sets[0].shape
    crops = [_crop(s) for s in sets]
    if any(c is None for c in crops):
        return BinaryRaster(np.zeros(shape, bool), sets[0].pixel_size)
    return BinaryRaster(_average_crops(crops, shape, max_accum_pixels), sets[0].pixel_size)


# ---------------------------------------------------------------- components

def _structure(connectivity: int):
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    if connectivity == 8:
        return np.ones((3, 3), dtype=bool)
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def label(a: BinaryRaster, connectivity: int = 8):
    lab, n = ndimage.label(a.mask, structure=_structure(connectivity))
    return lab, n


def centre_of_mass_index(mask) -> tuple[int, int]:
    """Centre of mass in pixel indices, rounded half-up."""
    idx = np.argwhere(mask)
    if idx.size == 0:
        raise EmptySetError("centre of mass of an empty set")
    m = idx.mean(axis=0)
    return int(math.floor(m[0] + 0.5)), int(math.floor(m[1] + 0.5))


def centroid_centre(a: BinaryRaster, target: Grid) -> BinaryRaster:
    """Translate so the rounded centre of mass lands on the target grid's centre."""
    if a.is_empty():
        raise EmptySetError("cannot centre an empty set")
    cr, cc = centre_of_mass_index(a.mask)
    tr, tc = target.centre
    idx = np.argwhere(a.mask) + np.array([tr - cr, tc - cc])
    if (idx.min() < 0 or idx[:, 0].max() >= target.height
            or idx[:, 1].max() >= target.width):
        raise DoesNotFitError(f"set of extent {np.ptp(idx, axis=0) + 1} does not fit {target}")
    out = np.zeros(target.shape, dtype=bool)
    out[idx[:, 0], idx[:, 1]] = True
    return BinaryRaster(out, a.pixel_size)


def fitting_grid(masks, pixel_size: float = 1.0, minimum: int = 1) -> Grid:
    """Smallest odd square grid holding every mask centred at its centre of mass."""
    need = 0
    for m in masks:
        cr, cc = centre_of_mass_index(m)
        idx = np.argwhere(m)
        need = max(need, cr - idx[:, 0].min(), idx[:, 0].max() - cr,
                   cc - idx[:, 1].min(), idx[:, 1].max() - cc)
    size = max(2 * int(need) + 1, minimum)
    return Grid(size, size, pixel_size)


def connected_components(a: BinaryRaster, connectivity: int = 8,
                         drop_border_touching: bool = False,
                         component_grid: Grid | None = None,
                         source_id: str = "") -> ComponentSet:
    """Label, optionally drop border-touching components, centre each one.

    Without ``component_grid`` the smallest odd square grid that fits every
    retained component is used.
    """
    lab, n = label(a, connectivity)
    if n == 0:
        return ComponentSet([], source_id)
    border = set(np.unique(np.concatenate([lab[0], lab[-1], lab[:, 0], lab[:, -1]]))) - {0}
    slices = ndimage.find_objects(lab)
    crops = []
    for i, sl in enumerate(slices, start=1):
        if drop_border_touching and i in border:
            continue
        crops.append(lab[sl] == i)
    if not crops:
        return ComponentSet([], source_id)
    grid = component_grid or fitting_grid(crops, a.pixel_size)
    comps = [centroid_centre(BinaryRaster(c, a.pixel_size), grid) for c in crops]
    return ComponentSet(comps, source_id)
