"""Depths of a set with respect to a sample of sets.

Every estimator is evaluated through :class:`DepthEngine`, which holds a pool
of rasters and caches per-set features (packed bits, distance transforms,
signed distance fields). A query names probe indices and reference indices
within the pool, so permutation tests can re-split one pool cheaply without
sharing anything between the two halves beyond per-set features.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .raster import (BinaryRaster, EmptySetError, GridMismatchError, SetSample, dilate, erode,
                     minkowski_average, minkowski_convex_combination)

KINDS = ("infimal", "band", "signed_distance", "hausdorff_typeB", "lebesgue_typeB",
         "expectation", "simplicial")

_STREAM = {"band": 1, "simplicial": 2, "expectation": 3}


class DepthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DepthEstimatorConfig:
    kind: str = "band"
    n: int = 3
    s: int = 1000
    m: int = 3
    N: int = 5
    S_exp: int = 20
    max_m: int = 20
    fd_order: int = 1
    seed: int = 0
    # pixel rings of slack for the Minkowski-based subset tests (0 = exact)
    tolerance_px: int = 0
    # draw band/simplicial subsamples with replacement
    replace: bool = False
    max_combinations: int = 10_000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DepthConfigError(f"unknown depth kind {self.kind!r}; choose from {KINDS}")
        for name in ("n", "s", "m", "N", "S_exp", "max_m"):
            if getattr(self, name) < 1:
                raise DepthConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.fd_order not in (1, 2, 3):
            raise DepthConfigError(f"fd_order must be 1, 2 or 3, got {self.fd_order}")
        if self.tolerance_px < 0:
            raise DepthConfigError("tolerance_px must be >= 0")

    def check_sample_size(self, M: int):
        if M < 1:
            raise DepthConfigError("reference sample is empty")
        if self.kind == "band" and self.n > M and not self.replace:
            raise DepthConfigError(f"band depth needs n <= M, got n={self.n}, M={M}")
        if self.kind == "simplicial" and self.m > M and not self.replace:
            raise DepthConfigError(f"simplicial depth needs m <= M, got m={self.m}, M={M}")

    def with_seed(self, seed: int) -> "DepthEstimatorConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DepthEstimatorConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise DepthConfigError(f"unknown depth config keys {sorted(unknown)}")
        return cls(**d)

    def summary(self) -> str:
        return (f"kind={self.kind} n={self.n} s={self.s} m={self.m} N={self.N} "
                f"S_exp={self.S_exp} max_m={self.max_m} fd_order={self.fd_order} "
                f"seed={self.seed} tolerance_px={self.tolerance_px} replace={self.replace}")


@dataclass
class DepthVector:
    values: np.ndarray
    reference_sample_id: str
    config: DepthEstimatorConfig
    set_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.size and (self.values.min() < 0 or self.values.max() > 1):
            raise ValueError("depth values must lie in [0, 1]")
        if not self.set_ids:
            self.set_ids = [f"{i:04d}" for i in range(len(self.values))]

    def csv_text(self) -> str:
        lines = [f"# reference={self.reference_sample_id} {self.config.summary()}", "set_id,depth"]
        lines += [f"{i},{v!r}" for i, v in zip(self.set_ids, self.values.tolist())]
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        Path(path).write_text(self.csv_text())

    @classmethod
    def from_csv(cls, path) -> "DepthVector":
        text = Path(path).read_text().splitlines()
        header = text[0].lstrip("# ").split()
        kv = dict(tok.split("=", 1) for tok in header)
        ref = kv.pop("reference")
        conv = {f.name: f.type for f in fields(DepthEstimatorConfig)}
        cfg = {}
        for k, v in kv.items():
            t = conv[k]
            cfg[k] = v if t == "str" else (v == "True" if t == "bool" else int(v))
        ids, vals = [], []
        for line in text[2:]:
            i, v = line.rsplit(",", 1)
            ids.append(i)
            vals.append(float(v))
        return cls(np.array(vals), ref, DepthEstimatorConfig(**cfg), ids)


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *keys])))


def draw_subsets(M: int, n: int, s: int, seed: int, stream: int, replace_: bool = False):
    """Index subsets for the U-statistic or its bootstrap approximation.

    All ``C(M, n)`` subsets when that is at most ``s``; otherwise ``s``
    random draws, each without repetition unless ``replace_``.
    """
    if not replace_ and math.comb(M, n) <= s:
        return np.array(list(itertools.combinations(range(M), n)), dtype=np.int64).reshape(-1, n)
    rng = rng_for(seed, stream, n)
    if replace_:
        return rng.integers(0, M, size=(s, n))
    return np.argsort(rng.random((s, M)), axis=1)[:, :n]


def weight_grid(m: int, N: int):
    """All ``(n_1, ..., n_m)`` of non-negative integers summing to ``N``."""
    out = []
    for bars in itertools.combinations(range(N + m - 1), m - 1):
        prev, parts = -1, []
        for b in bars:
            parts.append(b - prev - 1)
            prev = b
        parts.append(N + m - 1 - prev - 1)
        out.append(parts)
    return np.array(out, dtype=np.int64).reshape(-1, m)


def _gradient_magnitude(f: np.ndarray, h: float) -> np.ndarray:
    p = np.pad(f, 1, mode="edge")
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2 * h)
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) / (2 * h)
    return np.sqrt(gy * gy + gx * gx)


def _laplacian(f: np.ndarray, h: float) -> np.ndarray:
    p = np.pad(f, 1, mode="edge")
    # grouping keeps the value identical under 90-degree rotations and flips
    return ((p[:-2, 1:-1] + p[2:, 1:-1]) + (p[1:-1, :-2] + p[1:-1, 2:]) - 4 * f) / (h * h)


class DepthEngine:
    """Cached depth evaluation over a fixed pool of rasters on one grid."""

    def __init__(self, pool: Sequence[BinaryRaster], config: DepthEstimatorConfig):
        pool = list(pool)
        if not pool:
            raise DepthConfigError("empty pool")
        g = pool[0].grid
        for r in pool:
            if r.grid != g:
                raise GridMismatchError(f"pool mixes grids {g} and {r.grid}")
        self.pool = pool
        self.grid = g
        self.config = config
        self._stack = np.stack([r.mask.ravel() for r in pool])
        self._cache: dict = {}

    # ------------------------------------------------------------ features
    def _cached(self, key, build):
        v = self._cache.get(key)
        if v is None:
            v = build()
            self._cache[key] = v
        return v

    def _active(self):
        return self._cached("active", lambda: np.flatnonzero(self._stack.any(axis=0)))

    def _packed(self):
        return self._cached("packed", lambda: self._pack_masks(self._stack))

    def _pack_masks(self, masks):
        # last column flags pixels outside the pool's support: a bound that
        # covers one of them can never sit inside a pool member
        masks = np.asarray(masks)
        act = self._active()
        outside = masks.sum(axis=1) > masks[:, act].sum(axis=1)
        return kernels.pack_rows(np.column_stack([masks[:, act], outside]))

    def _sq_edts(self):
        def build():
            out = np.empty((len(self.pool), self._stack.shape[1]))
            for i, r in enumerate(self.pool):
                if r.is_empty():
                    raise EmptySetError(f"Hausdorff depth needs non-empty sets (set {i} is empty)")
                out[i] = kernels.sq_edt(r.mask).ravel()
            return out
        return self._cached("sq_edt", build)

    def _fields(self):
        def build():
            from .raster import signed_distance_field
            h = self.grid.pixel_size
            out = np.empty((len(self.pool), self._stack.shape[1]))
            for i, r in enumerate(self.pool):
                f = signed_distance_field(r)
                if self.config.fd_order == 2:
                    f = _gradient_magnitude(f, h)
                elif self.config.fd_order == 3:
                    f = _laplacian(f, h)
                out[i] = f.ravel()
            return out
        return self._cached(("fields", self.config.fd_order), build)

    def _field_ranks(self):
        # pixel-major dense ranks; any reference subset's counts follow from these
        return self._cached(("field_ranks", self.config.fd_order),
                            lambda: kernels.dense_ranks(np.ascontiguousarray(self._fields().T)))

    # ------------------------------------------------------------ estimators
    def depths(self, probes, reference, seed: int | None = None) -> np.ndarray:
        """Depth of each pool member in ``probes`` w.r.t. the pool members in ``reference``."""
        probes = np.asarray(probes, dtype=np.int64).reshape(-1)
        reference = np.asarray(reference, dtype=np.int64).reshape(-1)
        cfg = self.config if seed is None else self.config.with_seed(seed)
        cfg.check_sample_size(len(reference))
        if probes.size == 0:
            return np.zeros(0)
        return getattr(self, "_" + cfg.kind)(probes, reference, cfg)

    def _infimal(self, probes, ref, cfg):
        M = len(ref)
        cnt = self._stack[ref].sum(axis=0, dtype=np.int64)
        out = np.empty(len(probes))
        for j, k in enumerate(probes):
            f = self._stack[k]
            worst = min(cnt[f].min(initial=M), (M - cnt[~f]).min(initial=M))
            out[j] = worst / M
        return out

    def _band(self, probes, ref, cfg):
        subsets = ref[draw_subsets(len(ref), cfg.n, cfg.s, cfg.seed, _STREAM["band"], cfg.replace)]
        packed = self._packed()
        rows = packed[subsets]
        lower = np.bitwise_and.reduce(rows, axis=1)[:, None, :]
        upper = np.bitwise_or.reduce(rows, axis=1)[:, None, :]
        counts = kernels.sandwich_counts(np.ascontiguousarray(lower), np.ascontiguousarray(upper),
                                         np.ascontiguousarray(packed[probes]))
        return counts / len(subsets)

    def _hausdorff_typeB(self, probes, ref, cfg):
        d2 = self._sq_edts()
        masks = self._stack
        out = np.empty(len(probes))
        for j, k in enumerate(probes):
            f = masks[k]
            to_ref = d2[ref][:, f].max(axis=1)
            to_f = np.where(masks[ref], d2[k][None, :], 0.0).max(axis=1)
            dist = np.sqrt(np.maximum(to_ref, to_f)) * self.grid.pixel_size
            out[j] = 1.0 / (1.0 + dist.mean())
        return out

    def _lebesgue_typeB(self, probes, ref, cfg):
        ps2 = self.grid.pixel_size ** 2
        out = np.empty(len(probes))
        for j, k in enumerate(probes):
            diff = np.count_nonzero(self._stack[ref] ^ self._stack[k], axis=1) * ps2
            out[j] = 1.0 / (1.0 + diff.mean())
        return out

    def _signed_distance(self, probes, ref, cfg):
        ranks = self._field_ranks()
        counts = kernels.rank_depth_counts(ranks, np.asarray(ref, dtype=np.int64),
                                           np.asarray(probes, dtype=np.int64))
        return counts / (len(ref) * ranks.shape[0])

    def _bounds_pair(self, lower_masks, upper_masks, tol):
        if tol:
            lower_masks = [erode(BinaryRaster(m, self.grid.pixel_size), tol).mask for m in lower_masks]
            upper_masks = [dilate(BinaryRaster(m, self.grid.pixel_size), tol).mask for m in upper_masks]
        lo = self._pack_masks([m.ravel() for m in lower_masks])
        up = self._pack_masks([m.ravel() for m in upper_masks])
        return lo, up

    def _simplicial(self, probes, ref, cfg):
        weights = weight_grid(cfg.m, cfg.N) if math.comb(cfg.N + cfg.m - 1, cfg.m - 1) \
            <= cfg.max_combinations else None
        if weights is None:
            raise DepthConfigError(
                f"C(N+m-1, m-1) = {math.comb(cfg.N + cfg.m - 1, cfg.m - 1)} weight vectors exceed "
                f"max_combinations={cfg.max_combinations}")
        picks = ref[draw_subsets(len(ref), cfg.m, cfg.s, cfg.seed, _STREAM["simplicial"],
                                 cfg.replace)]
        lower_all, upper_all = [], []
        for sub in picks:
            key = ("comb", tuple(sub.tolist()), cfg.N, cfg.tolerance_px)
            lo, up = self._cached(key, lambda sub=sub: self._combination_bounds(sub, weights, cfg))
            lower_all.append(lo)
            upper_all.append(up)
        lower = np.ascontiguousarray(np.stack(lower_all))
        upper = np.ascontiguousarray(np.stack(upper_all))
        counts = kernels.sandwich_counts(lower, upper, np.ascontiguousarray(self._packed()[probes]))
        return counts / len(picks)

    def _combination_bounds(self, sub, weights, cfg):
        sets = [self.pool[i] for i in sub]
        N = cfg.N
        combos = []
        for w in weights:
            nz = np.flatnonzero(w)
            combos.append(minkowski_convex_combination(
                [sets[i] for i in nz], [w[i] / N for i in nz]).mask)
        return self._bounds_pair(combos, combos, cfg.tolerance_px)

    def expectation_bounds(self, ref, m: int, cfg: DepthEstimatorConfig):
        """Minkowski averages of intersections and unions of resampled m-tuples."""
        key = ("exp", tuple(np.asarray(ref).tolist()), m, cfg.seed, cfg.S_exp)

        def build():
            rng = rng_for(cfg.seed, _STREAM["expectation"], m)
            tuples = np.asarray(ref)[rng.integers(0, len(ref), size=(cfg.S_exp, m))]
            ps = self.grid.pixel_size
            inter = [BinaryRaster(np.logical_and.reduce(self._stack[t]).reshape(self.grid.shape), ps)
                     for t in tuples]
            uni = [BinaryRaster(np.logical_or.reduce(self._stack[t]).reshape(self.grid.shape), ps)
                   for t in tuples]
            return minkowski_average(inter).mask, minkowski_average(uni).mask
        return self._cached(key, build)

    def _expectation(self, probes, ref, cfg):
        max_m = cfg.max_m
        out = np.zeros(len(probes))
        pending = np.arange(len(probes))
        probe_bits = self._packed()[probes]
        for m in range(1, max_m + 1):
            if pending.size == 0:
                break
            e_in, e_un = self.expectation_bounds(ref, m, cfg)
            key = ("expb", tuple(np.asarray(ref).tolist()), m, cfg.seed, cfg.S_exp, cfg.tolerance_px)
            lo, up = self._cached(key, lambda: self._bounds_pair([e_in], [e_un], cfg.tolerance_px))
            hit = kernels.sandwich_counts(lo[None], up[None],
                                          np.ascontiguousarray(probe_bits[pending])) > 0
            out[pending[hit]] = 1.0 / m
            pending = pending[~hit]
        return out


# ---------------------------------------------------------------- public API

def depth_values(probes: Sequence[BinaryRaster], sample: SetSample | Sequence[BinaryRaster],
                 config: DepthEstimatorConfig) -> np.ndarray:
    """Depth of each probe with respect to ``sample``."""
    ref = list(sample)
    probes = list(probes)
    if not ref:
        raise DepthConfigError("reference sample is empty")
    engine = DepthEngine(ref + probes, config)
    return engine.depths(np.arange(len(ref), len(ref) + len(probes)), np.arange(len(ref)))


def sample_depths(sample: SetSample, config: DepthEstimatorConfig,
                  reference: SetSample | None = None) -> DepthVector:
    """Depth of every member of ``sample`` against ``reference`` (itself by default)."""
    if reference is None:
        engine = DepthEngine(list(sample), config)
        idx = np.arange(len(sample))
        vals = engine.depths(idx, idx)
        ref_id = sample.sample_id
    else:
        vals = depth_values(list(sample), reference, config)
        ref_id = reference.sample_id
    return DepthVector(vals, ref_id, config, list(sample.ids))


def _single(F, sample, config):
    return float(depth_values([F], sample, config)[0])


def depth_infimal(F, sample) -> float:
    return _single(F, sample, DepthEstimatorConfig(kind="infimal"))


def depth_band(F, sample, n: int = 3, s: int = 1000, seed: int = 0, replace: bool = False) -> float:
    return _single(F, sample, DepthEstimatorConfig(kind="band", n=n, s=s, seed=seed, replace=replace))


def depth_signed_distance(F, sample, fd_order: int = 1) -> float:
    return _single(F, sample, DepthEstimatorConfig(kind="signed_distance", fd_order=fd_order))


def depth_typeB(F, sample, metric: str = "hausdorff") -> float:
    kinds = {"hausdorff": "hausdorff_typeB", "lebesgue_symdiff": "lebesgue_typeB",
             "lebesgue": "lebesgue_typeB"}
    if metric not in kinds:
        raise DepthConfigError(f"unknown metric {metric!r}")
    return _single(F, sample, DepthEstimatorConfig(kind=kinds[metric]))


def depth_expectation(F, sample, max_m: int = 20, S_exp: int = 20, seed: int = 0,
                      tolerance_px: int = 0) -> float:
    return _single(F, sample, DepthEstimatorConfig(kind="expectation", max_m=max_m, S_exp=S_exp,
                                                   seed=seed, tolerance_px=tolerance_px))


def depth_simplicial(F, sample, m: int = 3, s: int = 100, N: int = 5, seed: int = 0,
                     tolerance_px: int = 0) -> float:
    return _single(F, sample, DepthEstimatorConfig(kind="simplicial", m=m, s=s, N=N, seed=seed,
                                                   tolerance_px=tolerance_px))


OUTLIER_THRESHOLD = 0.05


def flag_outliers(sample: SetSample, config: DepthEstimatorConfig,
                  threshold: float = OUTLIER_THRESHOLD, leave_one_out: bool = False):
    """Indices whose depth within the sample falls below ``threshold``.

    By default each set stays in its own reference sample.
    """
    if len(sample) == 0:
        return []
    engine = DepthEngine(list(sample), config)
    idx = np.arange(len(sample))
    if leave_one_out:
        vals = np.array([engine.depths([i], np.delete(idx, i))[0] for i in idx])
    else:
        vals = engine.depths(idx, idx)
    return [int(i) for i in np.flatnonzero(vals < threshold)]
