"""Two-sample tests on depths: DD-plot regression and the global envelope test."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .ddplot import DDPlot
from .depth import DepthEngine, DepthEstimatorConfig
from .raster import SetSample

_EPS = 1e-9


# ---------------------------------------------------------------- regression test

@dataclass
class RegressionTestResult:
    beta0_hat: float
    beta1_hat: float
    p0: float
    p1: float
    p_adjusted: float
    bootstrap_B: int
    seed: int = 0

    def rejects(self, alpha: float = 0.05) -> bool:
        lo, hi = sorted((self.p0, self.p1))
        return lo < alpha / 2 or hi < alpha

    def to_dict(self):
        return {"beta0_hat": self.beta0_hat, "beta1_hat": self.beta1_hat, "p0": self.p0,
                "p1": self.p1, "p_adjusted": self.p_adjusted, "bootstrap_B": self.bootstrap_B,
                "seed": self.seed}


def _ols_hc0(x, y):
    """Row-wise OLS on (B, n) arrays; returns b0, b1, se0, se1 (HC0 sandwich)."""
    n = x.shape[1]
    mx = x.mean(axis=1, keepdims=True)
    my = y.mean(axis=1, keepdims=True)
    dx = x - mx
    sxx = (dx * dx).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        b1 = (dx * (y - my)).sum(axis=1) / sxx
        b0 = my[:, 0] - b1 * mx[:, 0]
        e2 = (y - b0[:, None] - b1[:, None] * x) ** 2
        # (X'X)^{-1} X' diag(e^2) X (X'X)^{-1} written out for the 2x2 case
        sx = x.sum(axis=1)
        sx2 = (x * x).sum(axis=1)
        det = n * sx2 - sx * sx
        inv = np.stack([np.stack([sx2, -sx], -1), np.stack([-sx, np.full_like(sx, n)], -1)], -2)
        inv = inv / det[:, None, None]
        m00 = e2.sum(axis=1)
        m01 = (e2 * x).sum(axis=1)
        m11 = (e2 * x * x).sum(axis=1)
        meat = np.stack([np.stack([m00, m01], -1), np.stack([m01, m11], -1)], -2)
        cov = inv @ meat @ inv
        se0 = np.sqrt(np.maximum(cov[:, 0, 0], 0.0))
        se1 = np.sqrt(np.maximum(cov[:, 1, 1], 0.0))
    return b0, b1, se0, se1, sxx


def _t(num, se):
    """num / se, with values within 1e-12 of zero treated as zero and 0/0 read as 0."""
    num = np.asarray(num, dtype=np.float64)
    se = np.asarray(se, dtype=np.float64)
    num = np.where(np.abs(num) <= 1e-12, 0.0, num)
    se = np.where(se <= 1e-12, 0.0, se)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(se > 0, num / se, np.where(num == 0, 0.0, np.sign(num) * np.inf))


def regression_test(plot: DDPlot | tuple, B: int = 1000, seed: int = 0) -> RegressionTestResult:
    """Bootstrap-t test of intercept 0 and slope 1 for depth_y on depth_x.

    Pairs are resampled with replacement and standard errors are
    heteroskedasticity-robust (HC0). The two p-values are combined by
    Holm-Bonferroni: ``min(2 p_(1), p_(2))``.
    """
    if isinstance(plot, DDPlot):
        x, y = plot.depth_x, plot.depth_y
    else:
        x, y = (np.asarray(v, dtype=np.float64) for v in plot)
    n = len(x)
    if n < 3:
        raise ValueError("regression test needs at least 3 points")
    if np.ptp(x) == 0:
        raise ValueError("degenerate regressor: all depth_x values are equal")
    b0, b1, se0, se1, _ = (v[0] for v in _ols_hc0(x[None, :], y[None, :]))
    t0 = _t(b0 - 0.0, se0)
    t1 = _t(b1 - 1.0, se1)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 71])))
    idx = rng.integers(0, n, size=(B, n))
    bb0, bb1, bse0, bse1, sxx = _ols_hc0(x[idx], y[idx])
    ok = sxx > 0
    ts0 = _t(bb0[ok] - b0, bse0[ok])
    ts1 = _t(bb1[ok] - b1, bse1[ok])
    used = int(ok.sum())
    if used == 0:
        raise ValueError("every bootstrap resample had a constant regressor")
    p0 = float(np.count_nonzero(np.abs(ts0) >= abs(t0)) / used)
    p1 = float(np.count_nonzero(np.abs(ts1) >= abs(t1)) / used)
    lo, hi = sorted((p0, p1))
    return RegressionTestResult(float(b0), float(b1), p0, p1, float(min(2 * lo, hi)), B, int(seed))


# ---------------------------------------------------------------- ranks

def extreme_ranks(T: np.ndarray):
    """Pointwise two-sided ranks R_i(k) (min-rank ties) and extreme ranks R_i."""
    T = np.asarray(T, dtype=np.float64)
    up = rankdata(T, method="min", axis=0)
    down = rankdata(-T, method="min", axis=0)
    Rk = np.minimum(up, down)
    return Rk, Rk.min(axis=1)


def continuous_ranks(T: np.ndarray) -> np.ndarray:
    """Ascending continuous ranks c_i(k), averaged over tied values."""
    T = np.asarray(T, dtype=np.float64)
    n, K = T.shape
    S = n - 1
    out = np.empty_like(T)
    for k in range(K):
        col = T[:, k]
        order = np.argsort(col, kind="stable")
        t = col[order]
        if t[-1] == t[0]:
            out[:, k] = (S + 1) / 2
            continue
        c = np.empty(n)
        c[0] = math.exp(-(t[1] - t[0]) / (t[-1] - t[0]))
        den = t[-2] - t[0]
        # den == 0 forces t[-1] > t[-2], so the exponential vanishes
        c[-1] = S + 1 - (math.exp(-(t[-1] - t[-2]) / den) if den > 0 else 0.0)
        if n > 2:
            num = t[1:-1] - t[:-2]
            den = t[2:] - t[:-2]
            frac = np.divide(num, den, out=np.full(n - 2, 0.5), where=den > 0)
            c[1:-1] = np.arange(1, n - 1) + frac
        # tied values share the mean of their continuous ranks
        _, inv = np.unique(t, return_inverse=True)
        c = np.bincount(inv, weights=c)[inv] / np.bincount(inv)[inv]
        out[order, k] = c
    return out


def rank_measures(T: np.ndarray):
    """Extreme ranks R_i and area measures a_i of the rows of ``T``.

    Smaller means more extreme for both.
    """
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 2 or T.shape[0] < 2:
        raise ValueError("need a (S+1) x K matrix with S >= 1")
    n, K = T.shape
    _, R = extreme_ranks(T)
    c = continuous_ranks(T)
    C = np.minimum(c, n - c)
    Rcol = R[:, None].astype(np.float64)
    deficit = np.where(C < Rcol, Rcol - C, 0.0).sum(axis=1)
    a = (R - deficit / K) / n
    return R, a


def p_value(a: np.ndarray) -> float:
    return float(np.count_nonzero(a < a[0]) / len(a))


def build_envelope(T: np.ndarray, a: np.ndarray, alpha: float):
    """Envelope over the curves that are not among the alpha-fraction most extreme.

    Curve j is kept iff more than ``alpha (S+1)`` curves have a strictly
    smaller area measure, so row 1 is kept exactly when its p-value
    exceeds ``alpha``. Returns (T_low, T_upp, responsible columns of row 1).
    """
    T = np.asarray(T, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    n = len(a)
    below = np.searchsorted(np.sort(a), a, side="left")
    keep = below > alpha * n + _EPS
    if not keep.any():
        keep = a == a.max()
    low = T[keep].min(axis=0)
    upp = T[keep].max(axis=0)
    responsible = np.flatnonzero((T[0] < low) | (T[0] > upp))
    return low, upp, responsible


# ---------------------------------------------------------------- envelope test

@dataclass
class EnvelopeTestResult:
    T: np.ndarray
    ranks: np.ndarray
    area_measures: np.ndarray
    p_value: float
    alpha: float
    T_low: np.ndarray
    T_upp: np.ndarray
    responsible: np.ndarray
    set_ids: list = field(default_factory=list)
    origin: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def S(self) -> int:
        return self.T.shape[0] - 1

    @property
    def responsible_ids(self):
        return [self.set_ids[k] for k in self.responsible] if self.set_ids else \
            [int(k) for k in self.responsible]

    def rejects(self) -> bool:
        return self.p_value <= self.alpha

    def to_dict(self, include_matrix: bool = False) -> dict:
        d = {"p_value": self.p_value, "alpha": self.alpha, "S": self.S,
             "responsible": [int(k) for k in self.responsible],
             "responsible_ids": self.responsible_ids,
             "T_observed": self.T[0].tolist(), "T_low": self.T_low.tolist(),
             "T_upp": self.T_upp.tolist(), "area_measures": self.area_measures.tolist(),
             "extreme_ranks": [int(r) for r in self.ranks],
             "set_ids": list(self.set_ids), "origin": list(self.origin), "config": self.config}
        if include_matrix:
            d["T"] = self.T.tolist()
        return d

    def to_json(self, path, include_matrix: bool = False):
        Path(path).write_text(json.dumps(self.to_dict(include_matrix), indent=2) + "\n")


def permutation_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(i)]).generate_state(1, dtype=np.uint32)[0])


def envelope_statistics(engine: DepthEngine, N: int, S: int, seed: int,
                        threads: int = 1, executor=None) -> np.ndarray:
    """(S+1) x K matrix of depth differences; row 1 is the observed split."""
    K = len(engine.pool)
    idx = np.arange(K)

    def row(i):
        if i == 0:
            perm, dseed = idx, engine.config.seed
        else:
            ps = permutation_seed(seed, i)
            perm = np.random.Generator(np.random.PCG64(ps)).permutation(K)
            dseed = ps
        dx = engine.depths(perm, perm[:N], dseed)
        dy = engine.depths(perm, perm[N:], dseed)
        return dx - dy

    if executor is not None:
        rows = list(executor.map(row, range(S + 1)))
    elif threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            rows = list(ex.map(row, range(S + 1)))
    else:
        rows = [row(i) for i in range(S + 1)]
    return np.stack(rows)


def envelope_test(X: SetSample, Y: SetSample, config: DepthEstimatorConfig, S: int = 99,
                  alpha: float = 0.05, seed: int = 0, threads: int = 1,
                  executor=None) -> EnvelopeTestResult:
    """Permutation global envelope test on T(k) = D(F_k, X) - D(F_k, Y).

    Row 1 uses the depth seed from ``config`` so it matches the DD-plot;
    permutation i and its depth estimates draw from a stream derived from
    ``(seed, i)``, so results do not depend on thread scheduling. Pass an
    ``executor`` to reuse a worker pool; otherwise ``threads`` sizes a new one.
    """
    N, M = len(X), len(Y)
    if N + M < 2 or N == 0 or M == 0:
        raise ValueError("envelope test needs two non-empty samples")
    if S < 1:
        raise ValueError("S must be >= 1")
    if (S + 1) * alpha < 1 - _EPS:
        raise ValueError(f"S={S} permutations cannot give a level-{alpha} envelope; "
                         f"need S >= {math.ceil(1 / alpha) - 1}")
    engine = DepthEngine(list(X) + list(Y), config)
    T = envelope_statistics(engine, N, S, seed, threads, executor)
    R, a = rank_measures(T)
    low, upp, resp = build_envelope(T, a, alpha)
    return EnvelopeTestResult(T, R, a, p_value(a), alpha, low, upp, resp,
                              list(X.ids) + list(Y.ids), ["X"] * N + ["Y"] * M,
                              {"depth": config.to_dict(), "S": S, "alpha": alpha, "seed": seed})
