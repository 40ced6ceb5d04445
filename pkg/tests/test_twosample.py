import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from setdepth.ddplot import DDPlot
from setdepth.depth import DepthEstimatorConfig
from setdepth.raster import Grid, SetSample
from setdepth.simulate import gen_disc_sample, gen_mixture_disc_annulus
from setdepth.twosample import (build_envelope, continuous_ranks, envelope_test, extreme_ranks,
                                p_value, rank_measures, regression_test)

G = Grid(32, 32, 1.0)


def area_oracle(T):
    """Area measures from the written-out formulas, one cell at a time."""
    n, K = T.shape
    R = oracles.extreme_ranks(T)[0]
    a = np.empty(n)
    for i in range(n):
        total = 0.0
        for k in range(K):
            col = sorted(T[:, k])
            pos = col.index(T[i, k])
            if pos == 0:
                c = math.exp(-(col[1] - col[0]) / (col[-1] - col[0]))
            elif pos == n - 1:
                c = n - math.exp(-(col[-1] - col[-2]) / (col[-2] - col[0]))
            else:
                c = pos + (col[pos] - col[pos - 1]) / (col[pos + 1] - col[pos - 1])
            C = min(c, n - c)
            if C < R[i]:
                total += R[i] - C
        a[i] = (R[i] - total / K) / n
    return R, a


# ---------------------------------------------------------------- regression test

def test_regression_on_the_diagonal():
    x = np.linspace(0.05, 0.9, 20)
    r = regression_test((x, x.copy()), B=200, seed=1)
    assert r.beta0_hat == pytest.approx(0, abs=1e-12) and r.beta1_hat == pytest.approx(1)
    assert r.p_adjusted == 1.0 and not r.rejects()


def test_regression_rejects_flat_line():
    rej = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        x = rng.uniform(0, 1, 60)
        y = 0.5 + rng.normal(0, 0.02, 60)
        r = regression_test((x, y), B=300, seed=seed)
        rej += r.p_adjusted < 0.05
    assert rej / 40 >= 0.95


def test_regression_holm_combination_and_seed():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, 30)
    y = x + rng.normal(0, 0.1, 30)
    r = regression_test((x, y), B=500, seed=4)
    lo, hi = sorted((r.p0, r.p1))
    assert r.p_adjusted == min(2 * lo, hi)
    assert r.to_dict() == regression_test((x, y), B=500, seed=4).to_dict()
    assert r.rejects() == (lo < 0.025 or hi < 0.05)


def test_regression_errors():
    with pytest.raises(ValueError):
        regression_test(([0.1, 0.2], [0.1, 0.2]))
    with pytest.raises(ValueError):
        regression_test(([0.3] * 5, [0.1, 0.2, 0.3, 0.4, 0.5]))


def test_regression_accepts_ddplot():
    p = DDPlot([0.1, 0.2, 0.5, 0.7], [0.1, 0.25, 0.45, 0.7], list("XXYY"), list("abcd"))
    assert regression_test(p, B=50).bootstrap_B == 50


# ---------------------------------------------------------------- ranks

def test_rank_example_single_column():
    Rk, R = extreme_ranks(np.array([[3.0], [1.0], [2.0]]))
    assert Rk[:, 0].tolist() == [1, 1, 2] and R.tolist() == [1, 1, 2]


def test_continuous_rank_example():
    c = continuous_ranks(np.array([[1.0], [2.0], [3.0], [4.0]]))[:, 0]
    assert c[1] == 1.5 and c[2] == 2.5
    assert 0 < c[0] < 1 and 3 < c[3] < 4


def test_constant_column_midpoint():
    T = np.column_stack([np.full(5, 2.0), np.arange(5.0)])
    assert continuous_ranks(T)[:, 0].tolist() == [2.5] * 5


@given(arrays(np.float64, (6, 3), elements=st.floats(-5, 5, allow_nan=False), unique=True))
def test_rank_measures_match_oracle(T):
    R, a = rank_measures(T)
    Ro, ao = area_oracle(T)
    assert R.tolist() == Ro.tolist()
    assert np.allclose(a, ao, rtol=0, atol=1e-12)


def test_area_argmin_follows_extreme_rank():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        T = rng.normal(size=(6, 4))
        R, a = rank_measures(T)
        assert R[np.argmin(a)] == R.min()


@given(arrays(np.float64, (7, 4), elements=st.integers(-50, 50).map(float)),
       st.integers(0, 3), st.integers(-100, 100))
def test_column_shift_invariance(T, k, shift):
    T2 = T.copy()
    T2[:, k] += shift
    R1, a1 = rank_measures(T)
    R2, a2 = rank_measures(T2)
    assert np.array_equal(R1, R2) and np.allclose(a1, a2, rtol=0, atol=1e-12)


@given(arrays(np.float64, (9, 5), elements=st.floats(-3, 3, allow_nan=False)))
def test_rank_bounds(T):
    R, a = rank_measures(T)
    n = T.shape[0]
    assert R.min() >= 1 and R.max() <= math.ceil(n / 2)
    assert np.all(a >= 0) and np.all(a <= (n + 1) / n)


def test_p_value_strict_inequality():
    assert p_value(np.array([0.3, 0.1, 0.3, 0.5])) == 0.25
    assert p_value(np.array([0.1, 0.2, 0.3])) == 0.0


# ---------------------------------------------------------------- envelope

HAND = np.array([[0.0, 10.0, 0.0],
                 [-2.0, -1.0, 1.0],
                 [-1.0, 1.0, -2.0],
                 [1.0, -2.0, 2.0],
                 [2.0, 2.0, -1.0]])


def test_hand_built_envelope():
    # every row has extreme rank 1; the area measures order them
    # row 1 < row 4 < row 5 < rows 2 and 3, so alpha = 0.2 drops rows 1 and 4
    R, a = rank_measures(HAND)
    assert R.tolist() == [1] * 5
    assert np.argsort(a, kind="stable")[:3].tolist() == [0, 3, 4]
    low, upp, resp = build_envelope(HAND, a, 0.2)
    assert low.tolist() == [-2.0, -1.0, -2.0] and upp.tolist() == [2.0, 2.0, 1.0]
    assert resp.tolist() == [1]
    assert p_value(a) == 0.0


def test_envelope_at_alpha_zero_keeps_all_but_the_most_extreme():
    # at alpha = 0 only curves with no strictly smaller measure leave the envelope
    rng = np.random.default_rng(1)
    T = rng.normal(size=(20, 6))
    _, a = rank_measures(T)
    T, a = T[np.argsort(-a)], a[np.argsort(-a)]
    low, upp, resp = build_envelope(T, a, 0.0)
    kept = a > a.min()
    assert resp.size == 0 and np.all(low <= upp)
    assert np.array_equal(low, T[kept].min(axis=0)) and np.array_equal(upp, T[kept].max(axis=0))


def test_observed_inside_everything():
    rng = np.random.default_rng(2)
    T = np.vstack([np.zeros(5), rng.choice([-1.0, 1.0], size=(19, 5)) * rng.uniform(1, 2, (19, 5))])
    for k in range(5):
        T[1, k], T[2, k] = -1.5, 1.5
    R, a = rank_measures(T)
    _, _, resp = build_envelope(T, a, 0.05)
    assert resp.size == 0 and p_value(a) > 0.5


@given(arrays(np.float64, (20, 6), elements=st.floats(-3, 3, allow_nan=False)),
       st.sampled_from([0.05, 0.1, 0.2]))
def test_envelope_p_coherence(T, alpha):
    _, a = rank_measures(T)
    low, upp, resp = build_envelope(T, a, alpha)
    assert np.all(low <= upp)
    assert (p_value(a) <= alpha) == (resp.size > 0) or (p_value(a) <= alpha and _row_kept_anyway(a, alpha))


def _row_kept_anyway(a, alpha):
    # the all-curves-excluded fallback keeps the largest measure; row 1 may be among them
    return not (np.searchsorted(np.sort(a), a, side="left") > alpha * len(a) + 1e-9).any()


def test_envelope_test_small_run():
    X = gen_disc_sample(10, 2, 5, G, seed=1)
    Y = gen_mixture_disc_annulus(10, 0.5, (5, 7), (1, 2), (5, 7), G, seed=2)
    cfg = DepthEstimatorConfig(kind="band", n=3, s=100, seed=3)
    r = envelope_test(X, Y, cfg, S=19, alpha=0.05, seed=4)
    assert r.T.shape == (20, 20)
    assert r.rejects() == (r.responsible.size > 0)
    assert 0 <= r.p_value <= 19 / 20
    again = envelope_test(X, Y, cfg, S=19, alpha=0.05, seed=4, threads=3)
    assert np.array_equal(r.T, again.T) and r.to_dict() == again.to_dict()
    assert set(r.to_dict(include_matrix=True)) > set(r.to_dict())


def test_envelope_degenerate_S1():
    X = gen_disc_sample(4, 2, 5, G, seed=1)
    Y = gen_disc_sample(4, 2, 5, G, seed=2)
    r = envelope_test(X, Y, DepthEstimatorConfig(kind="band", n=2, s=20), S=1, alpha=0.5, seed=0)
    assert r.p_value in (0.0, 0.5)
    assert np.all(r.T_low <= r.T_upp)


def test_envelope_errors():
    X = gen_disc_sample(4, 2, 5, G, seed=1)
    cfg = DepthEstimatorConfig(kind="band", n=2, s=20)
    with pytest.raises(ValueError):
        envelope_test(X, SetSample([]), cfg)
    with pytest.raises(ValueError):
        envelope_test(X, X, cfg, S=9, alpha=0.05)
