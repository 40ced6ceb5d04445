import math

import numpy as np
import pytest

import oracles
from setdepth.pipeline import holes_of
from setdepth.raster import DoesNotFitError, Grid
from setdepth.simulate import (BooleanModelParams, ParticleModelParams, disc_mask,
                               gen_boolean_realisation, gen_disc_sample, gen_mixture_disc_annulus,
                               gen_particle, gen_particle_sample, gen_probe_shape, load_params,
                               save_params)

G100 = Grid(100, 100, 1.0)


# ---------------------------------------------------------------- probe shapes

@pytest.mark.parametrize("ps", [1.0, 0.5, 0.25])
def test_disc_area(ps):
    r = gen_probe_shape("disc", {"r": 3}, Grid(100, 100, ps))
    assert r.count == pytest.approx(math.pi * 9 / ps ** 2, rel=0.05)


def test_annulus_complement_has_outside_and_hole():
    m = gen_probe_shape("annulus", {"r_out": 3, "r_in": 0.8}, G100).mask
    rows, cols = np.flatnonzero(m.any(1)), np.flatnonzero(m.any(0))
    box = np.pad(m[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1], 1)
    assert oracles.label_count(~box, 4) == 2


@pytest.mark.parametrize("side,ps", [(5, 1.0), (5, 0.5), (4, 1.0), (6, 0.25)])
def test_square_count_exact(side, ps):
    assert gen_probe_shape("square", {"side": side}, Grid(100, 100, ps)).count == round(side ** 2 / ps ** 2)


def test_probe_kinds_and_errors():
    g = Grid(41, 41, 1.0)
    ell = gen_probe_shape("ellipse", {"a": 3.8, "b": 2.2}, g).mask
    assert ell.any(axis=0).sum() > ell.any(axis=1).sum()
    holes = gen_probe_shape("disc_with_random_holes", {"r": 8, "drop_prob": 0.3, "seed": 1}, g)
    full = disc_mask(g, 8)
    assert holes.mask.sum() < full.sum() and np.all(holes.mask <= full)
    # the boundary ring is kept
    edge = full & ~np.pad(full, 1)[2:, 1:-1]
    assert np.all(holes.mask[edge])
    sat = gen_probe_shape("disc_plus_satellites",
                          {"r_main": 5, "r_sat": 0.2, "count": 4, "distance": 12, "seed": 3}, g)
    assert np.all(sat.mask >= disc_mask(g, 5)) and sat.count > disc_mask(g, 5).sum()
    uni = gen_probe_shape("disc_union", {"r1": 4, "r2": 4, "offset": 6}, g)
    assert oracles.label_count(uni.mask, 8) == 1
    with pytest.raises(DoesNotFitError):
        gen_probe_shape("disc", {"r": 30}, g)
    with pytest.raises(ValueError):
        gen_probe_shape("triangle", {}, g)
    with pytest.raises(ValueError):
        gen_probe_shape("annulus", {"r_out": 2, "r_in": 3}, g)


# ---------------------------------------------------------------- disc samples

def test_disc_sample_degenerate_cases():
    assert len(gen_disc_sample(0, 2, 4, G100)) == 0
    s = gen_disc_sample(10, 3, 3, G100, seed=4)
    assert all(np.array_equal(s[0].mask, x.mask) for x in s)


def test_disc_sample_mean_equivalent_radius():
    s = gen_disc_sample(1000, 2, 4, G100, seed=1)
    eq = np.sqrt(np.array([x.count for x in s]) / math.pi)
    assert 2.9 <= eq.mean() <= 3.1


def test_disc_sample_seeded():
    a, b = gen_disc_sample(5, 2, 4, G100, seed=7), gen_disc_sample(5, 2, 4, G100, seed=7)
    assert all(np.array_equal(x.mask, y.mask) for x, y in zip(a, b))
    with pytest.raises(DoesNotFitError):
        gen_disc_sample(3, 2, 80, G100)


# ---------------------------------------------------------------- particles

def test_particle_without_satellites_is_a_disc():
    p = ParticleModelParams(mu_R=6, sigma_R=0, d=2, lam=0, mu_r=1, sigma_r=0.5)
    for seed in range(5):
        assert np.array_equal(gen_particle(p, seed).mask, disc_mask(p.grid, 6))


def test_particle_ring_of_width_zero():
    p = ParticleModelParams(mu_R=8, sigma_R=0, d=0, lam=6, mu_r=1.5, sigma_r=0)
    y, x = np.mgrid[0:64, 0:64] - 32
    dist = np.hypot(y, x)
    for seed in range(10):
        m = gen_particle(p, seed).mask
        assert np.all(m >= disc_mask(p.grid, 8))
        # every extra pixel sits within a satellite radius of the circle of radius R
        extra = m & ~disc_mask(p.grid, 8)
        assert np.all(np.abs(dist[extra] - 8) <= 1.5 + 1e-9)


def test_particle_sample_seeded_and_varied():
    p = ParticleModelParams(3, 0.5, 9, 1.5, 5, 3, grid=Grid(100, 100, 1.0))
    a = gen_particle_sample(p, 6, seed=2)
    b = gen_particle_sample(p, 6, seed=2)
    assert all(np.array_equal(x.mask, y.mask) for x, y in zip(a, b))
    assert len({x.mask.tobytes() for x in a}) > 1
    with pytest.raises(DoesNotFitError):
        gen_particle(ParticleModelParams(3, 0.5, 9, 1.5, 5, 3, grid=Grid(20, 20, 1.0)))
    with pytest.raises(ValueError):
        ParticleModelParams(3, -1, 9, 1.5, 5, 3)


def test_params_files_round_trip(tmp_path):
    p = ParticleModelParams(3, 0.5, 9, 1.5, 5, 3)
    save_params(tmp_path / "p.json", p)
    assert load_params(tmp_path / "p.json") == p
    b = BooleanModelParams(grain="ellipse")
    save_params(tmp_path / "b.json", b)
    assert load_params(tmp_path / "b.json") == b


# ---------------------------------------------------------------- Boolean model

def test_boolean_sparse_limit_mostly_empty():
    g = Grid(100, 100, 0.1)
    params = BooleanModelParams(window=g, intensity=0.01 / 100.0, r_min=0.5, r_max=1.0)
    empty = sum(gen_boolean_realisation(params, seed).is_empty() for seed in range(100))
    assert empty >= 98


def test_boolean_germ_count():
    params = BooleanModelParams(window=Grid(25, 25, 1.0), intensity=0.4)
    counts = np.array([gen_boolean_realisation(params, s, return_count=True)[1] for s in range(100)])
    sd = math.sqrt(250)
    assert np.mean(np.abs(counts - 250) <= 3 * sd) >= 0.97
    assert abs(counts.mean() - 250) <= 3 * sd / 10


def test_boolean_area_fraction():
    params = BooleanModelParams()
    frac = np.mean([gen_boolean_realisation(params, s).mask.mean() for s in range(100)])
    expect = 1 - math.exp(-0.4 * math.pi * (1 - 0.125) / 1.5)
    assert abs(expect - 0.52) < 0.005
    assert abs(frac - expect) <= 0.03


def test_boolean_ellipses_and_validation():
    params = BooleanModelParams(window=Grid(80, 80, 0.0625), grain="ellipse")
    a = gen_boolean_realisation(params, 3)
    assert np.array_equal(a.mask, gen_boolean_realisation(params, 3).mask)
    assert 0 < a.mask.mean() < 1
    with pytest.raises(ValueError):
        BooleanModelParams(intensity=0)
    with pytest.raises(ValueError):
        BooleanModelParams(r_min=2, r_max=1)


# ---------------------------------------------------------------- mixture

def test_mixture_extremes():
    discs = gen_mixture_disc_annulus(30, p_annulus=0.0, seed=1)
    assert all(i.endswith("-disc") for i in discs.ids)
    assert all(holes_of(s.mask)[1] == 0 for s in discs)
    ann = gen_mixture_disc_annulus(30, p_annulus=1.0, seed=1)
    assert all(holes_of(s.mask)[1] == 1 for s in ann)


def test_mixture_annulus_count():
    counts = [sum(i.endswith("-annulus") for i in gen_mixture_disc_annulus(100, 0.2, seed=s).ids)
              for s in range(100)]
    assert sum(10 <= c <= 32 for c in counts) >= 99
