import json

import numpy as np
import pytest
from PIL import Image
from scipy import ndimage

import oracles
from conftest import disc
from setdepth.io import load_sample, save_raster
from setdepth.pipeline import (DecompositionConfig, decompose, decompose_closest_hole,
                               decompose_components, holes_of, ingest_image, save_decomposition,
                               split_by_closest_hole)
from setdepth.raster import BinaryRaster, Grid


def canvas(*parts, size=60):
    out = np.zeros((size, size), bool)
    for mask, r, c in parts:
        out[r:r + mask.shape[0], c:c + mask.shape[1]] |= mask
    return BinaryRaster(out)


def ring(r_out, r_in, size=None):
    size = size or 2 * int(r_out) + 3
    return disc(r_out, size) & ~disc(r_in, size)


def figure_eight():
    a = ring(6, 2.5, 15)
    out = np.zeros((15, 26), bool)
    out[:, :15] |= a
    out[:, 11:] |= a
    return out


# ---------------------------------------------------------------- ingest

def test_all_white_png_with_black_foreground(tmp_path):
    Image.fromarray(np.full((8, 8), 255, np.uint8)).save(tmp_path / "w.png")
    assert ingest_image(tmp_path / "w.png", foreground="black").is_empty()
    assert ingest_image(tmp_path / "w.png", foreground="white").is_full()


def test_half_grey_is_off(tmp_path):
    Image.fromarray(np.array([[127, 128, 129]], np.uint8)).save(tmp_path / "g.png")
    assert ingest_image(tmp_path / "g.png").mask.tolist() == [[False, True, True]]


def test_pbm_store_ingest_identity(tmp_path):
    rng = np.random.default_rng(0)
    r = BinaryRaster(rng.random((13, 29)) < 0.4, 0.25)
    save_raster(tmp_path / "m.pbm", r)
    back = ingest_image(tmp_path / "m.pbm")
    assert np.array_equal(back.mask, r.mask) and back.pixel_size == 0.25


def test_unsupported_format(tmp_path):
    (tmp_path / "x.gif").write_bytes(b"GIF89a")
    with pytest.raises(ValueError):
        ingest_image(tmp_path / "x.gif")


# ---------------------------------------------------------------- components

def test_blob_below_min_px_is_dropped():
    img = canvas((np.ones((2, 2), bool), 10, 10))
    cfg = DecompositionConfig(min_component_px=5, component_grid=Grid(21, 21, 1.0))
    assert len(decompose_components(img, cfg)) == 0


def test_blob_at_min_px_is_kept():
    img = canvas((np.ones((2, 2), bool), 10, 10))
    cfg = DecompositionConfig(min_component_px=4, component_grid=Grid(21, 21, 1.0))
    assert len(decompose_components(img, cfg)) == 1


def test_two_equal_blobs_give_two_centred_masks():
    blob = disc(3, 9)
    img = canvas((blob, 5, 5), (blob, 30, 40))
    cs = decompose_components(img, DecompositionConfig(component_grid=Grid(21, 21, 1.0)))
    assert len(cs) == 2
    a, b = cs.components
    assert np.array_equal(a.mask, b.mask) and np.array_equal(a.mask, disc(3, 21))


def test_border_components_and_default_grid():
    img = canvas((np.ones((3, 3), bool), 0, 0), (disc(3, 9), 20, 20))
    assert len(decompose_components(img)) == 1
    assert decompose_components(img).components[0].grid == Grid(100, 100, 1.0)
    assert len(decompose_components(img, DecompositionConfig(drop_border=False))) == 2


def test_default_grid_grows_with_warning():
    img = BinaryRaster(np.pad(disc(60, 121), 2))
    with pytest.warns(UserWarning):
        cs = decompose_components(img)
    assert cs.components[0].grid.width >= 121 and cs.components[0].count == disc(60, 121).sum()


def test_connectivity_changes_component_count():
    diag = np.eye(4, dtype=bool)
    img = canvas((diag, 10, 10))
    cfg = dict(component_grid=Grid(11, 11, 1.0))
    assert len(decompose_components(img, DecompositionConfig(connectivity=8, **cfg))) == 1
    assert len(decompose_components(img, DecompositionConfig(connectivity=4, **cfg))) == 4


def test_config_validation():
    for bad in (dict(mode="x"), dict(connectivity=6), dict(min_component_px=0)):
        with pytest.raises(ValueError):
            DecompositionConfig(**bad)


# ---------------------------------------------------------------- holes

def test_hole_detection_uses_complementary_connectivity():
    diamond = np.zeros((5, 5), bool)
    diamond[1, 2] = diamond[2, 1] = diamond[2, 3] = diamond[3, 2] = True
    assert holes_of(diamond, 8)[1] == 1
    assert holes_of(diamond, 4)[1] == 0
    checker = (np.add.outer(np.arange(7), np.arange(7)) % 2 == 0)
    checker[0, :] = checker[-1, :] = checker[:, 0] = checker[:, -1] = True
    # 8-connected foreground: every interior background pixel is its own 4-hole
    assert holes_of(checker, 8)[1] == int((~checker).sum())


def test_annulus_is_one_set():
    img = canvas((ring(8, 3), 10, 10))
    cs = decompose_closest_hole(img, DecompositionConfig(mode="closest_hole", component_grid=Grid(31, 31, 1.0)))
    assert len(cs) == 1 and cs.flags == [""]
    assert cs.components[0].count == ring(8, 3).sum()


def test_two_annuli_give_two_sets():
    img = canvas((ring(8, 3), 2, 2), (ring(6, 2), 30, 30))
    cs = decompose(img, DecompositionConfig(mode="closest_hole", component_grid=Grid(31, 31, 1.0)))
    assert sorted(c.count for c in cs.components) == sorted([ring(8, 3).sum(), ring(6, 2).sum()])


def _closest_hole_oracle(comp, connectivity=8):
    holes, n = holes_of(comp, connectivity)
    pts = [np.argwhere(holes == h) for h in range(1, n + 1)]
    owner = np.full(comp.shape, -1)
    for r, c in np.argwhere(comp):
        d = [min((r - y) ** 2 + (c - x) ** 2 for y, x in p) for p in pts]
        owner[r, c] = int(np.argmin(d))
    return [comp & (owner == h) for h in range(n)]


def test_figure_eight_partition():
    eight = figure_eight()
    assert oracles.label_count(eight, 8) == 1
    parts = split_by_closest_hole(eight)
    expect = _closest_hole_oracle(eight)
    assert len(parts) == 2
    for p, e in zip(parts, expect):
        assert np.array_equal(p, e)
    assert not (parts[0] & parts[1]).any() and np.array_equal(parts[0] | parts[1], eight)
    holes, _ = holes_of(eight)
    for h, part in enumerate(parts, start=1):
        # the ring of pixels touching each hole goes to that hole
        around = np.zeros_like(eight)
        for y, x in np.argwhere(holes == h):
            around[max(y - 1, 0):y + 2, max(x - 1, 0):x + 2] = True
        assert np.all(part[around & eight])


def test_random_blobs_are_partitioned_exactly():
    rng = np.random.default_rng(5)
    for _ in range(10):
        comp = np.pad(rng.random((14, 14)) < 0.7, 1)
        labels, n = ndimage.label(comp, np.ones((3, 3)))
        if n == 0:
            continue
        big = labels == np.argmax(np.bincount(labels.ravel())[1:]) + 1
        parts = split_by_closest_hole(big)
        if parts is None:
            continue
        assert np.array_equal(np.sum(parts, axis=0), big.astype(int))
        for p, e in zip(parts, _closest_hole_oracle(big)):
            assert np.array_equal(p, e)


def test_hole_free_components_pass_through_flagged(tmp_path):
    img = canvas((disc(4, 11), 5, 5), (ring(8, 3), 30, 30))
    cfg = DecompositionConfig(mode="closest_hole", component_grid=Grid(31, 31, 1.0))
    cs = decompose(img, cfg, source_id="tissue")
    assert sorted(cs.flags) == ["", "no-hole"]
    save_decomposition(tmp_path / "out", cs, "tissue.pbm", cfg)
    prov = json.loads((tmp_path / "out" / "provenance.json").read_text())
    assert prov["mode"] == "closest_hole" and prov["n_sets"] == 2 and len(prov["no_hole"]) == 1
    back = load_sample(tmp_path / "out")
    assert len(back) == 2
    assert all(np.array_equal(a.mask, b.mask) for a, b in zip(back, cs.components))
