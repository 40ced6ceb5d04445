import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from setdepth.io import (DataError, load_raster, load_sample, load_sample_or_images, read_pbm,
                         read_png, save_raster, save_sample, write_pbm)
from setdepth.raster import BinaryRaster, SetSample

shapes = st.tuples(st.integers(1, 20), st.integers(1, 20))


@settings(max_examples=30)
@given(arrays(bool, shapes), st.booleans())
def test_pbm_round_trip(tmp_path_factory, m, plain):
    p = tmp_path_factory.mktemp("pbm") / "m.pbm"
    write_pbm(p, m, plain=plain)
    assert np.array_equal(read_pbm(p), m)


def test_p1_with_comments_and_packed_digits(tmp_path):
    p = tmp_path / "c.pbm"
    p.write_bytes(b"P1\n# a comment\n3 2 # trailing\n101\n0 1 0\n")
    assert read_pbm(p).tolist() == [[True, False, True], [False, True, False]]


def test_bad_pbm_is_data_error(tmp_path):
    p = tmp_path / "bad.pbm"
    p.write_bytes(b"P4\n8 8\n\x00")
    with pytest.raises(DataError):
        read_pbm(p)
    p.write_bytes(b"P7\n1 1\n0")
    with pytest.raises(DataError):
        read_pbm(p)


def test_png_threshold_rules(tmp_path):
    p = tmp_path / "g.png"
    Image.fromarray(np.array([[0, 127, 128, 255]], dtype=np.uint8), mode="L").save(p)
    assert read_png(p).tolist() == [[False, False, True, True]]
    assert read_png(p, foreground="black").tolist() == [[True, True, False, False]]


def test_half_grey_is_off(tmp_path):
    # the largest value not above half the range stays off, in 8 and 16 bits
    q = tmp_path / "half8.png"
    Image.fromarray(np.array([[127, 128]], dtype=np.uint8), mode="L").save(q)
    assert read_png(q).tolist() == [[False, True]]
    p = tmp_path / "half16.png"
    Image.fromarray(np.array([[32767, 32768]], dtype=np.uint16)).save(p)
    assert read_png(p).tolist() == [[False, True]]


def test_all_white_png_black_foreground_is_empty(tmp_path):
    p = tmp_path / "w.png"
    Image.fromarray(np.full((5, 5), 255, dtype=np.uint8), mode="L").save(p)
    r = load_raster(p, foreground="black")
    assert r.is_empty()


def test_sidecar_pixel_size(tmp_path):
    r = BinaryRaster(np.eye(3, dtype=bool), 0.25)
    save_raster(tmp_path / "a.pbm", r)
    assert json.loads((tmp_path / "a.json").read_text()) == {"pixel_size": 0.25}
    assert load_raster(tmp_path / "a.pbm") == r
    save_raster(tmp_path / "b.png", r, sidecar=False)
    assert load_raster(tmp_path / "b.png").pixel_size == 1.0


def test_missing_and_unsupported_files(tmp_path):
    with pytest.raises(DataError):
        load_raster(tmp_path / "nope.pbm")
    (tmp_path / "x.tif").write_bytes(b"xx")
    with pytest.raises(DataError):
        load_raster(tmp_path / "x.tif")


def test_sample_directory_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    s = SetSample([BinaryRaster(rng.random((6, 7)) < 0.5, 0.5) for _ in range(4)],
                  ["a", "b", "c", "d"], "toy")
    save_sample(tmp_path / "s", s)
    man = json.loads((tmp_path / "s" / "sample.json").read_text())
    assert man["grid"] == {"width": 7, "height": 6} and man["pixel_size"] == 0.5
    assert man["files"] == ["0000.pbm", "0001.pbm", "0002.pbm", "0003.pbm"]
    back = load_sample(tmp_path / "s")
    assert back.ids == s.ids and back.sample_id == "toy"
    assert all(a == b for a, b in zip(back, s))


def test_sample_manifest_errors(tmp_path):
    with pytest.raises(DataError):
        load_sample(tmp_path)
    (tmp_path / "sample.json").write_text("{not json")
    with pytest.raises(DataError):
        load_sample(tmp_path)
    save_sample(tmp_path / "s", SetSample([BinaryRaster(np.ones((3, 3)))]))
    man = json.loads((tmp_path / "s" / "sample.json").read_text())
    man["grid"]["width"] = 4
    (tmp_path / "s" / "sample.json").write_text(json.dumps(man))
    with pytest.raises(DataError):
        load_sample(tmp_path / "s")


def test_loose_image_directory(tmp_path):
    for i in range(3):
        write_pbm(tmp_path / f"m{i}.pbm", np.eye(4, dtype=bool))
    s = load_sample_or_images(tmp_path)
    assert len(s) == 3 and s.ids == ["m0", "m1", "m2"]
    empty = tmp_path / "empty"
    empty.mkdir()
    assert len(load_sample_or_images(empty)) == 0
