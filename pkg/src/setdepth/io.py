"""Mask files (PBM P1/P4, PNG) and the sample directory format."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .raster import BinaryRaster, Grid, GridMismatchError, SetSample

MANIFEST = "sample.json"


class DataError(ValueError):
    """Input file missing, unreadable or malformed."""


# ---------------------------------------------------------------- PBM

def _pbm_tokens(data: bytes, count: int, start: int = 0):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, i, n = [], start, len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i >= n:
            raise DataError("truncated PBM header")
        if data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
            j += 1
        tokens.append(data[i:j])
        i = j
    return tokens, i


def read_pbm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h), pos = _pbm_tokens(data, 3)
    try:
        w, h = int(w), int(h)
    except ValueError as exc:
        raise DataError(f"{path}: bad PBM dimensions") from exc
    if w <= 0 or h <= 0:
        raise DataError(f"{path}: bad PBM dimensions {w}x{h}")
    if magic == b"P1":
        bits = [c for c in data[pos:] if c in (ord("0"), ord("1"))]
        if len(bits) < w * h:
            raise DataError(f"{path}: truncated P1 raster")
        return (np.array(bits[: w * h], dtype=np.uint8) == ord("1")).reshape(h, w)
    if magic == b"P4":
        pos += 1  # single whitespace byte after the header
        row_bytes = (w + 7) // 8
        raw = np.frombuffer(data, dtype=np.uint8, count=row_bytes * h, offset=pos) \
            if len(data) - pos >= row_bytes * h else None
        if raw is None:
            raise DataError(f"{path}: truncated P4 raster")
        return np.unpackbits(raw.reshape(h, row_bytes), axis=1)[:, :w].astype(bool)
    raise DataError(f"{path}: not a PBM file (magic {magic!r})")


def write_pbm(path, mask, plain: bool = False):
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    with open(path, "wb") as fh:
        if plain:
            fh.write(f"P1\n{w} {h}\n".encode())
            for row in mask:
                fh.write((" ".join("1" if v else "0" for v in row) + "\n").encode())
        else:
            fh.write(f"P4\n{w} {h}\n".encode())
            fh.write(np.packbits(mask, axis=1).tobytes())


# ---------------------------------------------------------------- PNG

def read_png(path, foreground: str = "white") -> np.ndarray:
    """Threshold at strictly more than half the luminance range.

    ``foreground="black"`` marks pixels darker than half instead.
    """
    if foreground not in ("white", "black"):
        raise ValueError(f"foreground must be 'white' or 'black', got {foreground!r}")
    try:
        with Image.open(path) as img:
            if img.mode.startswith("I;16") or img.mode == "I":
                arr = np.asarray(img, dtype=np.int64)
                top = 65535
            else:
                arr = np.asarray(img.convert("L"), dtype=np.int64)
                top = 255
    except OSError as exc:
        raise DataError(f"{path}: cannot read image: {exc}") from exc
    if foreground == "white":
        return 2 * arr > top
    return 2 * arr < top


def write_png(path, mask):
    mask = np.asarray(mask, dtype=bool)
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


# ---------------------------------------------------------------- rasters

def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def read_pixel_size(path) -> float:
    side = sidecar_path(path)
    if not side.exists():
        return 1.0
    try:
        return float(json.loads(side.read_text())["pixel_size"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{side}: bad sidecar") from exc


def load_raster(path, foreground: str = "white", pixel_size: float | None = None) -> BinaryRaster:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    ext = path.suffix.lower()
    if ext == ".pbm":
        mask = read_pbm(path)
    elif ext == ".png":
        mask = read_png(path, foreground)
    else:
        raise DataError(f"{path}: unsupported format {ext!r}")
    ps = read_pixel_size(path) if pixel_size is None else pixel_size
    return BinaryRaster(mask, ps)


def save_raster(path, raster: BinaryRaster, sidecar: bool = True):
    path = Path(path)
    ext = path.suffix.lower()
    if ext == ".pbm":
        write_pbm(path, raster.mask)
    elif ext == ".png":
        write_png(path, raster.mask)
    else:
        raise DataError(f"{path}: unsupported format {ext!r}")
    if sidecar:
        sidecar_path(path).write_text(json.dumps({"pixel_size": raster.pixel_size}) + "\n")


# ---------------------------------------------------------------- samples

def save_sample(directory, sample: SetSample, extra: dict | None = None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for i, s in enumerate(sample.sets):
        name = f"{i:04d}.pbm"
        write_pbm(d / name, s.mask)
        files.append(name)
    g = sample.grid or Grid(1, 1)
    manifest = {
        "sample_id": sample.sample_id,
        "grid": {"width": g.width, "height": g.height},
        "pixel_size": g.pixel_size,
        "files": files,
        "ids": list(sample.ids),
    }
    if extra:
        manifest.update(extra)
    (d / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    return d


def load_sample(directory) -> SetSample:
    d = Path(directory)
    man_path = d / MANIFEST
    if not man_path.exists():
        raise DataError(f"{d}: missing {MANIFEST}")
    try:
        man = json.loads(man_path.read_text())
        files = man["files"]
        ps = float(man.get("pixel_size", 1.0))
        gw, gh = int(man["grid"]["width"]), int(man["grid"]["height"])
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{man_path}: malformed manifest") from exc
    sets = []
    for f in files:
        r = load_raster(d / f, pixel_size=ps)
        if r.shape != (gh, gw):
            raise DataError(f"{d / f}: shape {r.shape} differs from manifest grid {(gh, gw)}")
        sets.append(r)
    ids = man.get("ids") or [os.path.splitext(f)[0] for f in files]
    try:
        return SetSample(sets, ids, man.get("sample_id", d.name))
    except (GridMismatchError, ValueError) as exc:
        raise DataError(f"{d}: {exc}") from exc


def load_sample_or_images(path) -> SetSample:
    """A sample directory, or a directory of loose PBM/PNG files in name order."""
    d = Path(path)
    if (d / MANIFEST).exists():
        return load_sample(d)
    if not d.is_dir():
        raise DataError(f"{d}: not a directory")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in (".pbm", ".png"))
    return SetSample([load_raster(p) for p in files], [p.stem for p in files], d.name)
