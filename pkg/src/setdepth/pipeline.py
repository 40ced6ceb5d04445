"""Turn binary images into samples of sets: components, or regions around holes."""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import kernels
from .io import load_raster, save_sample
from .raster import BinaryRaster, ComponentSet, Grid, _structure, centroid_centre, fitting_grid

DEFAULT_COMPONENT_SIZE = 100


@dataclass
class DecompositionConfig:
    mode: str = "components"
    connectivity: int = 8
    drop_border: bool = True
    min_component_px: int = 1
    # None: 100x100 at the image's pixel size, enlarged with a warning if needed
    component_grid: Grid | None = None

    def __post_init__(self):
        if self.mode not in ("components", "closest_hole"):
            raise ValueError(f"mode must be 'components' or 'closest_hole', got {self.mode!r}")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.min_component_px < 1:
            raise ValueError("min_component_px must be >= 1")
        if isinstance(self.component_grid, dict):
            self.component_grid = Grid(**self.component_grid)

    def to_dict(self):
        return asdict(self)


def ingest_image(path, foreground: str = "white", pixel_size: float | None = None) -> BinaryRaster:
    """Load a PBM or PNG mask; PNGs are thresholded at half luminance."""
    return load_raster(path, foreground=foreground, pixel_size=pixel_size)


def _components(img: BinaryRaster, config: DecompositionConfig):
    """Bounding-box crops of the retained components."""
    lab, n = ndimage.label(img.mask, structure=_structure(config.connectivity))
    if n == 0:
        return []
    border = set(np.unique(np.concatenate([lab[0], lab[-1], lab[:, 0], lab[:, -1]]))) - {0}
    out = []
    for i, sl in enumerate(ndimage.find_objects(lab), start=1):
        if config.drop_border and i in border:
            continue
        crop = lab[sl] == i
        if np.count_nonzero(crop) < config.min_component_px:
            continue
        out.append(crop)
    return out


def _centre_all(crops, pixel_size: float, config: DecompositionConfig):
    grid = config.component_grid
    if grid is None:
        grid = Grid(DEFAULT_COMPONENT_SIZE, DEFAULT_COMPONENT_SIZE, pixel_size)
        if crops:
            need = fitting_grid(crops, pixel_size)
            if need.width > grid.width:
                warnings.warn(f"components need a {need.width}x{need.height} grid; "
                              f"enlarging the default {grid.width}x{grid.height}")
                grid = need
    elif grid.pixel_size != pixel_size:
        grid = Grid(grid.width, grid.height, pixel_size)
    return [centroid_centre(BinaryRaster(c, pixel_size), grid) for c in crops]


def decompose_components(img: BinaryRaster, config: DecompositionConfig | None = None,
                         source_id: str = "") -> ComponentSet:
    config = config or DecompositionConfig()
    crops = _components(img, config)
    comps = _centre_all(crops, img.pixel_size, config)
    return ComponentSet(comps, source_id, ["" for _ in comps])


def holes_of(component: np.ndarray, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Label the holes of one component crop.

    Background is labelled with the complementary connectivity; background
    pieces that do not reach the padded frame are holes. Returns the label
    image (0 outside holes) of the unpadded crop and the hole count.
    """
    padded = np.pad(component, 1)
    bg_conn = 4 if connectivity == 8 else 8
    lab, n = ndimage.label(~padded, structure=_structure(bg_conn))
    outer = set(np.unique(np.concatenate([lab[0], lab[-1], lab[:, 0], lab[:, -1]]))) - {0}
    keep = [i for i in range(1, n + 1) if i not in outer]
    holes = np.zeros_like(lab)
    for new, old in enumerate(keep, start=1):
        holes[lab == old] = new
    return holes[1:-1, 1:-1], len(keep)


def split_by_closest_hole(component: np.ndarray, connectivity: int = 8):
    """Partition a component's pixels by nearest hole; ties go to the lowest hole label.

    Returns a list of boolean masks (one per hole), or ``None`` if the
    component has no hole.
    """
    holes, n = holes_of(component, connectivity)
    if n == 0:
        return None
    dist = np.stack([kernels.sq_edt(holes == h) for h in range(1, n + 1)])
    owner = np.argmin(dist, axis=0)
    return [component & (owner == h) for h in range(n)]


def decompose_closest_hole(img: BinaryRaster, config: DecompositionConfig | None = None,
                           source_id: str = "") -> ComponentSet:
    """Split each component into the pixels closest to each of its holes.

    Components without a hole pass through whole and are flagged ``no-hole``.
    """
    config = config or DecompositionConfig(mode="closest_hole")
    pieces, flags = [], []
    for crop in _components(img, config):
        parts = split_by_closest_hole(crop, config.connectivity)
        if parts is None:
            pieces.append(crop)
            flags.append("no-hole")
            continue
        for p in parts:
            if p.any():
                pieces.append(p)
                flags.append("")
    comps = _centre_all(pieces, img.pixel_size, config)
    return ComponentSet(comps, source_id, flags)


def decompose(img: BinaryRaster, config: DecompositionConfig, source_id: str = "") -> ComponentSet:
    if config.mode == "components":
        return decompose_components(img, config, source_id)
    return decompose_closest_hole(img, config, source_id)


def save_decomposition(out_dir, comps: ComponentSet, source: str, config: DecompositionConfig):
    """Write the sample directory plus ``provenance.json``."""
    out = Path(out_dir)
    sample = comps.to_sample(comps.source_id or Path(source).stem)
    save_sample(out, sample, extra={"flags": list(comps.flags)})
    cfg = config.to_dict()
    if cfg.get("component_grid") is None and comps.components:
        g = comps.components[0].grid
        cfg["component_grid_used"] = {"width": g.width, "height": g.height,
                                      "pixel_size": g.pixel_size}
    prov = {"source": str(source), "mode": config.mode, "parameters": cfg,
            "n_sets": len(comps), "no_hole": [i for i, f in enumerate(comps.flags) if f == "no-hole"]}
    (out / "provenance.json").write_text(json.dumps(prov, indent=2) + "\n")
    return out

