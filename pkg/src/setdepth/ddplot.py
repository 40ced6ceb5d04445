"""DD-plots: depth in one sample against depth in the other, for every set of both."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .depth import DepthEngine, DepthEstimatorConfig
from .raster import SetSample


@dataclass
class DDPlot:
    depth_x: np.ndarray
    depth_y: np.ndarray
    origin: list
    set_ids: list
    depth_config: DepthEstimatorConfig | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.depth_x = np.asarray(self.depth_x, dtype=np.float64)
        self.depth_y = np.asarray(self.depth_y, dtype=np.float64)
        n = len(self.depth_x)
        if len(self.depth_y) != n or len(self.origin) != n or len(self.set_ids) != n:
            raise ValueError("DD-plot columns differ in length")

    def __len__(self):
        return len(self.depth_x)

    @property
    def points(self):
        return list(zip(self.depth_x.tolist(), self.depth_y.tolist(), self.origin, self.set_ids))

    def difference(self) -> np.ndarray:
        return self.depth_x - self.depth_y


def compute_ddplot(X: SetSample, Y: SetSample, config: DepthEstimatorConfig,
                   engine: DepthEngine | None = None) -> DDPlot:
    """Depths of every set of X then Y, against X and against Y with one seed."""
    if len(X) == 0 or len(Y) == 0:
        raise ValueError("both samples must be non-empty")
    if engine is None:
        engine = DepthEngine(list(X) + list(Y), config)
    K = len(X) + len(Y)
    idx = np.arange(K)
    dx = engine.depths(idx, idx[: len(X)])
    dy = engine.depths(idx, idx[len(X):])
    return DDPlot(dx, dy, ["X"] * len(X) + ["Y"] * len(Y), list(X.ids) + list(Y.ids), config)


def export_ddplot(plot: DDPlot, csv_path, svg_path=None):
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["set_id", "origin", "depth_x", "depth_y"])
        for x, y, o, i in plot.points:
            w.writerow([i, o, "%.17g" % x, "%.17g" % y])
    if svg_path is not None:
        Path(svg_path).write_text(render_svg(plot))


def read_ddplot_csv(path) -> DDPlot:
    xs, ys, origin, ids = [], [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ids.append(row["set_id"])
            origin.append(row["origin"])
            xs.append(float(row["depth_x"]))
            ys.append(float(row["depth_y"]))
    return DDPlot(np.array(xs), np.array(ys), origin, ids)


def render_svg(plot: DDPlot, size: int = 400, margin: int = 40,
               highlight=()) -> str:
    """Scatter with the diagonal; X as crosses, Y as dots, ``highlight`` indices in red."""
    span = size - 2 * margin
    hl = set(highlight)

    def px(v):
        return margin + v * span

    def py(v):
        return size - margin - v * span

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect x="{margin}" y="{margin}" width="{span}" height="{span}" fill="none" stroke="black"/>',
             f'<line x1="{px(0)}" y1="{py(0)}" x2="{px(1)}" y2="{py(1)}" stroke="grey" '
             f'stroke-dasharray="4 3"/>',
             f'<text x="{size / 2}" y="{size - 8}" text-anchor="middle" font-size="12">depth in X</text>',
             f'<text x="12" y="{size / 2}" text-anchor="middle" font-size="12" '
             f'transform="rotate(-90 12 {size / 2})">depth in Y</text>']
    for k, (x, y, o, _) in enumerate(plot.points):
        colour = "red" if k in hl else ("navy" if o == "X" else "steelblue")
        cx, cy = px(x), py(y)
        if o == "X":
            parts.append(f'<path d="M{cx - 3:.2f},{cy - 3:.2f}L{cx + 3:.2f},{cy + 3:.2f}'
                         f'M{cx - 3:.2f},{cy + 3:.2f}L{cx + 3:.2f},{cy - 3:.2f}" stroke="{colour}"/>')
        else:
            parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="2.5" fill="{colour}"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
