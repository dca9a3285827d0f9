"""
Rendering service.

SVG pictures of a placed design (one panel per die, side by side) and of a
solved thermal field (one colour-mapped grid per die plus a legend). Output
depends only on the inputs; every coordinate is rounded before it is
written.
"""
from typing import List, Optional, Sequence

import matplotlib
import numpy as np
import svgwrite
from matplotlib.colors import Normalize, to_hex

from .. import config
from ..models import Design, Die, Library, is_shrunk, variant_of
from .placer import DensityGrid

logger = config.logger

PANEL_PX = 400
MARGIN_PX = 20
LABEL_PX = 16
LEGEND_STEPS = 10
THERMAL_CMAP = "YlOrRd"
DENSITY_CMAP = "Blues"


def _r(value: float) -> float:
    return round(float(value), 3)


def _dies(design: Design) -> List[Die]:
    return [Die.BOTTOM, Die.TOP] if design.is_3d else [Die.BOTTOM]


def render_layout(design: Design, library: Library, density_bins: Optional[int] = 16) -> str:
    """
    Placed design as SVG text.

    Macros are outlined rectangles, standard cells are shown as bin-density
    shading (`density_bins` per side, None to skip), ports as small squares.
    """
    dies = _dies(design)
    width = len(dies) * (PANEL_PX + MARGIN_PX) + MARGIN_PX
    height = PANEL_PX + 2 * MARGIN_PX + LABEL_PX
    dr = svgwrite.Drawing(size=(width, height), profile="tiny")
    dr.add(dr.rect(insert=(0, 0), size=(width, height), fill="white"))
    if design.die_bottom is None:
        return dr.tostring()

    shade = matplotlib.colormaps[DENSITY_CMAP]
    for k, die in enumerate(dies):
        die_rect = design.die_rect(die)
        scale = PANEL_PX / max(die_rect.width, die_rect.height)
        ox = MARGIN_PX + k * (PANEL_PX + MARGIN_PX)
        oy = MARGIN_PX + LABEL_PX

        def to_px(x: float, y: float):
            # SVG y grows downwards.
            return _r(ox + (x - die_rect.lx) * scale), _r(oy + (die_rect.uy - y) * scale)

        dr.add(dr.text(f"{design.name} {die.value}", insert=(ox, MARGIN_PX + LABEL_PX - 4),
                       font_size=12, fill="black"))
        dr.add(dr.rect(insert=to_px(die_rect.lx, die_rect.uy),
                       size=(_r(die_rect.width * scale), _r(die_rect.height * scale)),
                       stroke="black", fill="white", stroke_width=1))

        placed = [c for c in design.components
                  if c.die is die and c.is_placed and not is_shrunk(variant_of(c.master))]
        cells = [library.rect_of(c) for c in placed if not library.is_macro(c)]
        if density_bins and cells:
            grid = DensityGrid(die_rect, density_bins)
            density = grid.usage(cells) / grid.bin_area
            for i in range(density_bins):
                for j in range(density_bins):
                    value = min(1.0, float(density[i, j]))
                    if value <= 0:
                        continue
                    lx, uy = to_px(grid.edges_x[i], grid.edges_y[j + 1])
                    dr.add(dr.rect(insert=(lx, uy),
                                   size=(_r(grid.bin_w * scale), _r(grid.bin_h * scale)),
                                   fill=to_hex(shade(0.15 + 0.7 * value)), stroke="none"))

        for component in sorted((c for c in placed if library.is_macro(c)), key=lambda c: c.name):
            r = library.rect_of(component)
            dr.add(dr.rect(insert=to_px(r.lx, r.uy), size=(_r(r.width * scale), _r(r.height * scale)),
                           stroke="#c0392b", fill="none", stroke_width=1))

        for port in sorted((p for p in design.io_ports if p.die is die and p.is_placed), key=lambda p: p.name):
            px, py = to_px(port.x, port.y)
            dr.add(dr.rect(insert=(_r(px - 2), _r(py - 2)), size=(4, 4), fill="#27ae60", stroke="none"))
    return dr.tostring()


def render_thermal(temperatures: np.ndarray, labels: Optional[Sequence[str]] = None,
                   t_min: Optional[float] = None, t_max: Optional[float] = None) -> str:
    """
    Heat map of `temperatures` shaped (planes, n, n), indexed [plane, x, y],
    with a shared colour scale and a legend of LEGEND_STEPS swatches.
    """
    temperatures = np.asarray(temperatures, dtype=float)
    planes, n, _ = temperatures.shape
    labels = list(labels) if labels is not None else ["bottom", "top"][:planes]
    lo = float(temperatures.min()) if t_min is None else t_min
    hi = float(temperatures.max()) if t_max is None else t_max
    norm = Normalize(vmin=lo, vmax=hi if hi > lo else lo + 1.0)
    cmap = matplotlib.colormaps[THERMAL_CMAP]

    legend_w = 80
    width = planes * (PANEL_PX + MARGIN_PX) + MARGIN_PX + legend_w
    height = PANEL_PX + 2 * MARGIN_PX + LABEL_PX
    dr = svgwrite.Drawing(size=(width, height), profile="tiny")
    dr.add(dr.rect(insert=(0, 0), size=(width, height), fill="white"))
    cell = PANEL_PX / n
    for k in range(planes):
        ox = MARGIN_PX + k * (PANEL_PX + MARGIN_PX)
        oy = MARGIN_PX + LABEL_PX
        peak = float(temperatures[k].max())
        dr.add(dr.text(f"{labels[k]} max {peak:.2f} C", insert=(ox, oy - 4), font_size=12, fill="black"))
        for i in range(n):
            for j in range(n):
                colour = to_hex(cmap(norm(float(temperatures[k, i, j]))))
                dr.add(dr.rect(insert=(_r(ox + i * cell), _r(oy + (n - 1 - j) * cell)),
                               size=(_r(cell), _r(cell)), fill=colour, stroke="none"))
        dr.add(dr.rect(insert=(ox, oy), size=(PANEL_PX, PANEL_PX), stroke="black", fill="none"))

    lx = planes * (PANEL_PX + MARGIN_PX) + MARGIN_PX
    oy = MARGIN_PX + LABEL_PX
    step_h = PANEL_PX / LEGEND_STEPS
    for s in range(LEGEND_STEPS):
        frac = s / (LEGEND_STEPS - 1)
        value = norm.vmin + frac * (norm.vmax - norm.vmin)
        y = _r(oy + (LEGEND_STEPS - 1 - s) * step_h)
        dr.add(dr.rect(insert=(lx, y), size=(16, _r(step_h)), fill=to_hex(cmap(frac)), stroke="none"))
        dr.add(dr.text(f"{value:.2f}", insert=(lx + 20, _r(y + step_h / 2 + 4)), font_size=10, fill="black"))
    return dr.tostring()


def write_svg(text: str, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    logger.debug(f"Wrote {path}")
