"""
Legalization service.

Row-based greedy cell legalization (cells sorted by x, each taking the free
site span of least displacement over nearby rows), greedy macro
legalization, and a geometric legality checker. All geometry is snapped to
integer database units.
"""
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .. import config
from ..config import Stack3dError
from ..models import Component, Design, Die, Library, Orient, Status, is_shrunk, variant_of
from . import floorplan

logger = config.logger


class LegalizationError(Stack3dError):
    """Raised when components cannot be legalized (not enough free space)."""
    exit_code = 3


class LegalityReport(BaseModel):
    overlaps: List[Tuple[str, str]] = Field(default_factory=list)
    off_site: List[str] = Field(default_factory=list)
    out_of_die: List[str] = Field(default_factory=list)

    @property
    def is_legal(self) -> bool:
        return not (self.overlaps or self.off_site or self.out_of_die)


def _dbu(value: float, units: int) -> int:
    return int(round(value * units))


def _is_projection(component: Component) -> bool:
    return is_shrunk(variant_of(component.master))


class _RowSpace:
    """Free site intervals [start, end) of one row."""

    def __init__(self, num_sites: int):
        self.free: List[List[int]] = [[0, num_sites]] if num_sites > 0 else []

    def block(self, start: int, end: int) -> None:
        kept = []
        for a, b in self.free:
            if end <= a or start >= b:
                kept.append([a, b])
                continue
            if a < start:
                kept.append([a, start])
            if end < b:
                kept.append([end, b])
        self.free = kept

    def best(self, target: int, width: int) -> Optional[int]:
        """Start site closest to `target` where `width` sites fit."""
        best_site, best_cost = None, None
        for a, b in self.free:
            if b - a < width:
                continue
            site = min(max(target, a), b - width)
            cost = abs(site - target)
            if best_cost is None or cost < best_cost:
                best_site, best_cost = site, cost
        return best_site


def legalize(design: Design, library: Library, die: Die = Die.BOTTOM) -> Design:
    """
    Snap the cells of `die` to rows and sites without overlap.

    Macros and placed FIXED cells of the die are blockages and keep their
    positions; shrunk projections are ignored. Rows
    are searched outward from the cell's nearest row until the vertical
    distance alone exceeds the best displacement found.
    """
    result = design.clone()
    die_rect = result.die_rect(die)
    rows = floorplan.build_rows(die_rect, library)
    if not rows:
        raise LegalizationError(f"die {die.value} has no rows")
    units = result.units
    site_w = _dbu(rows[0].site_width, units)
    row_h = _dbu(rows[0].height, units)
    origin_x = _dbu(die_rect.lx, units)
    origin_y = _dbu(die_rect.ly, units)
    num_sites = rows[0].num_sites
    spaces = [_RowSpace(num_sites) for _ in rows]

    on_die = [c for c in result.components if c.die is die and not _is_projection(c)]
    blockages = [c for c in on_die if library.is_macro(c) or (c.status is Status.FIXED and c.is_placed)]
    for blockage in blockages:
        r = library.rect_of(blockage)
        lx, ly = _dbu(r.lx, units) - origin_x, _dbu(r.ly, units) - origin_y
        ux, uy = _dbu(r.ux, units) - origin_x, _dbu(r.uy, units) - origin_y
        first_row, last_row = max(0, ly // row_h), min(len(rows), -(-uy // row_h))
        for i in range(first_row, last_row):
            spaces[i].block(max(0, lx // site_w), min(num_sites, -(-ux // site_w)))

    blocked = {c.name for c in blockages}
    cells = [c for c in on_die if c.name not in blocked]
    cells.sort(key=lambda c: (c.x if c.is_placed else die_rect.center[0], c.name))
    cx0, cy0 = die_rect.center
    total_disp = 0.0
    for cell in cells:
        master = library.master(cell.master)
        if _dbu(master.height, units) > row_h:
            raise LegalizationError(f"cell '{cell.name}' is taller than a row")
        width = max(1, -(-_dbu(master.width, units) // site_w))
        x = _dbu(cell.x if cell.is_placed else cx0, units) - origin_x
        y = _dbu(cell.y if cell.is_placed else cy0, units) - origin_y
        target_site = int(round(x / site_w))
        home = min(len(rows) - 1, max(0, int(round(y / row_h))))

        best = None
        for offset in range(len(rows)):
            candidates = [home] if offset == 0 else [home - offset, home + offset]
            row_cost = min(abs(r * row_h - y) for r in candidates)
            if best is not None and row_cost > best[0]:
                break
            for r in candidates:
                if not 0 <= r < len(rows):
                    continue
                site = spaces[r].best(target_site, width)
                if site is None:
                    continue
                cost = abs(site * site_w - x) + abs(r * row_h - y)
                if best is None or cost < best[0]:
                    best = (cost, r, site)
        if best is None:
            raise LegalizationError(f"no free row space for cell '{cell.name}' on {die.value} "
                                    f"(utilization above row capacity)")
        cost, r, site = best
        spaces[r].block(site, site + width)
        cell.x = (origin_x + site * site_w) / units
        cell.y = (origin_y + r * row_h) / units
        cell.orient = rows[r].orient
        cell.status = Status.PLACED
        total_disp += cost / units

    if cells:
        logger.info(f"Legalized {len(cells)} cells on {die.value}; "
                    f"mean displacement {total_disp / len(cells):.3f} um.")
    return result


def legalize_macros(design: Design, library: Library, die: Die = Die.BOTTOM,
                    names: Optional[Iterable[str]] = None) -> Design:
    """
    Remove macro overlaps greedily, largest macro first.

    A macro that collides with already legalized ones moves to the
    candidate position (abutting a legalized macro or a die edge) of least
    displacement. Positions snap to the site grid.
    """
    result = design.clone()
    die_rect = result.die_rect(die)
    units = result.units
    site = library.site()
    step_x = _dbu(site.width, units) if site else 1
    step_y = _dbu(site.height, units) if site else 1
    die_lx, die_ly = _dbu(die_rect.lx, units), _dbu(die_rect.ly, units)
    die_ux, die_uy = _dbu(die_rect.ux, units), _dbu(die_rect.uy, units)

    wanted = set(names) if names is not None else None
    macros = [c for c in result.components
              if c.die is die and library.is_macro(c) and not _is_projection(c)
              and (wanted is None or c.name in wanted)]
    others = [c for c in result.components
              if c.die is die and library.is_macro(c) and not _is_projection(c)
              and wanted is not None and c.name not in wanted and c.is_placed]

    def snap_down(v: int, origin: int, step: int) -> int:
        return origin + ((v - origin) // step) * step

    def snap_up(v: int, origin: int, step: int) -> int:
        return origin + -(-(v - origin) // step) * step

    placed: List[Tuple[int, int, int, int]] = []
    for other in others:
        r = library.rect_of(other)
        placed.append((_dbu(r.lx, units), _dbu(r.ly, units), _dbu(r.ux, units), _dbu(r.uy, units)))

    macros.sort(key=lambda c: (-library.master(c.master).area, c.name))
    for macro in macros:
        master = library.master(macro.master)
        w, h = _dbu(master.width, units), _dbu(master.height, units)
        max_x = snap_down(die_ux - w, die_lx, step_x)
        max_y = snap_down(die_uy - h, die_ly, step_y)
        if max_x < die_lx or max_y < die_ly:
            raise LegalizationError(f"macro '{macro.name}' does not fit in the {die.value} die")
        want_x = min(max(snap_down(_dbu(macro.x, units), die_lx, step_x), die_lx), max_x)
        want_y = min(max(snap_down(_dbu(macro.y, units), die_ly, step_y), die_ly), max_y)

        xs = {want_x, die_lx, max_x}
        ys = {want_y, die_ly, max_y}
        for lx, ly, ux, uy in placed:
            xs.add(snap_up(ux, die_lx, step_x))
            xs.add(snap_down(lx - w, die_lx, step_x))
            ys.add(snap_up(uy, die_ly, step_y))
            ys.add(snap_down(ly - h, die_ly, step_y))
        cand_x = np.array(sorted(x for x in xs if die_lx <= x <= max_x), dtype=np.int64)
        cand_y = np.array(sorted(y for y in ys if die_ly <= y <= max_y), dtype=np.int64)
        gx, gy = np.meshgrid(cand_x, cand_y, indexing="ij")
        gx, gy = gx.ravel(), gy.ravel()
        if placed:
            blocks = np.array(placed, dtype=np.int64)
            clash = ((gx[:, None] < blocks[None, :, 2]) & (gx[:, None] + w > blocks[None, :, 0])
                     & (gy[:, None] < blocks[None, :, 3]) & (gy[:, None] + h > blocks[None, :, 1]))
            free = ~clash.any(axis=1)
        else:
            free = np.ones(len(gx), dtype=bool)
        if not free.any():
            raise LegalizationError(f"no overlap-free position for macro '{macro.name}' on {die.value}")
        cost = np.abs(gx - want_x) + np.abs(gy - want_y)
        cost = np.where(free, cost, np.iinfo(np.int64).max)
        order = np.lexsort((gy, gx, cost))
        best = int(order[0])
        x, y = int(gx[best]), int(gy[best])
        placed.append((x, y, x + w, y + h))
        macro.x = x / units
        macro.y = y / units
        macro.orient = Orient.N
        macro.status = Status.FIXED
    if macros:
        logger.info(f"Legalized {len(macros)} macros on {die.value}.")
    return result


def check_legality(design: Design, library: Library, die: Optional[Die] = None) -> LegalityReport:
    """Overlaps, off-site cells and out-of-die components, per die (shrunk projections skipped)."""
    report = LegalityReport()
    dies = [die] if die is not None else ([Die.BOTTOM, Die.TOP] if design.is_3d else [Die.BOTTOM])
    units = design.units
    site = library.site()
    for current in dies:
        die_rect = design.die_rect(current)
        dlx, dly = _dbu(die_rect.lx, units), _dbu(die_rect.ly, units)
        dux, duy = _dbu(die_rect.ux, units), _dbu(die_rect.uy, units)
        boxes: List[Tuple[int, int, int, int, str]] = []
        for c in design.components:
            if c.die is not current or _is_projection(c) or not c.is_placed:
                continue
            r = library.rect_of(c)
            lx, ly, ux, uy = _dbu(r.lx, units), _dbu(r.ly, units), _dbu(r.ux, units), _dbu(r.uy, units)
            boxes.append((lx, ly, ux, uy, c.name))
            if lx < dlx or ly < dly or ux > dux or uy > duy:
                report.out_of_die.append(c.name)
            if site is not None and not library.is_macro(c):
                if (lx - dlx) % _dbu(site.width, units) or (ly - dly) % _dbu(site.height, units):
                    report.off_site.append(c.name)
        boxes.sort()
        for i, (lx, ly, ux, uy, name) in enumerate(boxes):
            for j in range(i + 1, len(boxes)):
                olx, oly, oux, ouy, other = boxes[j]
                if olx >= ux:
                    break
                if oly < uy and ouy > ly and oux > lx:
                    report.overlaps.append((name, other))
    return report


def mean_displacement(before: Design, after: Design) -> float:
    """Mean Manhattan move of components present in both designs."""
    old: Dict[str, Component] = before.component_map()
    moves = [abs(c.x - old[c.name].x) + abs(c.y - old[c.name].y)
             for c in after.components if c.name in old and old[c.name].is_placed]
    return float(np.mean(moves)) if moves else 0.0
