"""
Tiling placement service.

Skyline packing of macros with a uniform halo that grows until the packed
macros reach a target fraction of the die height, followed by cell
placement with the other die's macros projected as shrunk instances.
"""
from typing import List, NamedTuple, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from .. import config
from ..config import Stack3dError
from ..models import CellMaster, Design, Die, Library, Orient, Rect, Status
from ..params import PlacerParams, TilingParams
from . import placer

logger = config.logger


class TilingInfeasibleError(Stack3dError):
    """Raised when the macros cannot be packed into the die."""
    exit_code = 3


class MacroBox(NamedTuple):
    name: str
    width: float
    height: float

    @property
    def area(self) -> float:
        return self.width * self.height


class SkylinePlacement(NamedTuple):
    name: str
    x: float
    y: float


class Skyline:
    """
    Upper envelope of packed rectangles as (x_start, x_end, height) segments
    in database units. Segments tile [0, width) and adjacent heights differ.
    """

    def __init__(self, width: int):
        if width <= 0:
            raise ValueError("skyline width must be positive")
        self.width = width
        self.segments: List[List[int]] = [[0, width, 0]]

    def candidates(self) -> List[int]:
        return [seg[0] for seg in self.segments]

    def height_over(self, x: int, w: int) -> int:
        """Highest segment overlapping [x, x + w)."""
        return max(h for x0, x1, h in self.segments if x0 < x + w and x1 > x)

    def area(self) -> int:
        return sum((x1 - x0) * h for x0, x1, h in self.segments)

    def max_height(self) -> int:
        return max(h for _, _, h in self.segments)

    def raise_to(self, x: int, w: int, top: int) -> None:
        """Set the skyline over [x, x + w) to `top` and merge equal neighbours."""
        updated: List[List[int]] = []
        for x0, x1, h in self.segments:
            if x1 <= x or x0 >= x + w:
                updated.append([x0, x1, h])
                continue
            if x0 < x:
                updated.append([x0, x, h])
            if x1 > x + w:
                updated.append([x + w, x1, h])
        updated.append([x, x + w, top])
        updated.sort()
        merged: List[List[int]] = []
        for seg in updated:
            if merged and merged[-1][2] == seg[2] and merged[-1][1] == seg[0]:
                merged[-1][1] = seg[1]
            else:
                merged.append(seg)
        self.segments = merged


def order_macros(macros: Sequence[MacroBox]) -> List[MacroBox]:
    """Decreasing area, then decreasing height, then name."""
    return sorted(macros, key=lambda m: (-m.area, -m.height, m.name))


def _to_dbu(value: float, units: int) -> int:
    return int(round(value * units))


def skyline_pack(macros: Sequence[MacroBox], die: Rect, halo: float = 0.0,
                 units: int = 1000) -> Optional[Tuple[List[SkylinePlacement], Skyline]]:
    """Pack in the given order; None when some macro finds no feasible candidate."""
    die_w = _to_dbu(die.width, units)
    die_h = _to_dbu(die.height, units)
    halo_dbu = _to_dbu(halo, units)
    skyline = Skyline(die_w)
    placements = []
    for macro in macros:
        w = _to_dbu(macro.width, units) + 2 * halo_dbu
        h = _to_dbu(macro.height, units) + 2 * halo_dbu
        best = None
        for x in skyline.candidates():
            if x + w > die_w:
                continue
            y = skyline.height_over(x, w)
            if y + h > die_h:
                continue
            if best is None or (y, x) < best:
                best = (y, x)
        if best is None:
            return None
        y, x = best
        skyline.raise_to(x, w, y + h)
        placements.append(SkylinePlacement(
            name=macro.name,
            x=(_to_dbu(die.lx, units) + x + halo_dbu) / units,
            y=(_to_dbu(die.ly, units) + y + halo_dbu) / units,
        ))
    return placements, skyline


def skyline_place(macros_ordered: Sequence[MacroBox], die: Rect, halo: float = 0.0,
                  units: int = 1000) -> Optional[List[SkylinePlacement]]:
    """
    Leftmost position of the lowest skyline for each macro in order.

    Candidates are the left edges of skyline segments; a macro inflated by
    `halo` on every side rests on the highest segment it spans. Returned
    coordinates are the lower-left corners of the macros themselves.
    """
    packed = skyline_pack(macros_ordered, die, halo, units)
    return packed[0] if packed is not None else None


class TilingResult(BaseModel):
    design: Design
    halo: float
    max_height: float
    placements: List[Tuple[str, float, float]] = Field(default_factory=list)


def macro_boxes(design: Design, library: Library, die: Die) -> List[MacroBox]:
    boxes = []
    for component in design.components:
        if component.die is die and library.is_macro(component):
            master: CellMaster = library.master(component.master)
            boxes.append(MacroBox(component.name, master.width, master.height))
    return boxes


def tile_die(design: Design, library: Library, die: Die = Die.TOP,
             params: Optional[TilingParams] = None, sweep: bool = True) -> TilingResult:
    """
    Pack the macros of `die` and fix them.

    With `sweep` the halo grows from 0 in `halo_step` increments and the
    first halo whose skyline reaches `height_target` of the die height is
    used; when packing fails first, the largest feasible halo is kept.
    """
    params = params or TilingParams()
    units = design.units
    die_rect = design.die_rect(die)
    ordered = order_macros(macro_boxes(design, library, die))
    result = design.clone()
    if not ordered:
        return TilingResult(design=result, halo=0.0, max_height=0.0)

    step = _to_dbu(params.halo_step, units)
    limit = _to_dbu(params.halo_max, units)
    target = params.height_target * _to_dbu(die_rect.height, units)
    chosen = None
    k = 0
    while True:
        halo = k * step / units
        packed = skyline_pack(ordered, die_rect, halo, units)
        if packed is None:
            if chosen is None:
                raise TilingInfeasibleError(
                    f"{len(ordered)} macros do not fit the {die.value} die even without halo")
            logger.info(f"Packing infeasible at halo {halo} um; keeping halo {chosen[0]} um.")
            break
        chosen = (halo, packed)
        height = packed[1].max_height()
        if not sweep or height >= target - 1e-6:
            break
        k += 1
        if k * step > limit:
            logger.info(f"Halo sweep reached {params.halo_max} um without meeting the height target.")
            break

    halo, (placements, skyline) = chosen
    positions = {p.name: p for p in placements}
    for component in result.components:
        p = positions.get(component.name)
        if p is not None:
            component.x, component.y = p.x, p.y
            component.orient = Orient.N
            component.status = Status.FIXED
    max_height = skyline.max_height() / units
    logger.info(f"Tiled {len(placements)} macros on {die.value} with halo {halo} um; "
                f"skyline height {max_height:.3f} of {die_rect.height:.3f} um.")
    return TilingResult(design=result, halo=halo, max_height=max_height,
                        placements=[(p.name, p.x, p.y) for p in placements])


def tile_top_die(design: Design, library: Library, params: Optional[TilingParams] = None) -> TilingResult:
    return tile_die(design, library, Die.TOP, params, sweep=True)


def project_and_place_cells(design: Design, library: Library, params: Optional[PlacerParams] = None,
                            legalize: bool = True) -> Design:
    """
    Place BOTTOM cells with TOP macros projected onto BOTTOM as fixed shrunk
    instances at the same centres; the projections do not survive in the
    returned design.
    """
    return placer.place_cells_with_projection(design, library, params or PlacerParams(),
                                              Die.BOTTOM, legalize)


def run_tiling(design: Design, library: Library, tiling: Optional[TilingParams] = None,
               placer_params: Optional[PlacerParams] = None, legalize: bool = True) -> TilingResult:
    """TOP macros by halo sweep, relocated BOTTOM macros packed without halo, then cells."""
    top = tile_top_die(design, library, tiling)
    current = top.design
    if macro_boxes(current, library, Die.BOTTOM):
        current = tile_die(current, library, Die.BOTTOM, tiling, sweep=False).design
    current = project_and_place_cells(current, library, placer_params, legalize)
    top_cells = [c for c in current.components if c.die is Die.TOP and not library.is_macro(c)]
    if top_cells:
        current = placer.place_cells_with_projection(current, library, placer_params or PlacerParams(),
                                                     Die.TOP, legalize)
    return TilingResult(design=current, halo=top.halo, max_height=top.max_height,
                        placements=top.placements)
