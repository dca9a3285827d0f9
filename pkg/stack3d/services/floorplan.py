"""
Floorplan service.

Sizes the die from total component area, builds site rows and places I/O
ports at random boundary sites.
"""
import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field

from .. import config
from ..config import Stack3dError
from ..models import Design, Die, Library, Orient, Rect
from ..params import FloorplanParams, FlowKind

logger = config.logger


class FloorplanError(Stack3dError):
    """Raised when a floorplan cannot be built."""
    exit_code = 1


class Row(BaseModel):
    index: int
    x: float
    y: float
    num_sites: int
    site_width: float
    height: float
    orient: Orient = Orient.N

    @property
    def ux(self) -> float:
        return self.x + self.num_sites * self.site_width


class FloorplanSpec(BaseModel):
    """Die outline(s), rows tiling the core and the boundary port sites used."""
    die_bottom: Rect
    die_top: Optional[Rect] = None
    site_name: str
    rows: List[Row] = Field(default_factory=list)
    io_pitch: float = 1.0
    io_relaxed: bool = False

    @property
    def die(self) -> Rect:
        return self.die_bottom

    @property
    def is_3d(self) -> bool:
        return self.die_top is not None


def _site_ceil(value: float, step: float, units: int) -> int:
    """Smallest number of `step`-sized sites covering `value`, computed on the DBU grid."""
    value_dbu = int(round(value * units))
    step_dbu = int(round(step * units))
    return max(1, -(-value_dbu // step_dbu))


def total_area(design: Design, library: Library) -> float:
    return sum(library.master(c.master).area for c in design.components)


def size_die(design: Design, library: Library, flow: FlowKind = FlowKind.FLOW_2D,
             utilization: float = 0.5, aspect: float = 1.0) -> FloorplanSpec:
    """
    Size a die at `utilization` and `aspect` (height / width).

    3D flows give each of the two identical dies half of the 2D area. Width
    and height are rounded up to whole sites and grown to fit the largest
    macro.
    """
    if not 0 < utilization <= 1:
        raise FloorplanError(f"utilization must be in (0, 1], got {utilization}")
    if aspect <= 0:
        raise FloorplanError(f"aspect must be positive, got {aspect}")
    site = library.site()
    if site is None:
        raise FloorplanError("technology has no site")
    units = design.units

    area = total_area(design, library) / utilization
    is_3d = flow is not FlowKind.FLOW_2D
    if is_3d:
        area /= 2
    if area <= 0:
        area = site.width * site.height
    width = math.sqrt(area / aspect)
    height = width * aspect

    num_sites = _site_ceil(width, site.width, units)
    num_rows = _site_ceil(height, site.height, units)
    masters = [library.master(c.master) for c in design.components]
    widest = max((m.width for m in masters), default=0.0)
    tallest = max((m.height for m in masters), default=0.0)
    fit_sites = _site_ceil(widest, site.width, units) if widest else 0
    fit_rows = _site_ceil(tallest, site.height, units) if tallest else 0
    if fit_sites > num_sites or fit_rows > num_rows:
        logger.warning(f"Growing die to fit a {widest} x {tallest} um macro.")
        num_sites = max(num_sites, fit_sites)
        num_rows = max(num_rows, fit_rows)

    die = Rect(lx=0.0, ly=0.0, ux=num_sites * site.width, uy=num_rows * site.height)
    rows = [Row(index=i, x=0.0, y=i * site.height, num_sites=num_sites, site_width=site.width,
                height=site.height, orient=Orient.N if i % 2 == 0 else Orient.FS)
            for i in range(num_rows)]
    logger.info(f"Sized {'3D' if is_3d else '2D'} die {die.width:.3f} x {die.height:.3f} um "
                f"({num_rows} rows x {num_sites} sites) at utilization {utilization}.")
    return FloorplanSpec(die_bottom=die, die_top=die if is_3d else None, site_name=site.name, rows=rows)


def build_rows(die: Rect, library: Library) -> List[Row]:
    """Rows tiling an existing die outline."""
    site = library.site()
    if site is None:
        raise FloorplanError("technology has no site")
    num_sites = int(math.floor(die.width / site.width + 1e-9))
    num_rows = int(math.floor(die.height / site.height + 1e-9))
    return [Row(index=i, x=die.lx, y=die.ly + i * site.height, num_sites=num_sites,
                site_width=site.width, height=site.height,
                orient=Orient.N if i % 2 == 0 else Orient.FS)
            for i in range(num_rows)]


def apply_floorplan(design: Design, spec: FloorplanSpec) -> Design:
    result = design.clone()
    result.die_bottom = spec.die_bottom
    result.die_top = None
    return result


def boundary_point(die: Rect, s: float) -> Tuple[float, float]:
    """Point at arc length `s` along the die boundary, counter-clockwise from the lower-left corner."""
    w, h = die.width, die.height
    s = s % (2 * (w + h))
    if s < w:
        return die.lx + s, die.ly
    s -= w
    if s < h:
        return die.ux, die.ly + s
    s -= h
    if s < w:
        return die.ux - s, die.uy
    s -= w
    return die.lx, die.uy - s


def default_io_layer(library: Library) -> Optional[str]:
    tech = library.technology
    if tech is None or not tech.routing_layers:
        return None
    routing = tech.routing_layers
    return routing[min(2, len(routing) - 1)].name


def place_io(design: Design, spec: FloorplanSpec, library: Library, seed: int = 1,
             params: Optional[FloorplanParams] = None) -> Design:
    """
    Place every port at a random boundary site, all on the bottom die.

    Sites sit `io_pitch` apart along the perimeter. With more ports than
    sites the pitch is relaxed to perimeter / ports.
    """
    params = params or FloorplanParams()
    result = design.clone()
    ports = result.io_ports
    if not ports:
        return result
    die = spec.die_bottom
    perimeter = 2 * (die.width + die.height)
    pitch = params.io_pitch
    num_sites = int(math.floor(perimeter / pitch + 1e-9))
    if len(ports) > num_sites:
        logger.warning(f"{len(ports)} ports exceed {num_sites} boundary sites at pitch {pitch} um; "
                       f"relaxing spacing.")
        pitch = perimeter / len(ports)
        num_sites = len(ports)
        spec.io_relaxed = True
    spec.io_pitch = pitch

    rng = np.random.default_rng(seed)
    chosen = rng.choice(num_sites, size=len(ports), replace=False)
    layer = params.io_layer or default_io_layer(library)
    units = result.units
    for port, site_index in zip(ports, chosen):
        x, y = boundary_point(die, (int(site_index) + 0.5) * pitch)
        port.x = round(x * units) / units
        port.y = round(y * units) / units
        port.layer = layer
        port.die = Die.BOTTOM
    logger.info(f"Placed {len(ports)} I/O ports on {num_sites} boundary sites (pitch {pitch:.3f} um).")
    return result
