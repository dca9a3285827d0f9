"""
Metrics service.

Half-perimeter wirelength, cut nets / HBT estimate, bin-density overflow,
per-die utilization and a power proxy, gathered into a flat Report.
"""
import math
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field

from .. import config
from ..config import Stack3dError
from ..models import Design, Die, Library, is_shrunk, variant_of
from .placer import DensityGrid

logger = config.logger

UM2_PER_MM2 = 1e6


class MetricsError(Stack3dError):
    """Raised when a design cannot be evaluated."""
    exit_code = 1


class Report(BaseModel):
    """Flat evaluation record; None fields carry a reason in `notes`."""
    area_mm2: float = Field(..., ge=0, description="Single-die footprint")
    hpwl_um: float = Field(..., ge=0)
    cut_nets: int = Field(0, ge=0)
    hbt_estimate: int = Field(0, ge=0)
    hbt_utilization: Optional[float] = None
    overflow_um2: float = Field(0.0, ge=0)
    util_top: Optional[float] = None
    util_bottom: float = Field(0.0, ge=0)
    power_w: float = Field(0.0, ge=0)
    t_max_c: Optional[float] = None
    runtime_s: Optional[Dict[str, float]] = None
    notes: Dict[str, str] = Field(default_factory=dict)


def _live(design: Design):
    return [c for c in design.components if not is_shrunk(variant_of(c.master))]


def hpwl(design: Design, library: Library) -> float:
    """
    Exact half-perimeter wirelength in um, computed on the database-unit
    grid. Both dies share one plane.
    """
    units = design.units
    components = design.component_map()
    ports = {p.name: p for p in design.io_ports}
    total = 0
    for net in design.nets:
        xs: List[int] = []
        ys: List[int] = []
        for pin in net.pins:
            if pin.is_port:
                port = ports.get(pin.pin)
                if port is None or not port.is_placed:
                    raise MetricsError(f"net '{net.name}' references unplaced port '{pin.pin}'")
                x, y = port.x, port.y
            else:
                component = components.get(pin.component)
                if component is None or not component.is_placed:
                    raise MetricsError(f"net '{net.name}' references unplaced component '{pin.component}'")
                x, y = library.pin_position(component, pin.pin)
            xs.append(int(round(x * units)))
            ys.append(int(round(y * units)))
        if len(xs) > 1:
            total += (max(xs) - min(xs)) + (max(ys) - min(ys))
    return total / units


def cut_nets(design: Design) -> int:
    """Nets with terminals on both dies."""
    dies = {c.name: c.die for c in design.components}
    dies.update({("port", p.name): p.die for p in design.io_ports})
    count = 0
    for net in design.nets:
        seen = {dies.get(("port", p.pin)) if p.is_port else dies.get(p.component) for p in net.pins}
        if Die.TOP in seen and Die.BOTTOM in seen:
            count += 1
    return count


def hbt_estimate(design: Design) -> int:
    """One bonding terminal per cut net."""
    return cut_nets(design)


def hbt_capacity(design: Design, hbt_pitch: float) -> int:
    die = design.die_bottom
    if die is None:
        return 0
    return int(math.floor(die.area / (hbt_pitch * hbt_pitch)))


def overflow(design: Design, library: Library, grid_n: int = 32, target: float = 0.8) -> float:
    """
    Sum over bins of max(0, cell usage - target * (capacity - macro usage)),
    per die, in um^2.
    """
    dies = [Die.BOTTOM, Die.TOP] if design.is_3d else [Die.BOTTOM]
    total = 0.0
    for die in dies:
        if design.die_bottom is None:
            break
        grid = DensityGrid(design.die_rect(die), grid_n)
        on_die = [c for c in _live(design) if c.die is die and c.is_placed]
        grid.add_fixed([library.rect_of(c) for c in on_die if library.is_macro(c)])
        usage = grid.usage([library.rect_of(c) for c in on_die if not library.is_macro(c)])
        total += float(np.maximum(0.0, usage - grid.limit(target)).sum())
    return total


def utilization(design: Design, library: Library, die: Die) -> float:
    area = sum(library.master(c.master).area for c in _live(design) if c.die is die)
    return area / design.die_rect(die).area


def component_power(design: Design, library: Library, power_map: Optional[Dict[str, float]] = None,
                    density_w_per_mm2: Optional[float] = None) -> Dict[str, float]:
    """Watts per component from a power map, or proportional to area."""
    live = _live(design)
    if power_map is not None:
        names = {c.name for c in live}
        unknown = sorted(set(power_map) - names)
        if unknown:
            raise MetricsError(f"power file names unknown components: {unknown[:5]}")
        missing = [c.name for c in live if c.name not in power_map]
        if missing:
            logger.warning(f"{len(missing)} components have no power entry; counting them as 0 W.")
        return {c.name: float(power_map.get(c.name, 0.0)) for c in live}
    density = config.POWER_DENSITY_W_PER_MM2 if density_w_per_mm2 is None else density_w_per_mm2
    return {c.name: library.master(c.master).area / UM2_PER_MM2 * density for c in live}


def power_proxy(design: Design, library: Library, power_map: Optional[Dict[str, float]] = None,
                density_w_per_mm2: Optional[float] = None) -> float:
    return float(sum(component_power(design, library, power_map, density_w_per_mm2).values()))


def evaluate(design: Design, library: Library, power_map: Optional[Dict[str, float]] = None,
             hbt_pitch: Optional[float] = None, grid_n: int = 32, target: float = 0.8) -> Report:
    """Every metric except temperature and runtime."""
    if design.die_bottom is None:
        raise MetricsError(f"design '{design.name}' has no die outline")
    notes: Dict[str, str] = {"t_max_c": "thermal analysis not run",
                             "runtime_s": "runtime recording disabled"}
    cut = cut_nets(design)
    util_top = None
    if design.is_3d:
        util_top = utilization(design, library, Die.TOP)
    else:
        notes["util_top"] = "single-die design"
    hbt_util = None
    if hbt_pitch is not None and design.is_3d:
        capacity = hbt_capacity(design, hbt_pitch)
        hbt_util = cut / capacity if capacity else None
    else:
        notes["hbt_utilization"] = "single-die design" if not design.is_3d else "bond pitch unknown"
    report = Report(
        area_mm2=design.die_bottom.area / UM2_PER_MM2,
        hpwl_um=hpwl(design, library),
        cut_nets=cut,
        hbt_estimate=cut,
        hbt_utilization=hbt_util,
        overflow_um2=overflow(design, library, grid_n, target),
        util_top=util_top,
        util_bottom=utilization(design, library, Die.BOTTOM),
        power_w=power_proxy(design, library, power_map),
        notes=notes,
    )
    logger.info(f"Evaluated '{design.name}': area={report.area_mm2:.4f} mm2, HPWL={report.hpwl_um:.1f} um, "
                f"cut={report.cut_nets}, overflow={report.overflow_um2:.2f} um2, power={report.power_w:.4f} W")
    return report


_LOWER_IS_BETTER = ("area_mm2", "hpwl_um", "overflow_um2", "power_w", "t_max_c", "hbt_estimate")


def compare_reports(baseline: Report, candidate: Report) -> Dict[str, Optional[float]]:
    """Relative improvement of `candidate` over `baseline` in percent; positive is better."""
    result: Dict[str, Optional[float]] = {}
    for key in _LOWER_IS_BETTER:
        base = getattr(baseline, key)
        cand = getattr(candidate, key)
        if base is None or cand is None or base == 0:
            result[key] = None
        else:
            result[key] = (base - cand) / base * 100.0
    return result
