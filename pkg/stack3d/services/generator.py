"""
Synthetic PDK and design generator.

Builds a 10-metal technology with 45 nm-class geometry, a small standard
cell library and SRAM-like block masters, and seeded netlists whose nets
follow a clustered, mostly local connection pattern. Everything is a pure
function of the preset and the seed.
"""
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from .. import config
from ..models import (
    CellMaster, Component, Design, Direction, Layer, LayerKind, Library, MasterClass, Net, NetPin,
    Pin, PinDirection, Port, Rect, Shape, Site, Technology, ViaDef,
)
from ..params import GeneratorParams
from . import lefdef

logger = config.logger

SITE_NAME = "FreePDK45_38x28_10R_NP_162NW_34O"
SITE_WIDTH = 0.19
ROW_HEIGHT = 1.4

# (pitch, width, spacing) per routing layer, metal1 first.
_METALS = [
    (0.14, 0.07, 0.065), (0.19, 0.07, 0.07), (0.14, 0.07, 0.07), (0.28, 0.14, 0.14),
    (0.28, 0.14, 0.14), (0.28, 0.14, 0.14), (0.8, 0.4, 0.4), (0.8, 0.4, 0.4),
    (1.6, 0.8, 0.8), (1.6, 0.8, 0.8),
]
# (cut size, cut spacing) per via layer, via1 first.
_CUTS = [
    (0.07, 0.08), (0.07, 0.09), (0.07, 0.09), (0.14, 0.16), (0.14, 0.16), (0.14, 0.16),
    (0.4, 0.44), (0.4, 0.44), (0.8, 0.88),
]

# name: (width in sites, inputs, output)
_CELLS: Dict[str, Tuple[int, List[str], str]] = {
    "INV_X1": (2, ["A"], "ZN"),
    "BUF_X1": (3, ["A"], "Z"),
    "NAND2_X1": (3, ["A1", "A2"], "ZN"),
    "NOR2_X1": (3, ["A1", "A2"], "ZN"),
    "AOI21_X1": (4, ["A", "B1", "B2"], "ZN"),
    "DFF_X1": (17, ["D", "CK"], "Q"),
}
_CELL_MIX = {"INV_X1": 0.22, "BUF_X1": 0.1, "NAND2_X1": 0.25, "NOR2_X1": 0.15, "AOI21_X1": 0.14, "DFF_X1": 0.14}

MACRO_DATA_PINS = 8


class DesignPreset(BaseModel):
    """Size knobs of one synthetic design family."""
    num_macros: int = Field(..., ge=0)
    num_cells: int = Field(..., ge=1)
    num_ports: int = Field(..., ge=0)
    macro_area_fraction: float = Field(0.4, ge=0, lt=1, description="Macro share of the total area")
    cluster_size: int = Field(32, ge=2)
    locality: float = Field(0.85, ge=0, le=1, description="Probability a sink is drawn from the driver's cluster")


# Counts are scaled-down ratios of a 132-macro, ~170K-cell processor core.
PRESETS: Dict[str, DesignPreset] = {
    "tiny": DesignPreset(num_macros=4, num_cells=200, num_ports=16),
    "small": DesignPreset(num_macros=8, num_cells=1000, num_ports=32),
    "medium": DesignPreset(num_macros=16, num_cells=3000, num_ports=64),
    "ariane-like": DesignPreset(num_macros=33, num_cells=4200, num_ports=128, macro_area_fraction=0.45),
}


def _r(value: float) -> float:
    return round(value, 4)


def generate_technology(units: Optional[int] = None) -> Technology:
    """metal1..metal10 with via1..via9 between them; odd metals run horizontally."""
    units = units or config.DBU_PER_MICRON
    layers: List[Layer] = []
    vias: List[ViaDef] = []
    for k, (pitch, width, spacing) in enumerate(_METALS, start=1):
        direction = Direction.HORIZONTAL if k % 2 else Direction.VERTICAL
        layers.append(Layer(name=f"metal{k}", kind=LayerKind.ROUTING, direction=direction,
                            pitch=pitch, width=width, spacing=spacing))
        if k <= len(_CUTS):
            size, cut_spacing = _CUTS[k - 1]
            layers.append(Layer(name=f"via{k}", kind=LayerKind.CUT, pitch=_r(size + cut_spacing), width=size))
            half = size / 2
            enclosure = max(_METALS[k - 1][1], _METALS[k][1], size) / 2
            vias.append(ViaDef(name=f"via{k}_0", default=True, shapes=[
                Shape(layer=f"metal{k}", rect=Rect(lx=-enclosure, ly=-half, ux=enclosure, uy=half)),
                Shape(layer=f"via{k}", rect=Rect(lx=-half, ly=-half, ux=half, uy=half)),
                Shape(layer=f"metal{k + 1}", rect=Rect(lx=-half, ly=-enclosure, ux=half, uy=enclosure)),
            ]))
    site = Site(name=SITE_NAME, width=SITE_WIDTH, height=ROW_HEIGHT)
    return Technology(distance_units_per_micron=units, layers=layers, vias=vias, sites=[site])


def _cell_master(name: str, sites: int, inputs: List[str], output: str) -> CellMaster:
    width = _r(sites * SITE_WIDTH)
    pins = []
    names = inputs + [output]
    for k, pin in enumerate(names):
        x = _r(width * (k + 1) / (len(names) + 1))
        rect = Rect(lx=_r(x - 0.035), ly=0.385, ux=_r(x + 0.035), uy=1.015)
        direction = PinDirection.OUTPUT if pin == output else PinDirection.INPUT
        pins.append(Pin(name=pin, direction=direction, shapes=[Shape(layer="metal1", rect=rect)]))
    return CellMaster(name=name, master_class=MasterClass.CORE, width=width, height=ROW_HEIGHT,
                      site=SITE_NAME, pins=pins)


def standard_cells() -> List[CellMaster]:
    return [_cell_master(name, *spec) for name, spec in _CELLS.items()]


def _macro_master(name: str, width: float, height: float) -> CellMaster:
    """SRAM-like block: data inputs on the left edge, outputs on the right, metal4 pins."""
    pins = []
    step = height / (MACRO_DATA_PINS + 1)
    for k in range(MACRO_DATA_PINS):
        y = _r(step * (k + 1))
        pins.append(Pin(name=f"D{k}", direction=PinDirection.INPUT, shapes=[
            Shape(layer="metal4", rect=Rect(lx=0.0, ly=_r(y - 0.07), ux=0.28, uy=_r(y + 0.07)))]))
        pins.append(Pin(name=f"Q{k}", direction=PinDirection.OUTPUT, shapes=[
            Shape(layer="metal4", rect=Rect(lx=_r(width - 0.28), ly=_r(y - 0.07), ux=width, uy=_r(y + 0.07)))]))
    core = Rect(lx=0.3, ly=0.0, ux=_r(width - 0.3), uy=height)
    obstructions = [Shape(layer=f"metal{k}", rect=core) for k in (1, 2, 3)]
    return CellMaster(name=name, master_class=MasterClass.BLOCK, width=width, height=height,
                      pins=pins, obstructions=obstructions)


def _macro_sizes(rng: np.random.Generator, count: int, target_area: float) -> List[Tuple[float, float]]:
    """Log-normal outlines scaled to `target_area` in total, snapped to whole sites and rows."""
    if count == 0 or target_area <= 0:
        return []
    raw_w = rng.lognormal(mean=0.0, sigma=0.35, size=count)
    raw_h = rng.lognormal(mean=0.0, sigma=0.35, size=count)
    scale = np.sqrt(target_area / float(np.sum(raw_w * raw_h)))
    sizes = []
    for w, h in zip(raw_w * scale, raw_h * scale):
        sites = max(4, int(round(w / SITE_WIDTH)))
        rows = max(1, int(round(h / ROW_HEIGHT)))
        sizes.append((_r(sites * SITE_WIDTH), _r(rows * ROW_HEIGHT)))
    return sizes


class _NetBuilder:
    """Cells grouped in clusters; each driver picks sinks mostly from its own cluster."""

    def __init__(self, rng: np.random.Generator, cells: List[Tuple[str, str]], preset: DesignPreset):
        self.rng = rng
        self.cells = cells
        self.preset = preset
        self.num_clusters = max(1, -(-len(cells) // preset.cluster_size))
        self.free_inputs = [list(_CELLS[master][1]) for _, master in cells]
        self.terms: Dict[str, List[NetPin]] = {}
        self.order: List[str] = []

    def cluster_of(self, index: int) -> int:
        return index // self.preset.cluster_size

    def cell_in(self, cluster: int) -> int:
        lo = cluster * self.preset.cluster_size
        hi = min(len(self.cells), lo + self.preset.cluster_size)
        return int(self.rng.integers(lo, hi))

    def pick(self, cluster: int) -> int:
        if self.rng.random() < self.preset.locality or self.num_clusters == 1:
            return self.cell_in(cluster)
        # Remote sinks are geometrically rarer with cluster distance.
        distance = int(self.rng.geometric(0.35))
        sign = 1 if self.rng.random() < 0.5 else -1
        return self.cell_in((cluster + sign * distance) % self.num_clusters)

    def take_input(self, index: int) -> Optional[NetPin]:
        if not self.free_inputs[index]:
            return None
        return NetPin(component=self.cells[index][0], pin=self.free_inputs[index].pop(0))

    def add(self, net: str, pin: NetPin) -> None:
        if net not in self.terms:
            self.terms[net] = []
            self.order.append(net)
        self.terms[net].append(pin)

    def driver_net(self, index: int) -> str:
        name, master = self.cells[index]
        net = f"n_{name}"
        if net not in self.terms:
            self.add(net, NetPin(component=name, pin=_CELLS[master][2]))
        return net

    def nets(self) -> List[Net]:
        return [Net(name=name, pins=self.terms[name]) for name in self.order if len(self.terms[name]) > 1]


def generate_design(preset: Union[str, DesignPreset], seed: int = 1,
                    name: Optional[str] = None) -> Tuple[Design, List[CellMaster]]:
    """
    Seeded netlist plus the block masters it instantiates.

    Returns the unplaced design (no die outline, unplaced ports) and the
    macro masters, which depend on the seed.
    """
    if isinstance(preset, str):
        if preset not in PRESETS:
            raise ValueError(f"unknown preset '{preset}', expected one of {sorted(PRESETS)}")
        label, preset = preset, PRESETS[preset]
    else:
        label = "custom"
    rng = np.random.default_rng(seed)
    masters = standard_cells()
    by_name = {m.name: m for m in masters}

    kinds = list(_CELL_MIX)
    picks = rng.choice(len(kinds), size=preset.num_cells, p=[_CELL_MIX[k] for k in kinds])
    cells = [(f"u{i}", kinds[int(k)]) for i, k in enumerate(picks)]
    cell_area = sum(by_name[m].area for _, m in cells)
    macro_area = cell_area * preset.macro_area_fraction / (1.0 - preset.macro_area_fraction)
    sizes = _macro_sizes(rng, preset.num_macros, macro_area)
    macro_masters = [_macro_master(f"fakeram_{i:02d}", w, h) for i, (w, h) in enumerate(sizes)]

    builder = _NetBuilder(rng, cells, preset)
    for i in range(len(cells)):
        fanout = min(6, int(rng.geometric(0.45)))
        cluster = builder.cluster_of(i)
        for _ in range(fanout):
            j = builder.pick(cluster)
            if j == i:
                continue
            sink = builder.take_input(j)
            if sink is not None:
                builder.add(builder.driver_net(i), sink)

    components = [Component(name=f"mem{i}", master=m.name) for i, m in enumerate(macro_masters)]
    for m, master in enumerate(macro_masters):
        cluster = (m * builder.num_clusters) // max(1, len(macro_masters))
        for k in range(MACRO_DATA_PINS):
            builder.add(builder.driver_net(builder.cell_in(cluster)), NetPin(component=f"mem{m}", pin=f"D{k}"))
            net = f"mem{m}_q{k}"
            builder.add(net, NetPin(component=f"mem{m}", pin=f"Q{k}"))
            for _ in range(1 + int(rng.integers(0, 2))):
                sink = builder.take_input(builder.pick(cluster))
                if sink is not None:
                    builder.add(net, sink)
    components += [Component(name=c, master=m) for c, m in cells]

    ports = []
    for p in range(preset.num_ports):
        cluster = int(rng.integers(0, builder.num_clusters))
        if p % 2 == 0:
            port = Port(name=f"in{p // 2}", direction=PinDirection.INPUT)
            builder.add(port.name, NetPin(pin=port.name))
            for _ in range(1 + int(rng.integers(0, 2))):
                sink = builder.take_input(builder.cell_in(cluster))
                if sink is not None:
                    builder.add(port.name, sink)
        else:
            port = Port(name=f"out{p // 2}", direction=PinDirection.OUTPUT)
            builder.add(builder.driver_net(builder.cell_in(cluster)), NetPin(pin=port.name))
        ports.append(port)

    design_name = name or f"{label.replace('-', '_')}_s{seed}"
    design = Design(name=design_name, units=config.DBU_PER_MICRON, components=components,
                    io_ports=ports, nets=builder.nets())
    logger.info(f"Generated design '{design_name}': {len(macro_masters)} macros, {len(cells)} cells, "
                f"{len(ports)} ports, {len(design.nets)} nets.")
    return design, macro_masters


def generate(params: Optional[GeneratorParams] = None) -> Tuple[Library, Design]:
    """2D library (technology, standard cells, the design's block masters) and the design."""
    params = params or GeneratorParams()
    technology = generate_technology()
    design, macros = generate_design(params.preset, params.seed)
    library = Library(technology=technology, masters=standard_cells() + macros)
    return library, design


def write_generated(library: Library, design: Design, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Write tech.lef, cells.lef and design.def."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"tech_lef": out / "tech.lef", "cells_lef": out / "cells.lef", "def": out / "design.def"}
    units = design.units
    paths["tech_lef"].write_text(lefdef.write_lef(library.technology, [], units))
    paths["cells_lef"].write_text(lefdef.write_lef(None, library.masters, units))
    paths["def"].write_text(lefdef.write_def(design))
    logger.info(f"Wrote generated PDK and design to {out}.")
    return paths
