"""
Pydantic models for the 3D backend domain.

This module defines the technology, library and design data model shared by
every stage of the flow, plus the `Library` container that resolves masters,
die variants and pin offsets.
"""
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


BOND_LAYER_NAME = "hbt"


class LayerKind(str, Enum):
    ROUTING = "ROUTING"
    CUT = "CUT"


class Direction(str, Enum):
    HORIZONTAL = "HORIZONTAL"
    VERTICAL = "VERTICAL"


class DieSide(str, Enum):
    BOTTOM = "BOTTOM"
    TOP = "TOP"
    BOND = "BOND"


class Die(str, Enum):
    BOTTOM = "BOTTOM"
    TOP = "TOP"


class MasterClass(str, Enum):
    CORE = "CORE"
    BLOCK = "BLOCK"


class Variant(str, Enum):
    BASE = "BASE"
    TOP = "TOP"
    BOTTOM = "BOTTOM"
    SHRUNK_TOP = "SHRUNK_TOP"
    SHRUNK_BOTTOM = "SHRUNK_BOTTOM"


class Orient(str, Enum):
    N = "N"
    S = "S"
    FN = "FN"
    FS = "FS"


class Status(str, Enum):
    UNPLACED = "UNPLACED"
    PLACED = "PLACED"
    FIXED = "FIXED"


class PinDirection(str, Enum):
    INPUT = "INPUT"
    OUTPUT = "OUTPUT"
    INOUT = "INOUT"


class DefMode(str, Enum):
    COMBINED = "COMBINED"
    TOP_ONLY = "TOP_ONLY"
    BOTTOM_ONLY = "BOTTOM_ONLY"


# Longest suffixes first so "_top_shrunk" is never read as "_shrunk".
VARIANT_SUFFIXES: List[Tuple[Variant, str]] = [
    (Variant.SHRUNK_BOTTOM, "_bottom_shrunk"),
    (Variant.SHRUNK_TOP, "_top_shrunk"),
    (Variant.BOTTOM, "_bottom"),
    (Variant.TOP, "_top"),
]
_SUFFIX = dict(VARIANT_SUFFIXES)


def variant_of(name: str) -> Variant:
    """Infer the library variant of a master from its name suffix."""
    for variant, suffix in VARIANT_SUFFIXES:
        if name.endswith(suffix) and len(name) > len(suffix):
            return variant
    return Variant.BASE


def base_name(name: str) -> str:
    """Strip any variant suffix from a master name."""
    variant = variant_of(name)
    if variant is Variant.BASE:
        return name
    return name[: -len(_SUFFIX[variant])]


def variant_name(base: str, variant: Variant) -> str:
    if variant is Variant.BASE:
        return base
    return base + _SUFFIX[variant]


def die_of_variant(variant: Variant) -> Die:
    if variant in (Variant.TOP, Variant.SHRUNK_TOP):
        return Die.TOP
    return Die.BOTTOM


def die_variant(die: Die) -> Variant:
    return Variant.TOP if die is Die.TOP else Variant.BOTTOM


def shrunk_variant(variant: Variant) -> Variant:
    if variant in (Variant.TOP, Variant.SHRUNK_TOP):
        return Variant.SHRUNK_TOP
    return Variant.SHRUNK_BOTTOM


def full_variant(variant: Variant) -> Variant:
    if variant is Variant.SHRUNK_TOP:
        return Variant.TOP
    if variant is Variant.SHRUNK_BOTTOM:
        return Variant.BOTTOM
    return variant


def is_shrunk(variant: Variant) -> bool:
    return variant in (Variant.SHRUNK_TOP, Variant.SHRUNK_BOTTOM)


class Rect(BaseModel):
    """Axis-aligned rectangle in microns."""
    model_config = ConfigDict(frozen=True)

    lx: float
    ly: float
    ux: float
    uy: float

    @model_validator(mode="after")
    def _check_order(self) -> "Rect":
        if self.lx > self.ux or self.ly > self.uy:
            raise ValueError(f"malformed rect ({self.lx}, {self.ly}) ({self.ux}, {self.uy})")
        return self

    @classmethod
    def from_center(cls, cx: float, cy: float, width: float, height: float) -> "Rect":
        return cls(lx=cx - width / 2, ly=cy - height / 2, ux=cx + width / 2, uy=cy + height / 2)

    @property
    def width(self) -> float:
        return self.ux - self.lx

    @property
    def height(self) -> float:
        return self.uy - self.ly

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return (self.lx + self.ux) / 2, (self.ly + self.uy) / 2

    def overlap_area(self, other: "Rect") -> float:
        w = min(self.ux, other.ux) - max(self.lx, other.lx)
        h = min(self.uy, other.uy) - max(self.ly, other.ly)
        if w <= 0 or h <= 0:
            return 0.0
        return w * h

    def contains(self, other: "Rect", tol: float = 1e-9) -> bool:
        return (other.lx >= self.lx - tol and other.ly >= self.ly - tol
                and other.ux <= self.ux + tol and other.uy <= self.uy + tol)

    def translated(self, dx: float, dy: float) -> "Rect":
        return Rect(lx=self.lx + dx, ly=self.ly + dy, ux=self.ux + dx, uy=self.uy + dy)


class Layer(BaseModel):
    """One routing or cut layer of the metal stack."""
    model_config = ConfigDict(frozen=True)

    name: str
    kind: LayerKind
    direction: Optional[Direction] = None
    pitch: float = Field(0.0, ge=0, description="Track pitch (routing) or cut pitch (cut), um")
    width: float = Field(0.0, ge=0, description="Wire width (routing) or cut size (cut), um")
    spacing: Optional[float] = Field(None, ge=0, description="Minimum spacing of routing layers, um")
    die_side: DieSide = DieSide.BOTTOM

    @model_validator(mode="after")
    def _check_layer(self) -> "Layer":
        if self.die_side is DieSide.BOND and self.kind is not LayerKind.CUT:
            raise ValueError(f"bond layer '{self.name}' must be a cut layer")
        if self.kind is LayerKind.ROUTING and (self.pitch <= 0 or self.width <= 0):
            raise ValueError(f"routing layer '{self.name}' needs positive pitch and width")
        return self


class Shape(BaseModel):
    """A rectangle on a named layer (pin port, obstruction or via geometry)."""
    model_config = ConfigDict(frozen=True)

    layer: str
    rect: Rect


class ViaDef(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    default: bool = False
    shapes: List[Shape] = Field(default_factory=list)


class Site(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    width: float = Field(..., gt=0)
    height: float = Field(..., gt=0)
    site_class: str = "CORE"


class Technology(BaseModel):
    """Ordered layer stack with sites and vias."""
    model_config = ConfigDict(frozen=True)

    distance_units_per_micron: int = Field(1000, gt=0)
    layers: List[Layer] = Field(default_factory=list)
    vias: List[ViaDef] = Field(default_factory=list)
    sites: List[Site] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_stack(self) -> "Technology":
        for below, above in zip(self.layers, self.layers[1:]):
            if below.kind is above.kind:
                raise ValueError(
                    f"layers '{below.name}' and '{above.name}' break the routing/cut alternation"
                )
        bonds = [layer.name for layer in self.layers if layer.die_side is DieSide.BOND]
        if len(bonds) > 1:
            raise ValueError(f"more than one bond layer: {bonds}")
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            raise ValueError("duplicate layer names in technology")
        return self

    @property
    def routing_layers(self) -> List[Layer]:
        return [layer for layer in self.layers if layer.kind is LayerKind.ROUTING]

    @property
    def bond_layer(self) -> Optional[Layer]:
        for layer in self.layers:
            if layer.die_side is DieSide.BOND:
                return layer
        return None

    @property
    def is_3d(self) -> bool:
        return self.bond_layer is not None

    def layer(self, name: str) -> Optional[Layer]:
        for layer in self.layers:
            if layer.name == name:
                return layer
        return None

    def core_site(self) -> Optional[Site]:
        for site in self.sites:
            if site.site_class == "CORE":
                return site
        return self.sites[0] if self.sites else None


class Pin(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    direction: PinDirection = PinDirection.INPUT
    shapes: List[Shape] = Field(default_factory=list)

    def center(self) -> Optional[Tuple[float, float]]:
        """Centre of the bounding box of all pin shapes."""
        if not self.shapes:
            return None
        lx = min(s.rect.lx for s in self.shapes)
        ly = min(s.rect.ly for s in self.shapes)
        ux = max(s.rect.ux for s in self.shapes)
        uy = max(s.rect.uy for s in self.shapes)
        return (lx + ux) / 2, (ly + uy) / 2


class CellMaster(BaseModel):
    """Library macro or standard cell."""
    model_config = ConfigDict(frozen=True)

    name: str
    master_class: MasterClass = MasterClass.CORE
    width: float = Field(..., gt=0)
    height: float = Field(..., gt=0)
    site: Optional[str] = None
    pins: List[Pin] = Field(default_factory=list)
    obstructions: List[Shape] = Field(default_factory=list)
    variant: Variant = Variant.BASE

    @model_validator(mode="after")
    def _check_variant(self) -> "CellMaster":
        if variant_of(self.name) is not self.variant:
            raise ValueError(
                f"master '{self.name}' is tagged {self.variant.value} but its name implies "
                f"{variant_of(self.name).value}"
            )
        names = [pin.name for pin in self.pins]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate pin names in master '{self.name}'")
        return self

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def is_macro(self) -> bool:
        return self.master_class is MasterClass.BLOCK

    @property
    def base_name(self) -> str:
        return base_name(self.name)

    def pin(self, name: str) -> Optional[Pin]:
        for pin in self.pins:
            if pin.name == name:
                return pin
        return None


class Component(BaseModel):
    """Placed (or unplaced) instance of a master. Coordinates are the lower-left origin."""
    name: str
    master: str
    x: float = 0.0
    y: float = 0.0
    orient: Orient = Orient.N
    status: Status = Status.UNPLACED
    die: Die = Die.BOTTOM

    @property
    def is_placed(self) -> bool:
        return self.status is not Status.UNPLACED


class Port(BaseModel):
    """Top-level I/O port; unplaced ports have no location."""
    name: str
    direction: PinDirection = PinDirection.INPUT
    x: Optional[float] = None
    y: Optional[float] = None
    layer: Optional[str] = None
    die: Die = Die.BOTTOM

    @property
    def is_placed(self) -> bool:
        return self.x is not None and self.y is not None


class NetPin(BaseModel):
    """Net terminal: a component pin, or a port when `component` is None."""
    model_config = ConfigDict(frozen=True)

    component: Optional[str] = None
    pin: str

    @property
    def is_port(self) -> bool:
        return self.component is None


class Net(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    pins: List[NetPin] = Field(default_factory=list)


class Design(BaseModel):
    """Netlist, die outlines and placement state."""
    name: str
    units: int = Field(1000, gt=0)
    die_bottom: Optional[Rect] = None
    die_top: Optional[Rect] = None
    components: List[Component] = Field(default_factory=list)
    io_ports: List[Port] = Field(default_factory=list)
    nets: List[Net] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_design(self) -> "Design":
        names = [c.name for c in self.components]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate component names in design '{self.name}'")
        if self.die_top is not None:
            if self.die_bottom is None:
                raise ValueError("die_top set without die_bottom")
            if (abs(self.die_top.width - self.die_bottom.width) > 1e-9
                    or abs(self.die_top.height - self.die_bottom.height) > 1e-9):
                raise ValueError("top and bottom die outlines must have identical dimensions")
        return self

    @property
    def is_3d(self) -> bool:
        return self.die_top is not None

    def die_rect(self, die: Die) -> Rect:
        rect = self.die_top if die is Die.TOP else self.die_bottom
        if rect is None:
            rect = self.die_bottom
        if rect is None:
            raise ValueError(f"design '{self.name}' has no die outline")
        return rect

    def component_map(self) -> Dict[str, Component]:
        return {c.name: c for c in self.components}

    def component(self, name: str) -> Component:
        for component in self.components:
            if component.name == name:
                return component
        raise KeyError(f"component '{name}' not found in design '{self.name}'")

    def port(self, name: str) -> Optional[Port]:
        for port in self.io_ports:
            if port.name == name:
                return port
        return None

    def clone(self) -> "Design":
        """Copy with fresh component and port objects; nets are immutable and shared."""
        return self.model_copy(update={
            "components": [c.model_copy() for c in self.components],
            "io_ports": [p.model_copy() for p in self.io_ports],
        })


def _orient_point(px: float, py: float, width: float, height: float, orient: Orient) -> Tuple[float, float]:
    if orient is Orient.N:
        return px, py
    if orient is Orient.S:
        return width - px, height - py
    if orient is Orient.FN:
        return width - px, py
    return px, height - py


class Library:
    """Technology plus masters by name, with variant lookup and pin offset cache."""

    def __init__(self, technology: Optional[Technology] = None, masters: Iterable[CellMaster] = ()):
        self.technology = technology
        self._masters: Dict[str, CellMaster] = {}
        self._pin_offsets: Dict[str, Dict[str, Tuple[float, float]]] = {}
        for master in masters:
            self.add(master)

    def add(self, master: CellMaster) -> None:
        self._masters[master.name] = master
        self._pin_offsets.pop(master.name, None)

    def __contains__(self, name: str) -> bool:
        return name in self._masters

    def __len__(self) -> int:
        return len(self._masters)

    @property
    def masters(self) -> List[CellMaster]:
        return [self._masters[name] for name in sorted(self._masters)]

    def master(self, name: str) -> CellMaster:
        try:
            return self._masters[name]
        except KeyError:
            raise KeyError(f"master '{name}' not found in library") from None

    def variant(self, name: str, variant: Variant) -> Optional[CellMaster]:
        return self._masters.get(variant_name(base_name(name), variant))

    def site(self) -> Optional[Site]:
        return self.technology.core_site() if self.technology else None

    def pin_offset(self, master_name: str, pin: str, orient: Orient = Orient.N) -> Tuple[float, float]:
        """Pin position relative to the instance origin under `orient`."""
        offsets = self._pin_offsets.get(master_name)
        if offsets is None:
            master = self.master(master_name)
            offsets = {}
            for p in master.pins:
                center = p.center()
                offsets[p.name] = center if center is not None else (master.width / 2, master.height / 2)
            self._pin_offsets[master_name] = offsets
        if pin not in offsets:
            raise KeyError(f"pin '{pin}' not found on master '{master_name}'")
        master = self._masters[master_name]
        px, py = offsets[pin]
        return _orient_point(px, py, master.width, master.height, orient)

    def rect_of(self, component: Component) -> Rect:
        master = self.master(component.master)
        return Rect(lx=component.x, ly=component.y,
                    ux=component.x + master.width, uy=component.y + master.height)

    def pin_position(self, component: Component, pin: str) -> Tuple[float, float]:
        dx, dy = self.pin_offset(component.master, pin, component.orient)
        return component.x + dx, component.y + dy

    def is_macro(self, component: Component) -> bool:
        return self.master(component.master).is_macro
