"""
LEF/DEF reader and writer service.

Reads and writes the subset of LEF (VERSION, UNITS, SITE, LAYER, VIA, MACRO
with CLASS/SIZE/PIN/PORT/RECT/OBS) and DEF (UNITS, DIEAREA, COMPONENTS, PINS,
NETS) the flow needs. Statements outside the subset are skipped with a
warning. All emitted coordinates are integral in database units.
"""
import re
from decimal import Decimal
from pathlib import Path
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Type, TypeVar, Union

from .. import config
from ..config import Stack3dError
from ..models import (
    BOND_LAYER_NAME, CellMaster, Component, DefMode, Design, Die, DieSide, Direction, Layer,
    LayerKind, Library, MasterClass, Net, NetPin, Orient, Pin, PinDirection, Port, Rect, Shape,
    Site, Status, Technology, Variant, ViaDef, base_name, die_of_variant, full_variant, is_shrunk,
    variant_name, variant_of,
)

logger = config.logger

E = TypeVar("E", bound=Enum)

_TOKEN_RE = re.compile(r'"[^"]*"|;|\(|\)|[^\s;()]+')

# Block-structured statements skipped as a whole: keyword -> whether the END carries a name.
_LEF_SKIP_BLOCKS = {"VIARULE": True, "NONDEFAULTRULE": True, "PROPERTYDEFINITIONS": False,
                    "SPACING": False}
_DEF_SKIP_SECTIONS = {"SPECIALNETS", "VIAS", "NONDEFAULTRULES", "REGIONS", "GROUPS", "BLOCKAGES",
                      "PROPERTYDEFINITIONS", "STYLES", "FILLS", "SCANCHAINS", "SLOTS"}
_PORT_HALF_DBU = 70


class LefDefParseError(Stack3dError):
    """Raised when LEF/DEF text cannot be read."""
    exit_code = 2

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})" if line else message)


class _Token:
    __slots__ = ("value", "line", "column")

    def __init__(self, value: str, line: int, column: int):
        self.value = value
        self.line = line
        self.column = column


class _TokenStream:
    """Whitespace/semicolon tokenizer with position tracking and '#' comments."""

    def __init__(self, text: str, warnings: Optional[List[str]] = None):
        self.tokens: List[_Token] = []
        self.pos = 0
        self.warnings = warnings if warnings is not None else []
        for lineno, line in enumerate(text.splitlines(), start=1):
            for match in _TOKEN_RE.finditer(line):
                value = match.group(0)
                if value.startswith("#"):
                    break
                self.tokens.append(_Token(value, lineno, match.start() + 1))

    def at_end(self) -> bool:
        return self.pos >= len(self.tokens)

    def peek(self, offset: int = 0) -> Optional[str]:
        i = self.pos + offset
        return self.tokens[i].value if i < len(self.tokens) else None

    def next(self) -> _Token:
        if self.at_end():
            last = self.tokens[-1] if self.tokens else _Token("", 0, 0)
            raise LefDefParseError("unexpected end of input", last.line, last.column)
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def expect(self, value: str) -> _Token:
        token = self.next()
        if token.value != value:
            raise LefDefParseError(f"expected '{value}', found '{token.value}'", token.line, token.column)
        return token

    def number(self) -> float:
        token = self.next()
        try:
            return float(token.value)
        except ValueError:
            raise LefDefParseError(f"expected a number, found '{token.value}'", token.line, token.column)

    def integer(self) -> int:
        token = self.next()
        try:
            return int(token.value)
        except ValueError:
            raise LefDefParseError(f"expected an integer, found '{token.value}'", token.line, token.column)

    def keyword(self, kind: Type[E], what: str) -> E:
        token = self.next()
        try:
            return kind(token.value)
        except ValueError:
            raise LefDefParseError(f"unknown {what} '{token.value}'", token.line, token.column)

    def warn(self, token: _Token, what: str) -> None:
        message = f"skipped unsupported {what} '{token.value}' at line {token.line}"
        self.warnings.append(message)
        logger.warning(message)

    def skip_statement(self) -> None:
        while self.next().value != ";":
            pass

    def skip_until_end(self, name: Optional[str]) -> None:
        """Skip tokens through 'END' (followed by `name` when given)."""
        while True:
            token = self.next()
            if token.value != "END":
                continue
            if name is None or self.peek() == name:
                if name is not None:
                    self.next()
                return


def _fmt(value: float, units: int) -> str:
    """Format microns as an exact decimal on the database-unit grid."""
    dbu = int(round(value * units))
    text = format((Decimal(dbu) / Decimal(units)).normalize(), "f")
    return "0" if text in ("-0", "") else text


def _snap(value: float, units: int) -> float:
    return round(value * units) / units


def to_dbu(value: float, units: int) -> int:
    return int(round(value * units))


# ---------------------------------------------------------------- LEF reading


class LefReader:
    """Reads technology and macros from one LEF text."""

    def __init__(self, text: str, technology: Optional[Technology] = None,
                 warnings: Optional[List[str]] = None):
        self.stream = _TokenStream(text, warnings)
        self.known_technology = technology
        self.units = technology.distance_units_per_micron if technology else 1000
        self.layers: List[Layer] = []
        self.vias: List[ViaDef] = []
        self.sites: List[Site] = []
        self.masters: List[CellMaster] = []
        self.saw_units = False

    def read(self) -> Tuple[Optional[Technology], List[CellMaster]]:
        s = self.stream
        while not s.at_end():
            token = s.next()
            keyword = token.value
            if keyword in ("VERSION", "BUSBITCHARS", "DIVIDERCHAR", "NAMESCASESENSITIVE"):
                s.skip_statement()
            elif keyword == "UNITS":
                self._read_units()
            elif keyword == "SITE":
                self.sites.append(self._read_site())
            elif keyword == "LAYER":
                layer = self._read_layer()
                if layer is not None:
                    self.layers.append(layer)
            elif keyword == "VIA":
                self.vias.append(self._read_via())
            elif keyword == "MACRO":
                self.masters.append(self._read_macro())
            elif keyword == "END":
                if s.peek() == "LIBRARY":
                    s.next()
                    break
                raise LefDefParseError("unexpected END", token.line, token.column)
            elif keyword in _LEF_SKIP_BLOCKS:
                s.warn(token, "block")
                name = s.next().value if _LEF_SKIP_BLOCKS[keyword] else keyword
                s.skip_until_end(name)
            else:
                s.warn(token, "statement")
                s.skip_statement()

        technology = None
        if self.layers or (self.sites and self.known_technology is None):
            technology = self._build_technology()
        return technology, self.masters

    def _build_technology(self) -> Technology:
        layers = _assign_die_sides(self.layers)
        try:
            return Technology(distance_units_per_micron=self.units, layers=layers,
                              vias=self.vias, sites=self.sites)
        except ValueError as e:
            raise LefDefParseError(f"invalid technology: {e}")

    def _read_units(self) -> None:
        s = self.stream
        while True:
            token = s.next()
            if token.value == "END":
                s.expect("UNITS")
                return
            if token.value == "DATABASE":
                s.expect("MICRONS")
                self.units = s.integer()
                self.saw_units = True
                s.expect(";")
            else:
                s.warn(token, "UNITS statement")
                s.skip_statement()

    def _positive(self, token: _Token, value: float, what: str) -> float:
        if value <= 0:
            raise LefDefParseError(f"non-positive {what} {value}", token.line, token.column)
        return value

    def _read_site(self) -> Site:
        s = self.stream
        name = s.next().value
        width = height = None
        site_class = "CORE"
        while True:
            token = s.next()
            if token.value == "END":
                s.expect(name)
                break
            if token.value == "SIZE":
                width = self._positive(token, s.number(), "site width")
                s.expect("BY")
                height = self._positive(token, s.number(), "site height")
                s.expect(";")
            elif token.value == "CLASS":
                site_class = s.next().value
                s.expect(";")
            else:
                s.warn(token, "SITE statement")
                s.skip_statement()
        if width is None:
            raise LefDefParseError(f"site '{name}' has no SIZE", token.line, token.column)
        return Site(name=name, width=width, height=height, site_class=site_class)

    def _read_layer(self) -> Optional[Layer]:
        s = self.stream
        start = s.next()
        name = start.value
        kind = direction = None
        pitch = width = 0.0
        spacing = None
        while True:
            token = s.next()
            if token.value == "END":
                s.expect(name)
                break
            if token.value == "TYPE":
                kind_token = s.next()
                s.expect(";")
                if kind_token.value not in ("ROUTING", "CUT"):
                    s.warn(kind_token, "layer type")
                    s.skip_until_end(name)
                    return None
                kind = LayerKind(kind_token.value)
            elif token.value == "DIRECTION":
                direction = s.keyword(Direction, "layer direction")
                s.expect(";")
            elif token.value == "PITCH":
                pitch = self._positive(token, s.number(), "pitch")
                if s.peek() != ";":
                    s.number()
                s.expect(";")
            elif token.value == "WIDTH":
                width = self._positive(token, s.number(), "width")
                s.expect(";")
            elif token.value == "SPACING" and spacing is None:
                spacing = s.number()
                if s.peek() != ";":
                    s.warn(token, "SPACING rule")
                s.skip_statement()
            else:
                s.warn(token, "LAYER statement")
                s.skip_statement()
        if kind is None:
            raise LefDefParseError(f"layer '{name}' has no TYPE", start.line, start.column)
        if kind is LayerKind.CUT:
            cut_pitch = _snap(width + spacing, self.units) if spacing is not None and width > 0 else 0.0
            return Layer(name=name, kind=kind, pitch=cut_pitch, width=width)
        if pitch <= 0 or width <= 0:
            raise LefDefParseError(f"routing layer '{name}' needs PITCH and WIDTH", start.line, start.column)
        return Layer(name=name, kind=kind, direction=direction, pitch=pitch, width=width, spacing=spacing)

    def _layer_names(self) -> Optional[set]:
        if self.layers:
            return {layer.name for layer in self.layers}
        if self.known_technology is not None:
            return {layer.name for layer in self.known_technology.layers}
        return None

    def _read_shapes(self, terminator: str, allowed: Optional[set]) -> List[Shape]:
        """LAYER/RECT pairs until `terminator` (an END keyword)."""
        s = self.stream
        shapes: List[Shape] = []
        layer = None
        while True:
            token = s.next()
            if token.value == terminator:
                return shapes
            if token.value == "LAYER":
                layer_token = s.next()
                layer = layer_token.value
                if allowed is not None and layer not in allowed:
                    raise LefDefParseError(f"reference to undeclared layer '{layer}'",
                                           layer_token.line, layer_token.column)
                s.skip_statement()
            elif token.value == "RECT":
                if layer is None:
                    raise LefDefParseError("RECT before LAYER", token.line, token.column)
                if s.peek() == "MASK":
                    s.next()
                    s.next()
                x1, y1, x2, y2 = s.number(), s.number(), s.number(), s.number()
                s.expect(";")
                shapes.append(Shape(layer=layer, rect=Rect(lx=min(x1, x2), ly=min(y1, y2),
                                                           ux=max(x1, x2), uy=max(y1, y2))))
            else:
                s.warn(token, "geometry statement")
                s.skip_statement()

    def _read_via(self) -> ViaDef:
        s = self.stream
        name = s.next().value
        default = False
        if s.peek() == "DEFAULT":
            s.next()
            default = True
        shapes = self._read_shapes("END", self._layer_names())
        s.expect(name)
        return ViaDef(name=name, default=default, shapes=shapes)

    def _read_pin(self, allowed: Optional[set]) -> Pin:
        s = self.stream
        name = s.next().value
        direction = PinDirection.INPUT
        shapes: List[Shape] = []
        while True:
            token = s.next()
            if token.value == "END":
                s.expect(name)
                break
            if token.value == "DIRECTION":
                direction = s.keyword(PinDirection, "pin direction")
                s.skip_statement()
            elif token.value == "PORT":
                shapes.extend(self._read_shapes("END", allowed))
            else:
                s.warn(token, "PIN statement")
                s.skip_statement()
        return Pin(name=name, direction=direction, shapes=shapes)

    def _read_macro(self) -> CellMaster:
        s = self.stream
        start = s.next()
        name = start.value
        master_class = MasterClass.CORE
        width = height = None
        site = None
        pins: List[Pin] = []
        obstructions: List[Shape] = []
        allowed = self._layer_names()
        while True:
            token = s.next()
            if token.value == "END":
                s.expect(name)
                break
            if token.value == "CLASS":
                class_token = s.next()
                if class_token.value == "BLOCK":
                    master_class = MasterClass.BLOCK
                elif class_token.value != "CORE":
                    s.warn(class_token, "macro class (read as CORE)")
                if s.peek() != ";":
                    s.skip_statement()
                else:
                    s.next()
            elif token.value == "SIZE":
                width = self._positive(token, s.number(), "macro width")
                s.expect("BY")
                height = self._positive(token, s.number(), "macro height")
                s.expect(";")
            elif token.value == "SITE":
                site = s.next().value
                s.skip_statement()
            elif token.value == "PIN":
                pins.append(self._read_pin(allowed))
            elif token.value == "OBS":
                obstructions.extend(self._read_shapes("END", allowed))
            else:
                s.warn(token, "MACRO statement")
                s.skip_statement()
        if width is None:
            raise LefDefParseError(f"macro '{name}' has no SIZE", start.line, start.column)
        try:
            return CellMaster(name=name, master_class=master_class, width=width, height=height,
                              site=site, pins=pins, obstructions=obstructions, variant=variant_of(name))
        except ValueError as e:
            raise LefDefParseError(f"invalid macro '{name}': {e}", start.line, start.column)


def _assign_die_sides(layers: List[Layer]) -> List[Layer]:
    """Layers below the bond layer belong to the bottom die, layers above it to the top die."""
    bond_index = next((i for i, layer in enumerate(layers)
                       if layer.name == BOND_LAYER_NAME and layer.kind is LayerKind.CUT), None)
    result = []
    for i, layer in enumerate(layers):
        if bond_index is None or i < bond_index:
            side = DieSide.BOTTOM
        elif i == bond_index:
            side = DieSide.BOND
        else:
            side = DieSide.TOP
        result.append(layer.model_copy(update={"die_side": side}))
    return result


def parse_lef(text: str, technology: Optional[Technology] = None,
              warnings: Optional[List[str]] = None) -> Tuple[Optional[Technology], List[CellMaster]]:
    """
    Parse LEF text.

    Args:
        text: LEF source
        technology: Technology used to validate layer references when the
            text itself declares no layers
        warnings: Optional list collecting skipped-statement warnings

    Returns:
        (technology if LAYER statements are present, masters in file order)
    """
    return LefReader(text, technology, warnings).read()


def load_library(paths: Sequence[Union[str, Path]], warnings: Optional[List[str]] = None) -> Library:
    """Merge technology and masters from several LEF files into one Library."""
    technology: Optional[Technology] = None
    library = Library()
    for path in paths:
        text = Path(path).read_text()
        tech, masters = parse_lef(text, technology, warnings)
        if tech is not None and tech.layers:
            technology = tech
        for master in masters:
            if master.name in library:
                logger.warning(f"Master '{master.name}' redefined by {path}; keeping the later one.")
            library.add(master)
    library.technology = technology
    logger.info(f"Loaded library with {len(library)} masters from {len(paths)} LEF file(s).")
    return library


# ---------------------------------------------------------------- LEF writing


def _shapes_lines(shapes: Iterable[Shape], indent: str, units: int) -> List[str]:
    lines = []
    current = None
    for shape in shapes:
        if shape.layer != current:
            lines.append(f"{indent}LAYER {shape.layer} ;")
            current = shape.layer
        r = shape.rect
        lines.append(f"{indent}  RECT {_fmt(r.lx, units)} {_fmt(r.ly, units)} "
                     f"{_fmt(r.ux, units)} {_fmt(r.uy, units)} ;")
    return lines


def write_lef(technology: Optional[Technology], masters: Iterable[CellMaster],
              units: Optional[int] = None) -> str:
    """Emit LEF text for a technology (optional) and masters in the given order."""
    units = units or (technology.distance_units_per_micron if technology else 1000)
    lines = ["VERSION 5.8 ;", 'BUSBITCHARS "[]" ;', 'DIVIDERCHAR "/" ;', ""]
    if technology is not None:
        lines += ["UNITS", f"  DATABASE MICRONS {units} ;", "END UNITS", ""]
        for site in technology.sites:
            lines += [f"SITE {site.name}", f"  CLASS {site.site_class} ;",
                      f"  SIZE {_fmt(site.width, units)} BY {_fmt(site.height, units)} ;",
                      f"END {site.name}", ""]
        for layer in technology.layers:
            lines += [f"LAYER {layer.name}", f"  TYPE {layer.kind.value} ;"]
            if layer.kind is LayerKind.ROUTING:
                if layer.direction is not None:
                    lines.append(f"  DIRECTION {layer.direction.value} ;")
                lines.append(f"  PITCH {_fmt(layer.pitch, units)} ;")
                lines.append(f"  WIDTH {_fmt(layer.width, units)} ;")
                if layer.spacing is not None:
                    lines.append(f"  SPACING {_fmt(layer.spacing, units)} ;")
            else:
                if layer.width > 0:
                    lines.append(f"  WIDTH {_fmt(layer.width, units)} ;")
                    if layer.pitch > 0:
                        lines.append(f"  SPACING {_fmt(layer.pitch - layer.width, units)} ;")
            lines += [f"END {layer.name}", ""]
        for via in technology.vias:
            lines.append(f"VIA {via.name}" + (" DEFAULT" if via.default else ""))
            lines += _shapes_lines(via.shapes, "  ", units)
            lines += [f"END {via.name}", ""]
    for master in masters:
        lines += [f"MACRO {master.name}", f"  CLASS {master.master_class.value} ;",
                  f"  SIZE {_fmt(master.width, units)} BY {_fmt(master.height, units)} ;"]
        if master.site:
            lines.append(f"  SITE {master.site} ;")
        for pin in master.pins:
            lines += [f"  PIN {pin.name}", f"    DIRECTION {pin.direction.value} ;", "    PORT"]
            lines += _shapes_lines(pin.shapes, "      ", units)
            lines += ["    END", f"  END {pin.name}"]
        if master.obstructions:
            lines.append("  OBS")
            lines += _shapes_lines(master.obstructions, "    ", units)
            lines.append("  END")
        lines += [f"END {master.name}", ""]
    lines.append("END LIBRARY")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- DEF reading


class DefReader:
    """Reads one DEF text against a library."""

    def __init__(self, text: str, library: Library, warnings: Optional[List[str]] = None):
        self.stream = _TokenStream(text, warnings)
        self.library = library
        self.units = 1000
        self.name = "design"
        self.die: Optional[Rect] = None
        self.components: List[Component] = []
        self.ports: List[Port] = []
        self.nets: List[Net] = []

    def read(self) -> Design:
        s = self.stream
        while not s.at_end():
            token = s.next()
            keyword = token.value
            if keyword in ("VERSION", "DIVIDERCHAR", "BUSBITCHARS", "NAMESCASESENSITIVE"):
                s.skip_statement()
            elif keyword == "DESIGN":
                self.name = s.next().value
                s.expect(";")
            elif keyword == "UNITS":
                s.expect("DISTANCE")
                s.expect("MICRONS")
                self.units = s.integer()
                s.expect(";")
            elif keyword == "DIEAREA":
                self.die = self._read_diearea()
            elif keyword == "COMPONENTS":
                self._read_components()
            elif keyword == "PINS":
                self._read_pins()
            elif keyword == "NETS":
                self._read_nets()
            elif keyword == "END":
                s.expect("DESIGN")
                break
            elif keyword in _DEF_SKIP_SECTIONS:
                s.warn(token, "section")
                s.skip_until_end(keyword)
            else:
                s.warn(token, "statement")
                s.skip_statement()
        return self._build()

    def _um(self, value: float) -> float:
        return value / self.units

    def _point(self) -> Tuple[float, float]:
        s = self.stream
        s.expect("(")
        x, y = s.number(), s.number()
        s.expect(")")
        return x, y

    def _read_diearea(self) -> Rect:
        points = []
        while self.stream.peek() == "(":
            points.append(self._point())
        end = self.stream.expect(";")
        if len(points) < 2:
            raise LefDefParseError(f"DIEAREA needs at least two points, found {len(points)}",
                                   end.line, end.column)
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        return Rect(lx=self._um(min(xs)), ly=self._um(min(ys)), ux=self._um(max(xs)), uy=self._um(max(ys)))

    def _orient(self) -> Orient:
        token = self.stream.next()
        try:
            return Orient(token.value)
        except ValueError:
            raise LefDefParseError(f"unsupported orientation '{token.value}'", token.line, token.column)

    def _read_components(self) -> None:
        s = self.stream
        s.integer()
        s.expect(";")
        seen = set()
        while True:
            token = s.next()
            if token.value == "END":
                s.expect("COMPONENTS")
                return
            if token.value != "-":
                raise LefDefParseError(f"expected '-', found '{token.value}'", token.line, token.column)
            name_token = s.next()
            master_token = s.next()
            if name_token.value in seen:
                raise LefDefParseError(f"duplicate component '{name_token.value}'",
                                       name_token.line, name_token.column)
            if master_token.value not in self.library:
                raise LefDefParseError(f"unresolved master '{master_token.value}'",
                                       master_token.line, master_token.column)
            seen.add(name_token.value)
            x = y = 0.0
            orient = Orient.N
            status = Status.UNPLACED
            while True:
                token = s.next()
                if token.value == ";":
                    break
                if token.value != "+":
                    raise LefDefParseError(f"unexpected '{token.value}' in component",
                                           token.line, token.column)
                attr = s.next()
                if attr.value in ("PLACED", "FIXED", "COVER"):
                    px, py = self._point()
                    x, y = self._um(px), self._um(py)
                    orient = self._orient()
                    status = Status.FIXED if attr.value in ("FIXED", "COVER") else Status.PLACED
                elif attr.value == "UNPLACED":
                    status = Status.UNPLACED
                else:
                    s.warn(attr, "component attribute")
                    while s.peek() not in ("+", ";"):
                        s.next()
            self.components.append(Component(
                name=name_token.value, master=master_token.value, x=x, y=y, orient=orient,
                status=status, die=die_of_variant(variant_of(master_token.value)),
            ))

    def _port_die(self, layer: Optional[str]) -> Die:
        tech = self.library.technology
        if layer is None or tech is None:
            return Die.BOTTOM
        info = tech.layer(layer)
        if info is not None and info.die_side is DieSide.TOP:
            return Die.TOP
        return Die.BOTTOM

    def _read_pins(self) -> None:
        s = self.stream
        s.integer()
        s.expect(";")
        while True:
            token = s.next()
            if token.value == "END":
                s.expect("PINS")
                return
            if token.value != "-":
                raise LefDefParseError(f"expected '-', found '{token.value}'", token.line, token.column)
            name = s.next().value
            direction = PinDirection.INPUT
            layer = None
            x = y = None
            while True:
                token = s.next()
                if token.value == ";":
                    break
                if token.value != "+":
                    raise LefDefParseError(f"unexpected '{token.value}' in pin", token.line, token.column)
                attr = s.next()
                if attr.value == "NET":
                    s.next()
                elif attr.value == "DIRECTION":
                    direction = s.keyword(PinDirection, "pin direction")
                elif attr.value == "USE":
                    s.next()
                elif attr.value == "LAYER":
                    layer = s.next().value
                    self._point()
                    self._point()
                elif attr.value in ("PLACED", "FIXED", "COVER"):
                    px, py = self._point()
                    x, y = self._um(px), self._um(py)
                    self._orient()
                else:
                    s.warn(attr, "pin attribute")
                    while s.peek() not in ("+", ";"):
                        s.next()
            self.ports.append(Port(name=name, direction=direction, x=x, y=y, layer=layer,
                                   die=self._port_die(layer)))

    def _read_nets(self) -> None:
        s = self.stream
        s.integer()
        s.expect(";")
        components = {c.name: c for c in self.components}
        ports = {p.name for p in self.ports}
        while True:
            token = s.next()
            if token.value == "END":
                s.expect("NETS")
                return
            if token.value != "-":
                raise LefDefParseError(f"expected '-', found '{token.value}'", token.line, token.column)
            name = s.next().value
            pins: List[NetPin] = []
            while True:
                token = s.next()
                if token.value == ";":
                    break
                if token.value == "(":
                    owner = s.next()
                    pin = s.next()
                    close = s.next()
                    if close.value != ")":
                        raise LefDefParseError(f"malformed net '{name}'", close.line, close.column)
                    if owner.value == "PIN":
                        if pin.value not in ports:
                            raise LefDefParseError(f"net '{name}' references unknown port '{pin.value}'",
                                                   pin.line, pin.column)
                        pins.append(NetPin(component=None, pin=pin.value))
                    else:
                        component = components.get(owner.value)
                        if component is None:
                            raise LefDefParseError(
                                f"net '{name}' references unknown component '{owner.value}'",
                                owner.line, owner.column)
                        if self.library.master(component.master).pin(pin.value) is None:
                            raise LefDefParseError(
                                f"net '{name}' references unknown pin '{owner.value}/{pin.value}'",
                                pin.line, pin.column)
                        pins.append(NetPin(component=owner.value, pin=pin.value))
                elif token.value == "+":
                    attr = s.next()
                    if attr.value != "USE":
                        s.warn(attr, "net attribute")
                    while s.peek() not in ("+", ";"):
                        s.next()
                else:
                    raise LefDefParseError(f"malformed net '{name}'", token.line, token.column)
            self.nets.append(Net(name=name, pins=pins))

    def _build(self) -> Design:
        stacked = any(variant_of(c.master) is not Variant.BASE for c in self.components)
        die_top = self.die if stacked and self.die is not None else None
        return Design(name=self.name, units=self.units, die_bottom=self.die, die_top=die_top,
                      components=self.components, io_ports=self.ports, nets=self.nets)


def parse_def(text: str, masters: Union[Library, Iterable[CellMaster]],
              warnings: Optional[List[str]] = None) -> Design:
    """
    Parse DEF text into a Design.

    Component dies are inferred from the master suffix ("_top" -> TOP,
    otherwise BOTTOM); port dies from the side of their layer when the
    library carries a 3D technology.
    """
    library = masters if isinstance(masters, Library) else Library(masters=masters)
    return DefReader(text, library, warnings).read()


# ---------------------------------------------------------------- DEF writing


def _restore_full_master(component: Component, library: Optional[Library]) -> Component:
    variant = variant_of(component.master)
    if not is_shrunk(variant):
        return component
    full_name = variant_name(base_name(component.master), full_variant(variant))
    if library is None:
        return component.model_copy(update={"master": full_name})
    shrunk = library.master(component.master)
    full = library.master(full_name)
    cx = component.x + shrunk.width / 2
    cy = component.y + shrunk.height / 2
    return component.model_copy(update={"master": full_name, "x": cx - full.width / 2,
                                        "y": cy - full.height / 2})


def write_def(design: Design, mode: DefMode = DefMode.COMBINED,
              library: Optional[Library] = None) -> str:
    """
    Emit DEF text.

    TOP_ONLY / BOTTOM_ONLY keep the components and ports of one die, restore
    shrunk instances to their full masters (re-centred when a library is
    given) and keep only the net terminals on that die.
    TOP ports need a layer; the reader takes a port's die from its layer.
    """
    units = design.units
    components = design.components
    ports = design.io_ports
    if mode is not DefMode.COMBINED:
        die = Die.TOP if mode is DefMode.TOP_ONLY else Die.BOTTOM
        components = [_restore_full_master(c, library) for c in components if c.die is die]
        ports = [p for p in ports if p.die is die]

    kept_components = {c.name for c in components}
    kept_ports = {p.name for p in ports}
    nets = []
    for net in design.nets:
        if mode is DefMode.COMBINED:
            nets.append(net)
            continue
        pins = [p for p in net.pins
                if (p.component in kept_components if p.component else p.pin in kept_ports)]
        if pins:
            nets.append(Net(name=net.name, pins=pins))

    def d(value: float) -> int:
        return to_dbu(value, units)

    lines = ["VERSION 5.8 ;", 'DIVIDERCHAR "/" ;', 'BUSBITCHARS "[]" ;', f"DESIGN {design.name} ;",
             f"UNITS DISTANCE MICRONS {units} ;", ""]
    if design.die_bottom is not None:
        r = design.die_bottom
        lines += [f"DIEAREA ( {d(r.lx)} {d(r.ly)} ) ( {d(r.ux)} {d(r.uy)} ) ;", ""]

    lines.append(f"COMPONENTS {len(components)} ;")
    for c in components:
        if c.status is Status.UNPLACED:
            lines.append(f"- {c.name} {c.master} + UNPLACED ;")
        else:
            lines.append(f"- {c.name} {c.master} + {c.status.value} ( {d(c.x)} {d(c.y)} ) {c.orient.value} ;")
    lines += ["END COMPONENTS", ""]

    lines.append(f"PINS {len(ports)} ;")
    for p in ports:
        if p.die is Die.TOP and p.layer is None:
            raise ValueError(f"TOP port '{p.name}' has no layer; its die cannot be read back")
        parts = [f"- {p.name} + NET {p.name} + DIRECTION {p.direction.value} + USE SIGNAL"]
        if p.layer is not None:
            parts.append(f"+ LAYER {p.layer} ( {-_PORT_HALF_DBU} {-_PORT_HALF_DBU} ) "
                         f"( {_PORT_HALF_DBU} {_PORT_HALF_DBU} )")
        if p.is_placed:
            parts.append(f"+ PLACED ( {d(p.x)} {d(p.y)} ) N")
        lines.append(" ".join(parts) + " ;")
    lines += ["END PINS", ""]

    lines.append(f"NETS {len(nets)} ;")
    for net in nets:
        terms = " ".join(f"( PIN {p.pin} )" if p.is_port else f"( {p.component} {p.pin} )"
                         for p in net.pins)
        lines.append(f"- {net.name} {terms} ;" if terms else f"- {net.name} ;")
    lines += ["END NETS", "", "END DESIGN"]
    return "\n".join(lines) + "\n"


def write_design_files(design: Design, out_dir: Union[str, Path], library: Optional[Library] = None,
                       stem: Optional[str] = None) -> Dict[str, Path]:
    """Write the combined DEF and, for 3D designs, one DEF per die."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = stem or design.name
    written = {"combined": out / f"{stem}.def"}
    written["combined"].write_text(write_def(design, DefMode.COMBINED, library))
    if design.is_3d:
        for key, mode in (("top", DefMode.TOP_ONLY), ("bottom", DefMode.BOTTOM_ONLY)):
            path = out / f"{stem}_{key}.def"
            path.write_text(write_def(design, mode, library))
            written[key] = path
    logger.info(f"Wrote {len(written)} DEF file(s) for design '{design.name}' to {out}.")
    return written
