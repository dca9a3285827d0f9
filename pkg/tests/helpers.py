"""Small hand-built masters and designs shared by the tests."""
from typing import Iterable, Optional

from stack3d.models import (
    CellMaster, Component, Design, Die, MasterClass, Net, NetPin, Pin, PinDirection, Port, Rect, Shape,
    Status,
)
from stack3d.services import generator


def block(name: str, width: float, height: float, pins: Iterable[str] = ("A",),
          layer: str = "metal4") -> CellMaster:
    """Block master whose pins all sit at its centre."""
    return CellMaster(
        name=name, master_class=MasterClass.BLOCK, width=width, height=height,
        pins=[Pin(name=p, shapes=[Shape(layer=layer, rect=Rect.from_center(width / 2, height / 2, 0.1, 0.1))])
              for p in pins],
    )


def cell(name: str, width: float = 0.38, height: float = 1.4, pins: Iterable[str] = ("A", "Z")) -> CellMaster:
    """Core master whose pins all sit at its centre; "Z" is the output."""
    return CellMaster(
        name=name, master_class=MasterClass.CORE, width=width, height=height, site=generator.SITE_NAME,
        pins=[Pin(name=p, direction=PinDirection.OUTPUT if p == "Z" else PinDirection.INPUT,
                  shapes=[Shape(layer="metal1", rect=Rect.from_center(width / 2, height / 2, 0.07, 0.07))])
              for p in pins],
    )


def comp(name: str, master: str, x: float = 0.0, y: float = 0.0, die: Die = Die.BOTTOM,
         status: Status = Status.PLACED) -> Component:
    return Component(name=name, master=master, x=x, y=y, status=status, die=die)


def net(name: str, *terms: str) -> Net:
    """Terminals as "comp/pin" or "PIN name"."""
    pins = []
    for term in terms:
        if term.startswith("PIN "):
            pins.append(NetPin(pin=term[4:]))
        else:
            owner, pin = term.split("/")
            pins.append(NetPin(component=owner, pin=pin))
    return Net(name=name, pins=pins)


def design(components, nets=(), ports=(), die: Optional[Rect] = None, top: bool = False,
           name: str = "t") -> Design:
    die = die or Rect(lx=0.0, ly=0.0, ux=100.0, uy=100.0)
    return Design(name=name, die_bottom=die, die_top=die if top else None,
                  components=list(components), nets=list(nets), io_ports=list(ports))


def port(name: str, x: Optional[float] = None, y: Optional[float] = None, die: Die = Die.BOTTOM,
         layer: Optional[str] = None) -> Port:
    return Port(name=name, x=x, y=y, die=die, layer=layer)
