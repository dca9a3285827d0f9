"""
3D PDK service.

Builds the face-to-face technology (mirrored metal stack with a bond cut
layer in the middle) and splits a 2D cell library into die and shrunk
variants.
"""
import hashlib
import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

from .. import config
from ..config import Stack3dError
from ..models import (
    BOND_LAYER_NAME, CellMaster, DieSide, Layer, LayerKind, Library, Pin, Rect, Shape, Technology,
    Variant, ViaDef, variant_name,
)
from ..params import Pdk3dConfig
from . import lefdef

logger = config.logger

_LAYER_INDEX_RE = re.compile(r"^(\D+?)(_?)(\d+)$")

TECH3D_FILE = "tech3d.lef"
CELLS3D_FILE = "cells3d.lef"
HBT_VIA_NAME = "hbt_via"


class PdkError(Stack3dError):
    """Raised when a 2D PDK cannot be turned into a 3D one."""
    exit_code = 2


def _split_index(name: str) -> Optional[Tuple[str, str, int]]:
    match = _LAYER_INDEX_RE.match(name)
    if not match:
        return None
    return match.group(1), match.group(2), int(match.group(3))


def _mirrored_name(layer: Layer, index_map: Dict[int, int]) -> str:
    parts = _split_index(layer.name)
    if parts is None or parts[2] not in index_map:
        return f"{layer.name}_mirror"
    prefix, sep, index = parts
    return f"{prefix}{sep}{index_map[index]}"


def mirror_metal_stack(tech2d: Technology, pdk: Optional[Pdk3dConfig] = None) -> Technology:
    """
    Mirror a 2D metal stack above a new bond layer.

    Routing layer k of n maps to 2n+1-k; the cut between routing layers k
    and k+1 maps to the cut between 2n-k and 2n+1-k. Unnumbered layers keep
    their name with a "_mirror" suffix.
    """
    pdk = pdk or Pdk3dConfig()
    if tech2d.is_3d:
        raise PdkError(f"technology already contains bond layer '{tech2d.bond_layer.name}'")
    routing = tech2d.routing_layers
    if not routing:
        raise PdkError("technology has no routing layers to mirror")
    n = len(routing)

    # Stack up to and including the top routing layer.
    top_index = max(i for i, layer in enumerate(tech2d.layers) if layer.kind is LayerKind.ROUTING)
    stack = list(tech2d.layers[: top_index + 1])
    for dropped in tech2d.layers[top_index + 1:]:
        logger.warning(f"Dropping layer '{dropped.name}' above the top routing layer.")

    names = {layer.name for layer in stack}
    if BOND_LAYER_NAME in names:
        raise PdkError(f"layer name '{BOND_LAYER_NAME}' is reserved for the bond layer")

    routing_map = {k: 2 * n + 1 - k for k in range(1, n + 1)}
    cut_map = {k: 2 * n - k for k in range(1, n)}

    bottom = [layer.model_copy(update={"die_side": DieSide.BOTTOM}) for layer in stack]
    bond = Layer(name=BOND_LAYER_NAME, kind=LayerKind.CUT, pitch=pdk.hbt_pitch,
                 width=pdk.hbt_size, die_side=DieSide.BOND)
    top = []
    for layer in reversed(stack):
        index_map = routing_map if layer.kind is LayerKind.ROUTING else cut_map
        top.append(layer.model_copy(update={"name": _mirrored_name(layer, index_map),
                                            "die_side": DieSide.TOP}))

    layers = bottom + [bond] + top
    mirror = {a.name: b.name for a, b in zip(bottom, reversed(top))}

    vias: List[ViaDef] = list(tech2d.vias)
    for via in tech2d.vias:
        shapes = [Shape(layer=mirror[s.layer], rect=s.rect) for s in via.shapes if s.layer in mirror]
        vias.append(ViaDef(name=f"{via.name}_mirror", default=via.default, shapes=shapes))
    half = pdk.hbt_size / 2
    square = Rect(lx=-half, ly=-half, ux=half, uy=half)
    vias.append(ViaDef(name=HBT_VIA_NAME, default=True, shapes=[
        Shape(layer=bottom[-1].name, rect=square),
        Shape(layer=BOND_LAYER_NAME, rect=square),
        Shape(layer=top[0].name, rect=square),
    ]))

    try:
        tech3d = Technology(distance_units_per_micron=tech2d.distance_units_per_micron,
                            layers=layers, vias=vias, sites=tech2d.sites)
    except ValueError as e:
        raise PdkError(f"mirrored stack is invalid: {e}")
    logger.info(f"Mirrored {n} routing layers into a {2 * n}-layer face-to-face stack "
                f"(bond cut {pdk.hbt_size} um at pitch {pdk.hbt_pitch} um).")
    return tech3d


def layer_mirror_map(tech3d: Technology) -> Dict[str, str]:
    """Positional mirror around the bond layer; a bijection that is its own inverse."""
    bond = tech3d.bond_layer
    if bond is None:
        raise PdkError("technology has no bond layer")
    layers = tech3d.layers
    center = layers.index(bond)
    result = {}
    for i, layer in enumerate(layers):
        j = 2 * center - i
        if 0 <= j < len(layers):
            result[layer.name] = layers[j].name
    return result


def _remap(shapes: Iterable[Shape], mirror: Dict[str, str], master: str) -> List[Shape]:
    remapped = []
    for shape in shapes:
        target = mirror.get(shape.layer)
        if target is None:
            raise PdkError(f"master '{master}' uses layer '{shape.layer}' which has no mirror image")
        remapped.append(Shape(layer=target, rect=shape.rect))
    return remapped


def _shift(shapes: Iterable[Shape], dx: float, dy: float) -> List[Shape]:
    return [Shape(layer=s.layer, rect=s.rect.translated(dx, dy)) for s in shapes]


def _split_master(master: CellMaster, mirror: Dict[str, str], pdk: Pdk3dConfig,
                  site: Optional[str]) -> List[CellMaster]:
    if master.variant is not Variant.BASE:
        raise PdkError(f"master '{master.name}' is already a {master.variant.value} variant")
    for shape in [s for p in master.pins for s in p.shapes] + list(master.obstructions):
        if shape.layer not in mirror:
            raise PdkError(f"master '{master.name}' uses layer '{shape.layer}' which has no mirror image")

    top_pins = [Pin(name=p.name, direction=p.direction, shapes=_remap(p.shapes, mirror, master.name))
                for p in master.pins]
    # Shrunk pins keep their offset from the outline centre.
    dx = pdk.shrunk_width / 2 - master.width / 2
    dy = pdk.shrunk_height / 2 - master.height / 2

    def shrunk(pins: List[Pin], variant: Variant) -> CellMaster:
        return CellMaster(
            name=variant_name(master.name, variant), master_class=master.master_class,
            width=pdk.shrunk_width, height=pdk.shrunk_height, site=site or master.site,
            pins=[Pin(name=p.name, direction=p.direction, shapes=_shift(p.shapes, dx, dy)) for p in pins],
            variant=variant,
        )

    return [
        master.model_copy(update={"name": variant_name(master.name, Variant.BOTTOM),
                                  "variant": Variant.BOTTOM}),
        master.model_copy(update={"name": variant_name(master.name, Variant.TOP), "variant": Variant.TOP,
                                  "pins": top_pins,
                                  "obstructions": _remap(master.obstructions, mirror, master.name)}),
        shrunk(master.pins, Variant.SHRUNK_BOTTOM),
        shrunk(top_pins, Variant.SHRUNK_TOP),
    ]


def split_library(masters: Iterable[CellMaster], tech3d: Technology,
                  pdk: Optional[Pdk3dConfig] = None) -> List[CellMaster]:
    """Emit the four die/shrunk variants of every BASE master, sorted by name."""
    pdk = pdk or Pdk3dConfig()
    mirror = layer_mirror_map(tech3d)
    site = tech3d.core_site()
    site_name = site.name if site is not None else None
    masters = list(masters)
    with ThreadPoolExecutor(max_workers=config.THREADS) as pool:
        chunks = list(pool.map(lambda m: _split_master(m, mirror, pdk, site_name), masters))
    result = sorted((m for chunk in chunks for m in chunk), key=lambda m: m.name)
    logger.info(f"Split {len(masters)} masters into {len(result)} die variants.")
    return result


def build_library3d(library2d: Library, pdk: Optional[Pdk3dConfig] = None) -> Library:
    if library2d.technology is None:
        raise PdkError("library has no technology")
    tech3d = mirror_metal_stack(library2d.technology, pdk)
    return Library(technology=tech3d, masters=split_library(library2d.masters, tech3d, pdk))


def write_pdk(library3d: Library, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tech_path = out / TECH3D_FILE
    cells_path = out / CELLS3D_FILE
    tech_path.write_text(lefdef.write_lef(library3d.technology, []))
    cells_path.write_text(lefdef.write_lef(None, library3d.masters,
                                           units=library3d.technology.distance_units_per_micron))
    logger.info(f"Wrote 3D PDK to {tech_path} and {cells_path}.")
    return tech_path, cells_path


def pdk_cache_key(library2d: Library, pdk: Pdk3dConfig) -> str:
    """Content hash of the 2D library and bond geometry."""
    digest = hashlib.sha256()
    digest.update(lefdef.write_lef(library2d.technology, library2d.masters).encode())
    digest.update(pdk.model_dump_json().encode())
    return digest.hexdigest()[:16]


def load_or_build_library3d(library2d: Library, pdk: Optional[Pdk3dConfig] = None,
                            cache_dir: Optional[Union[str, Path]] = None) -> Library:
    """Build the 3D library, reusing a cached copy keyed by input content."""
    pdk = pdk or Pdk3dConfig()
    cache_root = Path(cache_dir if cache_dir is not None else config.CACHE_DIR)
    entry = cache_root / pdk_cache_key(library2d, pdk)
    tech_path, cells_path = entry / TECH3D_FILE, entry / CELLS3D_FILE
    if tech_path.exists() and cells_path.exists():
        logger.info(f"Using cached 3D PDK from {entry}.")
        return lefdef.load_library([tech_path, cells_path])
    library3d = build_library3d(library2d, pdk)
    try:
        write_pdk(library3d, entry)
    except OSError as e:
        logger.warning(f"Could not cache 3D PDK in {entry}: {e}")
        return library3d
    # Read back so cold and warm runs see the same DBU-snapped geometry.
    return lefdef.load_library([tech_path, cells_path])
