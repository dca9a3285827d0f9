import pytest

from stack3d.models import (
    BOND_LAYER_NAME, CellMaster, DieSide, Direction, Layer, LayerKind, Library, Technology, Variant,
)
from stack3d.params import Pdk3dConfig
from stack3d.services import lefdef, pdk3d
from stack3d.services.pdk3d import PdkError

from helpers import block


def test_ten_metal_stack_mirrors_to_39_layers(technology):
    tech3d = pdk3d.mirror_metal_stack(technology)
    names = [layer.name for layer in tech3d.layers]
    assert len(names) == 39
    assert names[19] == BOND_LAYER_NAME
    assert names[:19] == [layer.name for layer in technology.layers]
    assert names[20:] == [f"{kind}{k}" for k in range(11, 21) for kind in ("metal", "via")][:19]
    assert len(tech3d.routing_layers) == 20


def test_mirror_map_pairs(technology):
    mirror = pdk3d.layer_mirror_map(pdk3d.mirror_metal_stack(technology))
    assert mirror["metal1"] == "metal20"
    assert mirror["metal10"] == "metal11"
    assert mirror["via1"] == "via19"
    assert mirror["via9"] == "via11"
    assert mirror[BOND_LAYER_NAME] == BOND_LAYER_NAME
    assert all(mirror[mirror[name]] == name for name in mirror)


def test_mirrored_layers_keep_geometry(technology):
    tech3d = pdk3d.mirror_metal_stack(technology)
    for k in range(1, 11):
        bottom, top = tech3d.layer(f"metal{k}"), tech3d.layer(f"metal{21 - k}")
        assert (bottom.pitch, bottom.width, bottom.direction) == (top.pitch, top.width, top.direction)
        assert bottom.die_side is DieSide.BOTTOM and top.die_side is DieSide.TOP
    bond = tech3d.bond_layer
    assert (bond.kind, bond.width, bond.pitch) == (LayerKind.CUT, 0.5, 1.5)


def test_single_layer_stack():
    tech = Technology(layers=[Layer(name="metal1", kind=LayerKind.ROUTING, direction=Direction.HORIZONTAL,
                                    pitch=0.14, width=0.07)])
    tech3d = pdk3d.mirror_metal_stack(tech)
    assert [layer.name for layer in tech3d.layers] == ["metal1", BOND_LAYER_NAME, "metal2"]


def test_already_3d_technology_is_rejected(technology):
    tech3d = pdk3d.mirror_metal_stack(technology)
    with pytest.raises(PdkError) as info:
        pdk3d.mirror_metal_stack(tech3d)
    assert info.value.exit_code == 2


def test_split_library_variants(technology, cell_library):
    tech3d = pdk3d.mirror_metal_stack(technology)
    masters = cell_library.masters + [block("RAM", 6.0, 4.2, pins=("D0", "Q0"), layer="metal4")]
    split = pdk3d.split_library(masters, tech3d)
    assert len(split) == 4 * len(masters)
    by_name = {m.name: m for m in split}
    for master in masters:
        top = by_name[f"{master.name}_top"]
        bottom = by_name[f"{master.name}_bottom"]
        assert (top.variant, bottom.variant) == (Variant.TOP, Variant.BOTTOM)
        assert len(top.pins) == len(bottom.pins) == len(master.pins)
        assert (top.width, top.height) == (master.width, master.height)
        assert bottom.pins == master.pins


def test_top_variant_uses_mirrored_layers(technology):
    tech3d = pdk3d.mirror_metal_stack(technology)
    ram = block("RAM", 6.0, 4.2, pins=("D0",), layer="metal4")
    by_name = {m.name: m for m in pdk3d.split_library([ram], tech3d)}
    assert by_name["RAM_top"].pin("D0").shapes[0].layer == "metal17"
    assert by_name["RAM_bottom"].pin("D0").shapes[0].layer == "metal4"


def test_shrunk_variants_keep_pin_offsets_from_centre(technology):
    tech3d = pdk3d.mirror_metal_stack(technology)
    ram = block("RAM", 6.0, 4.2, pins=("D0", "Q0"), layer="metal4")
    by_name = {m.name: m for m in pdk3d.split_library([ram], tech3d)}
    for suffix in ("_top_shrunk", "_bottom_shrunk"):
        shrunk = by_name["RAM" + suffix]
        assert (shrunk.width, shrunk.height) == (0.19, 1.4)
        assert shrunk.obstructions == []
        assert shrunk.variant in (Variant.SHRUNK_TOP, Variant.SHRUNK_BOTTOM)
        for pin in ram.pins:
            fx, fy = pin.center()
            sx, sy = shrunk.pin(pin.name).center()
            assert sx - shrunk.width / 2 == pytest.approx(fx - ram.width / 2)
            assert sy - shrunk.height / 2 == pytest.approx(fy - ram.height / 2)


def test_split_rejects_variant_masters(technology):
    tech3d = pdk3d.mirror_metal_stack(technology)
    with pytest.raises(PdkError):
        pdk3d.split_library([CellMaster(name="X_top", width=1.0, height=1.4, variant=Variant.TOP)], tech3d)


def test_custom_bond_geometry(technology):
    pdk = Pdk3dConfig(hbt_size=1.0, hbt_pitch=2.0)
    assert pdk3d.mirror_metal_stack(technology, pdk).bond_layer.pitch == 2.0
    with pytest.raises(ValueError):
        Pdk3dConfig(hbt_size=2.0, hbt_pitch=1.0)


def test_written_pdk_reads_back(tmp_path, cell_library):
    library3d = pdk3d.build_library3d(cell_library)
    tech_path, cells_path = pdk3d.write_pdk(library3d, tmp_path)
    loaded = lefdef.load_library([tech_path, cells_path])
    assert [layer.name for layer in loaded.technology.layers] == \
        [layer.name for layer in library3d.technology.layers]
    assert loaded.technology.bond_layer.name == BOND_LAYER_NAME
    assert loaded.technology.layer("metal20").die_side is DieSide.TOP
    assert len(loaded) == len(library3d)


def test_cache_warm_equals_cold(cache_dir, cell_library):
    cold = pdk3d.load_or_build_library3d(cell_library)
    assert any(cache_dir.iterdir())
    warm = pdk3d.load_or_build_library3d(cell_library)
    assert warm.technology == cold.technology
    assert warm.masters == cold.masters


def test_cache_key_follows_bond_geometry(cell_library):
    a = pdk3d.pdk_cache_key(cell_library, Pdk3dConfig())
    b = pdk3d.pdk_cache_key(cell_library, Pdk3dConfig(hbt_pitch=2.0))
    assert a != b
    assert a == pdk3d.pdk_cache_key(Library(cell_library.technology, cell_library.masters), Pdk3dConfig())
