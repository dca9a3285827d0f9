import pytest

from stack3d.models import MasterClass
from stack3d.params import GeneratorParams
from stack3d.services import generator, lefdef


def test_technology_has_ten_metals(technology):
    metals = [layer.name for layer in technology.layers if layer.name.startswith("metal")]
    assert metals == [f"metal{k}" for k in range(1, 11)]
    assert [(s.name, s.height) for s in technology.sites] == [(generator.SITE_NAME, generator.ROW_HEIGHT)]


@pytest.mark.parametrize("preset", sorted(generator.PRESETS))
def test_preset_counts(preset):
    library, design = generator.generate(GeneratorParams(preset=preset, seed=2))
    counts = generator.PRESETS[preset]
    macros = [c for c in design.components if library.is_macro(c)]
    assert len(macros) == counts.num_macros
    assert len(design.components) - len(macros) == counts.num_cells
    assert len(design.io_ports) == counts.num_ports
    assert design.die_bottom is None and not design.is_3d


def test_generation_is_seeded():
    a = generator.generate(GeneratorParams(preset="tiny", seed=5))
    b = generator.generate(GeneratorParams(preset="tiny", seed=5))
    c = generator.generate(GeneratorParams(preset="tiny", seed=6))
    assert a[1].model_dump() == b[1].model_dump()
    assert a[1].model_dump() != c[1].model_dump()


def test_every_net_has_a_driver_and_a_sink(tiny):
    _, design = tiny
    for net in design.nets:
        assert len(net.pins) >= 2


def test_macro_masters_are_blocks(tiny):
    library, design = tiny
    blocks = {m.name for m in library.masters if m.master_class is MasterClass.BLOCK}
    assert {c.master for c in design.components if library.is_macro(c)} <= blocks


def test_written_files_parse_back(tiny, tmp_path):
    library, design = tiny
    paths = generator.write_generated(library, design, tmp_path)
    loaded = lefdef.load_library([paths["tech_lef"], paths["cells_lef"]])
    parsed = lefdef.parse_def(paths["def"].read_text(), loaded)
    assert [c.name for c in parsed.components] == [c.name for c in design.components]
    assert len(parsed.nets) == len(design.nets)


def test_unknown_preset():
    with pytest.raises(ValueError):
        generator.generate_design("huge")
