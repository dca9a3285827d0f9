import pytest

from stack3d import config
from stack3d.models import Library
from stack3d.params import FlowKind, GeneratorParams
from stack3d.services import floorplan, generator, partition, pdk3d


@pytest.fixture
def technology():
    return generator.generate_technology(1000)


@pytest.fixture
def cell_library(technology):
    return Library(technology=technology, masters=generator.standard_cells())


@pytest.fixture
def tiny():
    """(library, design) of the tiny synthetic preset, unplaced."""
    return generator.generate(GeneratorParams(preset="tiny", seed=3))


@pytest.fixture
def tiny_floorplanned(tiny):
    """Tiny design on a 2D die with placed ports."""
    library, design = tiny
    spec = floorplan.size_die(design, library, FlowKind.FLOW_2D, 0.5)
    design = floorplan.place_io(floorplan.apply_floorplan(design, spec), spec, library, seed=1)
    return library, design


@pytest.fixture
def tiny_3d(tiny):
    """Tiny design as a 3D netlist with every macro on TOP; returns (library3d, design)."""
    library2d, design = tiny
    spec = floorplan.size_die(design, library2d, FlowKind.FLOW_3D_DMP, 0.5)
    design = floorplan.place_io(floorplan.apply_floorplan(design, spec), spec, library2d, seed=1)
    library3d = pdk3d.build_library3d(library2d)
    macros = [c.name for c in design.components if library2d.is_macro(c)]
    assignment = partition.PartitionAssignment(macro_names=macros, macro_bits=[1] * len(macros))
    design = partition.apply_partition(design, assignment, library3d)
    return library3d, partition.assign_io_tiers(design, library3d.technology)


@pytest.fixture
def cache_dir(tmp_path, monkeypatch):
    path = tmp_path / "pdk-cache"
    monkeypatch.setattr(config, "CACHE_DIR", str(path))
    return path
