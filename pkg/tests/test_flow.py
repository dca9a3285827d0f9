import json

import pytest

from stack3d import config, utils
from stack3d.params import FlowConfig, FlowKind, GeneratorParams, PlacerParams
from stack3d.services import flow, generator, lefdef, legalize
from stack3d.services.flow import FlowStageError
from stack3d.services.metrics import MetricsError


def flow_config(out_dir, kind=FlowKind.FLOW_3D_DMP, **extra):
    return FlowConfig(generator=GeneratorParams(preset="tiny", seed=3), flow=kind, out_dir=out_dir,
                      placer=PlacerParams(max_iters=100), **extra)


@pytest.mark.parametrize("kind", list(FlowKind))
def test_flow_writes_its_artifacts(tmp_path, cache_dir, kind):
    result = flow.run_flow(flow_config(tmp_path, kind))
    expected = {"report", "runtime", "layout", "thermal_svg", "thermal_json", "def_combined"}
    if kind is not FlowKind.FLOW_2D:
        expected |= {"partition", "def_top", "def_bottom"}
    assert expected <= set(result.artifacts)
    assert all((tmp_path / name).exists() for name in ("report.json", "runtime.json", "layout.svg",
                                                      "thermal.svg", "thermal.json", "tiny_s3.def"))
    assert result.report.t_max_c is not None and result.report.t_max_c > 45.0
    assert result.report.runtime_s is None
    assert set(result.runtime_s) >= {"load", "floorplan", "place", "legalize", "metrics", "thermal"}


def test_flow_report_is_reproducible(tmp_path, cache_dir):
    first = flow.run_flow(flow_config(tmp_path / "a"))
    second = flow.run_flow(flow_config(tmp_path / "b"))
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    assert first.report == second.report


def test_flow_output_is_legal(tmp_path, cache_dir):
    flow.run_flow(flow_config(tmp_path))
    # Reload through the cached PDK so the check sees what downstream tools see.
    tech = next(cache_dir.rglob("tech3d.lef"))
    cells = next(cache_dir.rglob("cells3d.lef"))
    library = lefdef.load_library([tech, cells])
    design = lefdef.parse_def((tmp_path / "tiny_s3.def").read_text(), library)
    assert design.is_3d
    assert all(c.is_placed for c in design.components)
    assert legalize.check_legality(design, library).is_legal


def test_flow_partition_file(tmp_path, cache_dir):
    flow.run_flow(flow_config(tmp_path))
    data = json.loads((tmp_path / "partition.json").read_text())
    assert len(data["macro_bits"]) == len(data["macro_names"]) == 4
    assert set(data["dies"].values()) <= {"TOP", "BOTTOM"}


def test_recorded_runtime(tmp_path, cache_dir):
    result = flow.run_flow(flow_config(tmp_path, FlowKind.FLOW_2D, record_runtime=True))
    assert result.report.runtime_s == result.runtime_s


def test_failing_stage_is_named(tmp_path, cache_dir):
    power = tmp_path / "power.yaml"
    power.write_text("ghost: 1.0\n")
    with pytest.raises(FlowStageError) as info:
        flow.run_flow(flow_config(tmp_path / "out", FlowKind.FLOW_2D, power_file=power))
    assert info.value.stage == "metrics"
    assert isinstance(info.value.cause, MetricsError)
    assert info.value.exit_code == MetricsError.exit_code


def test_stacking_halves_the_footprint(tmp_path, cache_dir):
    flow.run_flow(flow_config(tmp_path / "2d", FlowKind.FLOW_2D))
    flow.run_flow(flow_config(tmp_path / "3d", FlowKind.FLOW_3D_DMP))
    improvement = flow.compare_report_files(tmp_path / "2d" / "report.json", tmp_path / "3d" / "report.json")
    assert improvement["area_mm2"] > 0
    assert improvement["hbt_estimate"] is None


def test_flow_from_files(tmp_path, cache_dir, tiny):
    library, design = tiny
    paths = generator.write_generated(library, design, tmp_path / "in")
    cfg = FlowConfig(tech_lef=paths["tech_lef"], cells_lef=paths["cells_lef"], def_file=paths["def"],
                     flow=FlowKind.FLOW_2D, out_dir=tmp_path / "out", placer=PlacerParams(max_iters=100))
    result = flow.run_flow(cfg)
    assert result.report.hpwl_um > 0
    assert result.report.util_top is None
    assert (tmp_path / "out" / "tiny_s3.def").exists()


def test_config_needs_inputs(tmp_path):
    with pytest.raises(ValueError):
        FlowConfig(out_dir=tmp_path)
    with pytest.raises(ValueError):
        FlowConfig(tech_lef=tmp_path / "missing.lef", cells_lef=tmp_path / "c.lef", def_file=tmp_path / "d.def")


def test_config_file_paths_resolve_against_the_file(tmp_path):
    (tmp_path / "tech.lef").write_text("")
    (tmp_path / "cells.lef").write_text("")
    (tmp_path / "design.def").write_text("")
    config_path = tmp_path / "flow.yaml"
    config_path.write_text("tech_lef: tech.lef\ncells_lef: cells.lef\ndef: design.def\nflow: FLOW_2D\n")
    cfg = utils.load_flow_config(config_path)
    assert cfg.def_file == tmp_path.resolve() / "design.def"
    assert cfg.flow is FlowKind.FLOW_2D


def test_stacked_flows_shorten_wires(tmp_path, cache_dir):
    shorter_than_2d = dmp_beats_tiling = 0
    for seed in range(1, 9):
        hpwl = {}
        for kind in FlowKind:
            cfg = FlowConfig(generator=GeneratorParams(preset="tiny", seed=seed), flow=kind, seed=seed,
                             out_dir=tmp_path / f"{seed}_{kind.value}", placer=PlacerParams(max_iters=100))
            hpwl[kind] = flow.run_flow(cfg).report.hpwl_um
        shorter_than_2d += hpwl[FlowKind.FLOW_3D_DMP] < hpwl[FlowKind.FLOW_2D]
        dmp_beats_tiling += hpwl[FlowKind.FLOW_3D_DMP] <= hpwl[FlowKind.FLOW_3D_TILING]
    assert shorter_than_2d >= 6
    assert dmp_beats_tiling >= 5


def test_thread_count_does_not_change_outputs(tmp_path, monkeypatch):
    outputs = []
    for threads in (1, 4):
        monkeypatch.setattr(config, "THREADS", threads)
        monkeypatch.setattr(config, "CACHE_DIR", str(tmp_path / f"cache{threads}"))
        out = tmp_path / f"run{threads}"
        flow.run_flow(flow_config(out))
        outputs.append({p.name: p.read_bytes() for p in out.iterdir() if p.name != "runtime.json"})
    assert outputs[0] == outputs[1]
