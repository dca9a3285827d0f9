"""
Flow orchestration service.

Runs one configured flow end to end (2D baseline, 3D tiling or 3D DMP) and
writes its artifacts. Stages run strictly in sequence; a failing stage is
reported with its name and the underlying error.
"""
from pathlib import Path
from typing import Dict, Optional, Tuple

from pydantic import BaseModel, Field

from .. import config, utils
from ..config import Stack3dError
from ..models import Design, Die, Library
from ..params import FlowConfig, FlowKind
from . import floorplan, generator, lefdef, legalize, metrics, partition, pdk3d, placer, render, thermal, tiling

logger = config.logger

REPORT_FILE = "report.json"
RUNTIME_FILE = "runtime.json"
LAYOUT_FILE = "layout.svg"
THERMAL_SVG_FILE = "thermal.svg"
THERMAL_JSON_FILE = "thermal.json"
PARTITION_FILE = "partition.json"


class FlowStageError(Stack3dError):
    """Wraps the error that aborted a flow stage."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code if isinstance(cause, Stack3dError) else 1
        super().__init__(f"stage '{stage}' failed: {cause}")


class FlowResult(BaseModel):
    report: metrics.Report
    artifacts: Dict[str, str] = Field(default_factory=dict)
    runtime_s: Dict[str, float] = Field(default_factory=dict)


class _Stages:
    """Times each stage and wraps its failure."""

    def __init__(self):
        self.timer = utils.StageTimer()

    def run(self, name: str, fn, *args, **kwargs):
        try:
            with self.timer.stage(name):
                return fn(*args, **kwargs)
        except FlowStageError:
            raise
        except Exception as e:
            logger.error(f"Flow stage '{name}' failed: {e}")
            raise FlowStageError(name, e) from e


def load_inputs(cfg: FlowConfig) -> Tuple[Library, Design]:
    """2D library and unplaced design, from files or from the generator."""
    if cfg.generator is not None:
        return generator.generate(cfg.generator)
    warnings: list = []
    library = lefdef.load_library([cfg.tech_lef, cfg.cells_lef], warnings)
    design = lefdef.parse_def(Path(cfg.def_file).read_text(), library, warnings)
    if design.is_3d:
        raise lefdef.LefDefParseError(f"input design '{design.name}' already uses die-variant masters")
    return library, design


def _legalize_all(design: Design, library: Library) -> Design:
    dies = [Die.BOTTOM, Die.TOP] if design.is_3d else [Die.BOTTOM]
    for die in dies:
        if any(c.die is die and not library.is_macro(c) for c in design.components):
            design = legalize.legalize(design, library, die)
    report = legalize.check_legality(design, library)
    if not report.is_legal:
        raise legalize.LegalizationError(
            f"illegal placement: {len(report.overlaps)} overlaps, {len(report.off_site)} off-site, "
            f"{len(report.out_of_die)} outside the die")
    return design


def run_flow(cfg: FlowConfig) -> FlowResult:
    """
    Run the configured flow and write its artifacts to `cfg.out_dir`.

    FLOW_2D: size, I/O, mixed-size placement, legalization, metrics,
    thermal. FLOW_3D_*: size, I/O, 3D PDK, partition, tiling or DMP
    placement, legalization, I/O tiers, metrics, thermal.
    """
    stages = _Stages()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    partition_params = cfg.partition.model_copy(update={"seed": cfg.seed})
    placer_params = cfg.placer.model_copy(update={"seed": cfg.seed})
    is_3d = cfg.flow is not FlowKind.FLOW_2D
    artifacts: Dict[str, str] = {}

    library2d, design = stages.run("load", load_inputs, cfg)
    power_map: Optional[Dict[str, float]] = None
    if cfg.power_file is not None:
        power_map = stages.run("power", utils.load_power_file, cfg.power_file)
    logger.info(f"Running {cfg.flow.value} on '{design.name}' with seed {cfg.seed}.")

    spec = stages.run("floorplan", floorplan.size_die, design, library2d, cfg.flow,
                      cfg.floorplan.utilization, cfg.floorplan.aspect)
    design = floorplan.apply_floorplan(design, spec)
    design = stages.run("io", floorplan.place_io, design, spec, library2d, cfg.seed, cfg.floorplan)

    if is_3d:
        library = stages.run("pdk3d", pdk3d.load_or_build_library3d, library2d, cfg.pdk3d)
        assignment = stages.run("partition", partition.partition_memory_on_logic, design, library2d,
                                partition_params)
        artifacts["partition"] = str(utils.write_json(assignment.to_dict(), out / PARTITION_FILE))
        design = partition.apply_partition(design, assignment, library)
        design = partition.assign_io_tiers(design, library.technology)
        if cfg.flow is FlowKind.FLOW_3D_TILING:
            design = stages.run("place", lambda: tiling.run_tiling(design, library, cfg.tiling, placer_params,
                                                                   legalize=False).design)
        else:
            design = stages.run("place", placer.run_dmp, design, library, placer_params, False)
    else:
        library = library2d
        design = stages.run("place", placer.run_mixed_2d, design, library, placer_params, False)

    design = stages.run("legalize", _legalize_all, design, library)
    if is_3d:
        design = stages.run("io_tiers", partition.assign_io_tiers, design, library.technology)

    report = stages.run("metrics", metrics.evaluate, design, library, power_map,
                        cfg.pdk3d.hbt_pitch if is_3d else None)
    solved = stages.run("thermal", thermal.simulate, design, library, power_map, cfg.thermal)

    def write_outputs() -> None:
        for key, path in lefdef.write_design_files(design, out, library).items():
            artifacts[f"def_{key}"] = str(path)
        render.write_svg(render.render_layout(design, library), out / LAYOUT_FILE)
        render.write_svg(render.render_thermal(solved.temperatures), out / THERMAL_SVG_FILE)
        utils.write_json(solved.to_dict(), out / THERMAL_JSON_FILE)
        artifacts.update(layout=str(out / LAYOUT_FILE), thermal_svg=str(out / THERMAL_SVG_FILE),
                         thermal_json=str(out / THERMAL_JSON_FILE))

    stages.run("write", write_outputs)

    runtime = dict(stages.timer.seconds)
    notes = dict(report.notes)
    notes.pop("t_max_c", None)
    update = {"t_max_c": round(solved.t_max, 9), "notes": notes}
    if cfg.record_runtime:
        notes.pop("runtime_s", None)
        update["runtime_s"] = runtime
    report = report.model_copy(update=update)
    artifacts["report"] = str(utils.write_json(report.model_dump(mode="json"), out / REPORT_FILE))
    artifacts["runtime"] = str(utils.write_json(runtime, out / RUNTIME_FILE))
    logger.info(f"Flow {cfg.flow.value} finished in {stages.timer.total:.2f} s: "
                f"HPWL {report.hpwl_um:.1f} um, T_max {report.t_max_c:.2f} C.")
    return FlowResult(report=report, artifacts=artifacts, runtime_s=runtime)


def compare_report_files(baseline_path, candidate_path) -> Dict[str, Optional[float]]:
    """Percent improvement of one report.json over another."""
    baseline = metrics.Report.model_validate(utils.load_structured(baseline_path))
    candidate = metrics.Report.model_validate(utils.load_structured(candidate_path))
    return metrics.compare_reports(baseline, candidate)
