"""
Command-line interface.

Subcommands mirror the flow stages: pdk3d, partition, place (tiling|dmp),
eval, thermal, flow run, gen and compare. Errors map to exit codes
0 ok, 1 usage, 2 parse error, 3 infeasible, 4 non-convergence.
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from pydantic import ValidationError

from . import config, utils
from .config import Stack3dError
from .models import Design, Library
from .params import (
    FlowKind, GeneratorParams, PartitionParams, Pdk3dConfig, PlacerParams, ThermalParams, TilingParams,
)
from .services import (
    floorplan, flow, generator, lefdef, metrics, partition, pdk3d, placer, render, thermal, tiling,
)

logger = config.logger

EXIT_OK = 0
EXIT_USAGE = 1


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; this CLI reserves 2 for parse errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load(def_path: str, lef_paths: Sequence[str]) -> Tuple[Library, Design]:
    warnings: List[str] = []
    library = lefdef.load_library(list(lef_paths), warnings)
    design = lefdef.parse_def(Path(def_path).read_text(), library, warnings)
    return library, design


def _ensure_floorplan(design: Design, library: Library, flow_kind: FlowKind, utilization: float,
                      seed: int) -> Design:
    """Size the die and place ports when the input DEF carries neither."""
    if design.die_bottom is None:
        spec = floorplan.size_die(design, library, flow_kind, utilization)
        design = floorplan.apply_floorplan(design, spec)
    else:
        spec = floorplan.FloorplanSpec(die_bottom=design.die_bottom, site_name=library.site().name,
                                       rows=floorplan.build_rows(design.die_bottom, library))
    if any(not p.is_placed for p in design.io_ports):
        design = floorplan.place_io(design, spec, library, seed)
    return design


def cmd_pdk3d(args) -> int:
    library2d = lefdef.load_library([args.tech] + list(args.lib))
    pdk = Pdk3dConfig(hbt_size=args.hbt_size, hbt_pitch=args.hbt_pitch)
    library3d = pdk3d.build_library3d(library2d, pdk)
    pdk3d.write_pdk(library3d, args.out_dir)
    return EXIT_OK


def cmd_partition(args) -> int:
    library, design = _load(args.def_file, args.lef)
    design = _ensure_floorplan(design, library, FlowKind.FLOW_3D_DMP, args.utilization, args.seed)
    params = PartitionParams.with_cut_weight(args.w_cut, iterations=args.iters, seed=args.seed,
                                             method=args.method)
    assignment = partition.partition_memory_on_logic(design, library, params)
    utils.write_json(assignment.to_dict(), args.out)
    return EXIT_OK


def cmd_place(args) -> int:
    library2d, design = _load(args.def_file, args.lef)
    flow_kind = FlowKind.FLOW_3D_TILING if args.engine == "tiling" else FlowKind.FLOW_3D_DMP
    design = _ensure_floorplan(design, library2d, flow_kind, args.utilization, args.seed)
    library3d = pdk3d.load_or_build_library3d(library2d, Pdk3dConfig())
    if args.partition:
        assignment = partition.PartitionAssignment.model_validate(utils.load_structured(args.partition))
    else:
        assignment = partition.partition_memory_on_logic(design, library2d, PartitionParams(seed=args.seed))
    design = partition.assign_io_tiers(partition.apply_partition(design, assignment, library3d),
                                       library3d.technology)
    out = Path(args.out)
    params = PlacerParams(seed=args.seed, snapshot_every=args.dump_iters)

    def snapshot(label: str, current: Design) -> None:
        lefdef.write_design_files(current, out / "snapshots", library3d, stem=f"{design.name}_{label}")

    if flow_kind is FlowKind.FLOW_3D_TILING:
        design = tiling.run_tiling(design, library3d, TilingParams(height_target=args.target), params).design
    else:
        design = placer.run_dmp(design, library3d, params, True, snapshot if args.dump_iters else None)
    design = partition.assign_io_tiers(design, library3d.technology)
    lefdef.write_design_files(design, out, library3d)
    return EXIT_OK


def cmd_eval(args) -> int:
    library, design = _load(args.def_file, args.lef)
    power = utils.load_power_file(args.power) if args.power else None
    pitch = args.hbt_pitch if design.is_3d else None
    report = metrics.evaluate(design, library, power, pitch)
    utils.write_json(report.model_dump(mode="json"), args.out)
    return EXIT_OK


def cmd_thermal(args) -> int:
    library, design = _load(args.def_file, args.lef)
    power = utils.load_power_file(args.power) if args.power else None
    params = ThermalParams(grid_n=args.grid, power_scale=args.scale)
    result = thermal.simulate(design, library, power, params)
    utils.write_json(result.to_dict(), args.out)
    svg = args.svg or str(Path(args.out).with_suffix(".svg"))
    render.write_svg(render.render_thermal(result.temperatures), svg)
    return EXIT_OK


def cmd_flow_run(args) -> int:
    cfg = utils.load_flow_config(args.config)
    if args.out_dir:
        cfg = cfg.model_copy(update={"out_dir": Path(args.out_dir)})
    result = flow.run_flow(cfg)
    print(utils.dumps_json(result.report.model_dump(mode="json")), end="")
    return EXIT_OK


def cmd_gen(args) -> int:
    library, design = generator.generate(GeneratorParams(preset=args.preset, seed=args.seed))
    generator.write_generated(library, design, args.out_dir)
    return EXIT_OK


def cmd_compare(args) -> int:
    improvement = flow.compare_report_files(args.baseline, args.candidate)
    text = utils.dumps_json(improvement)
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stack3d", description="Face-to-face 3D backend flow")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("pdk3d", help="Build tech3d.lef and cells3d.lef from a 2D PDK")
    p.add_argument("--tech", required=True)
    p.add_argument("--lib", required=True, nargs="+")
    p.add_argument("--hbt-size", type=float, default=0.5)
    p.add_argument("--hbt-pitch", type=float, default=1.5)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_pdk3d)

    p = sub.add_parser("partition", help="Memory-on-logic macro partition")
    p.add_argument("--def", dest="def_file", required=True)
    p.add_argument("--lef", required=True, nargs="+")
    p.add_argument("--w-cut", type=float, default=0.5)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--method", choices=["ea", "exhaustive"], default="ea")
    p.add_argument("--utilization", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("place", help="3D placement")
    p.add_argument("engine", choices=["tiling", "dmp"])
    p.add_argument("--def", dest="def_file", required=True)
    p.add_argument("--lef", required=True, nargs="+")
    p.add_argument("--partition")
    p.add_argument("--target", type=float, default=0.8, help="Skyline height target (tiling)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--utilization", type=float, default=0.5)
    p.add_argument("--dump-iters", type=int, default=None, help="Write DEF snapshots every N iterations (dmp)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("eval", help="Evaluate a placed design")
    p.add_argument("--def", dest="def_file", required=True)
    p.add_argument("--lef", required=True, nargs="+")
    p.add_argument("--power")
    p.add_argument("--hbt-pitch", type=float, default=1.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("thermal", help="Steady-state thermal analysis")
    p.add_argument("--def", dest="def_file", required=True)
    p.add_argument("--lef", required=True, nargs="+")
    p.add_argument("--power")
    p.add_argument("--grid", type=int, default=10)
    p.add_argument("--scale", type=float, default=10.0)
    p.add_argument("--out", required=True)
    p.add_argument("--svg")
    p.set_defaults(func=cmd_thermal)

    p = sub.add_parser("flow", help="End-to-end flows")
    flow_sub = p.add_subparsers(dest="flow_command", required=True, parser_class=_Parser)
    run = flow_sub.add_parser("run")
    run.add_argument("config")
    run.add_argument("--out-dir")
    run.set_defaults(func=cmd_flow_run)

    p = sub.add_parser("gen", help="Write a synthetic PDK and design")
    p.add_argument("--preset", choices=sorted(generator.PRESETS), default="small")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("compare", help="Percent improvement of one report over another")
    p.add_argument("baseline")
    p.add_argument("candidate")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Stack3dError as e:
        logger.error(str(e))
        return e.exit_code
    except (ValidationError, ValueError, KeyError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_USAGE
