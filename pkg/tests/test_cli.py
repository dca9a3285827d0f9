import json

import pytest

from stack3d import cli, utils


@pytest.fixture
def generated(tmp_path):
    out = tmp_path / "gen"
    assert cli.main(["gen", "--preset", "tiny", "--seed", "3", "--out-dir", str(out)]) == 0
    return out


def lefs(path):
    return [str(path / "tech.lef"), str(path / "cells.lef")]


def test_gen_writes_pdk_and_design(generated):
    assert {p.name for p in generated.iterdir()} == {"tech.lef", "cells.lef", "design.def"}


def test_unknown_command_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 1


def test_missing_argument_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main(["eval", "--def", "x.def"])
    assert info.value.code == 1


def test_malformed_def_is_a_parse_error(generated, tmp_path):
    bad = tmp_path / "bad.def"
    bad.write_text("VERSION 5.8 ;\nDESIGN broken ;\nCOMPONENTS oops ;\nEND DESIGN\n")
    assert cli.main(["eval", "--def", str(bad), "--lef", *lefs(generated), "--out", str(tmp_path / "r.json")]) == 2


def test_unknown_port_direction_is_a_parse_error(generated, tmp_path):
    bad = tmp_path / "bad.def"
    bad.write_text("VERSION 5.8 ;\nDESIGN broken ;\nPINS 1 ;\n- p + NET p + DIRECTION FEEDTHRU ;\nEND PINS\n"
                   "END DESIGN\n")
    assert cli.main(["eval", "--def", str(bad), "--lef", *lefs(generated), "--out", str(tmp_path / "r.json")]) == 2


def test_missing_file_is_a_usage_error(generated, tmp_path):
    code = cli.main(["eval", "--def", str(tmp_path / "nope.def"), "--lef", *lefs(generated),
                     "--out", str(tmp_path / "r.json")])
    assert code == 1


def test_pdk3d_command(generated, tmp_path):
    out = tmp_path / "pdk"
    assert cli.main(["pdk3d", "--tech", str(generated / "tech.lef"), "--lib", str(generated / "cells.lef"),
                     "--out-dir", str(out)]) == 0
    assert (out / "tech3d.lef").exists() and (out / "cells3d.lef").exists()


def test_partition_command(generated, tmp_path):
    out = tmp_path / "partition.json"
    assert cli.main(["partition", "--def", str(generated / "design.def"), "--lef", *lefs(generated),
                     "--method", "exhaustive", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert len(data["dies"]) == 4


def test_flow_run_then_eval_and_compare(generated, tmp_path, cache_dir, capsys):
    reports = {}
    for kind in ("FLOW_2D", "FLOW_3D_TILING"):
        config_path = tmp_path / f"{kind}.yaml"
        config_path.write_text(
            f"tech_lef: {generated / 'tech.lef'}\ncells_lef: {generated / 'cells.lef'}\n"
            f"def: {generated / 'design.def'}\nflow: {kind}\nplacer:\n  max_iters: 100\n")
        out = tmp_path / kind
        assert cli.main(["flow", "run", str(config_path), "--out-dir", str(out)]) == 0
        printed = json.loads(capsys.readouterr().out)
        assert printed == json.loads((out / "report.json").read_text())
        reports[kind] = out / "report.json"

    placed = tmp_path / "FLOW_2D" / "tiny_s3.def"
    evaluated = tmp_path / "eval.json"
    assert cli.main(["eval", "--def", str(placed), "--lef", *lefs(generated), "--out", str(evaluated)]) == 0
    assert json.loads(evaluated.read_text())["cut_nets"] == 0

    assert cli.main(["compare", str(reports["FLOW_2D"]), str(reports["FLOW_3D_TILING"])]) == 0
    improvement = json.loads(capsys.readouterr().out)
    assert improvement["area_mm2"] > 0


def test_thermal_command(generated, tmp_path, cache_dir):
    config_path = tmp_path / "flow.yaml"
    utils.write_json({"tech_lef": str(generated / "tech.lef"), "cells_lef": str(generated / "cells.lef"),
                      "def": str(generated / "design.def"), "flow": "FLOW_2D", "placer": {"max_iters": 60}},
                     config_path)
    assert cli.main(["flow", "run", str(config_path), "--out-dir", str(tmp_path / "run")]) == 0
    out = tmp_path / "thermal.json"
    assert cli.main(["thermal", "--def", str(tmp_path / "run" / "tiny_s3.def"), "--lef", *lefs(generated),
                     "--grid", "8", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["grid_n"] == 8 and data["t_max_c"] > data["ambient_c"]
    assert (tmp_path / "thermal.svg").exists()
