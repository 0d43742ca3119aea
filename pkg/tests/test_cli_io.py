import json

import numpy as np
import pytest

from more_dwr.cli_io import (
    ERROR_HEADER,
    GOAL_HEADER,
    SUMMARY_HEADER,
    build_fom,
    cli_main,
    config_from_dict,
    list_presets,
    load_config,
    load_preset,
    read_csv,
    run_experiment,
    write_config,
    write_traces,
)
from more_dwr.errors import ConfigurationError

from conftest import heat_1d_dict


def test_presets_load_and_match_problem_sizes():
    assert list_presets() == ["elasto_3d", "heat_1d", "heat_2d"]
    sizes = {"heat_1d": 8193, "heat_2d": 4225, "elasto_3d": 702}
    for name, n in sizes.items():
        cfg = load_preset(name)
        mesh = cfg.mesh
        nodes = np.prod([c * mesh.degree + 1 for c in mesh.cells])
        assert nodes * (6 if cfg.equation == "elastodynamics" else 1) == n
        assert cfg.rom.K * cfg.rom.L == cfg.time.M


def test_config_roundtrip(tmp_path):
    cfg = config_from_dict(heat_1d_dict())
    path = tmp_path / "c.json"
    write_config(cfg, path)
    assert load_config(path) == cfg


def test_load_config_falls_back_to_preset(tmp_path):
    assert load_config(tmp_path / "heat_2d.json").name == "heat_2d"
    with pytest.raises(ConfigurationError, match="not found"):
        load_config(tmp_path / "nothing_here.json")


@pytest.mark.parametrize(
    "mutate,message",
    [
        (lambda d: d["rom"].pop("tol"), "rom.tol: missing required key 'tol'"),
        (lambda d: d["mesh"].update(spacing=2), "mesh.spacing: unknown key"),
        (lambda d: d.update(equation="wave"), "equation"),
        (lambda d: d["rom"].update(K=3), "K\\*L"),
        (lambda d: d["goal"].pop("lo"), "needs 'lo' and 'hi'"),
        (lambda d: d["rom"].update(eps_primal=0.0), "eps_primal"),
        (lambda d: d["time"].update(family="radau"), "radau"),
        (lambda d: d.update(mesh=[1, 2]), "mesh: expected an object"),
    ],
)
def test_config_errors_name_the_field(mutate, message):
    d = heat_1d_dict()
    mutate(d)
    with pytest.raises((ConfigurationError, ValueError), match=message):
        config_from_dict(d)


def test_elastodynamics_needs_material():
    d = load_preset("elasto_3d").to_dict()
    d["material"] = None
    with pytest.raises(ConfigurationError, match="material"):
        config_from_dict(d)


def test_goal_time_average_flag():
    d = heat_1d_dict()
    averaged = build_fom(config_from_dict(d)).goal.T
    d["goal"]["time_average"] = False
    assert averaged == 4.0 and build_fom(config_from_dict(d)).goal.T == 1.0


def test_traces_format(tmp_path):
    d = heat_1d_dict()
    d["mode"] = "verification"
    report = run_experiment(config_from_dict(d))
    paths = write_traces(report, tmp_path / "out")
    raw = paths["goal"].read_bytes()
    assert raw.count(b"\r\n") == report.M + 1
    header, rows = read_csv(paths["goal"])
    assert header == GOAL_HEADER and len(rows) == report.M
    assert float(rows[3][2]) == report.goal_rom[3]  # 17 significant digits round-trip
    header, rows = read_csv(paths["error"])
    assert header == ERROR_HEADER and float(rows[0][3]) == 0.01
    header, rows = read_csv(paths["summary"])
    assert header == SUMMARY_HEADER and len(rows) == 1
    summary = dict(zip(header, rows[0]))
    assert int(summary["fom_solves"]) == report.fom_solves
    assert sum(int(summary[f"case{c}"]) for c in (1, 2, 3, 4)) == report.M


def test_traces_leave_reference_cells_empty(tmp_path):
    report = run_experiment(config_from_dict(heat_1d_dict()))
    paths = write_traces(report, tmp_path)
    _, rows = read_csv(paths["goal"])
    assert all(row[1] == "" for row in rows)
    summary = dict(zip(*[read_csv(paths["summary"])[0], read_csv(paths["summary"])[1][0]]))
    assert summary["J_fom"] == "" and summary["effectivity"] == "" and summary["J_rom"] != ""


def test_cli_run_and_verify(tmp_path, capsys):
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps(heat_1d_dict()))
    out = tmp_path / "res"
    assert cli_main(["verify", str(cfg), "--out", str(out), "--tol", "0.02", "--threads", "1"]) == 0
    captured = capsys.readouterr()
    assert "rel_err=" in captured.out and "effectivity=" in captured.out
    events = [json.loads(line) for line in captured.err.splitlines()]
    assert events[0]["event"] == "bootstrap" and events[-1]["event"] == "done"
    assert float(read_csv(out / "error.csv")[1][0][3]) == 0.02
    assert cli_main(["run", str(cfg), "--out", str(out), "--mode", "adaptive"]) == 0
    assert "rel_err" not in capsys.readouterr().out


def test_cli_error_exit_codes(tmp_path, capsys, monkeypatch):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli_main(["run", str(bad)]) == 1
    assert "invalid JSON" in capsys.readouterr().err
    assert cli_main(["explode"]) == 2
    good = tmp_path / "good.json"
    good.write_text(json.dumps(heat_1d_dict()))
    monkeypatch.setenv("MORE_DWR_THREADS", "many")
    assert cli_main(["run", str(good), "--out", str(tmp_path / "x")]) == 1


def test_cli_lists_presets(capsys):
    assert cli_main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "heat_1d" in out and "elasto_3d" in out
