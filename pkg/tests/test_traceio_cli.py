import numpy as np
import pytest

from homcontrol.cli import EXIT_CONFIG, EXIT_OK, main
from homcontrol.scenario import load_bundled
from homcontrol.sim import SimTrace, run_closed_loop
from homcontrol.traceio import emit_csv, header_shape, plot_script, read_csv, trace_header


def one_row():
    return SimTrace(t=np.array([0.0]), x=np.array([[1.0 / 3.0]]), y=np.array([[0.1]]),
                    u=np.array([[-2.5]]), lam=np.array([0.0]), lam_dot=np.array([1.0]),
                    H=np.array([[1e-300]]), mode=np.array(["F"]), sat=np.array([False]))


def test_header():
    assert trace_header(2, 1) == ["t", "x1", "x2", "y1", "u1", "lambda", "lambda_dot", "H1",
                                  "mode", "sat"]


def test_one_row_file(tmp_path):
    path = tmp_path / "t.csv"
    emit_csv(one_row(), path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[1].endswith(",F,0")


def test_empty_trace_rejected(tmp_path):
    tr = one_row()
    empty = SimTrace(*(getattr(tr, f)[:0] for f in
                       ("t", "x", "y", "u", "lam", "lam_dot", "H", "mode", "sat")))
    with pytest.raises(ValueError):
        emit_csv(empty, tmp_path / "e.csv")


def short_scenario(name, t_end):
    import dataclasses
    sc = load_bundled(name)
    return dataclasses.replace(sc, sim=dataclasses.replace(sc.sim, t_end=t_end))


def test_roundtrip_is_bit_exact(tmp_path):
    tr = run_closed_loop(short_scenario("mimo_toy", 0.5))
    path = tmp_path / "toy.csv"
    emit_csv(tr, path)
    back = read_csv(path)
    for name in ("t", "x", "y", "u", "lam", "lam_dot", "H", "mode", "sat"):
        np.testing.assert_array_equal(getattr(back, name), getattr(tr, name))


def test_motor_columns(tmp_path):
    tr = run_closed_loop(short_scenario("motor", 0.01))
    path = tmp_path / "motor.csv"
    emit_csv(tr, path)
    assert header_shape(path) == (4, 2)
    header = path.read_text().splitlines()[0].split(",")
    row = read_csv(path)
    # x3, x4 are the stator currents
    np.testing.assert_array_equal(row.x[:, 2:], tr.x[:, 2:])
    assert header[3:5] == ["x3", "x4"]


def test_plot_script_references_columns(tmp_path):
    script = plot_script(tmp_path / "run.csv", 1, 1)
    assert "using 1:3" in script and "run.png" in script


def test_cli_list_plants(capsys):
    assert main(["list-plants"]) == EXIT_OK
    assert capsys.readouterr().out.split() == ["scalar_cubic", "mimo_toy", "induction_motor"]


def test_cli_simulate_and_plot(tmp_path, capsys, monkeypatch):
    scen = tmp_path / "lin.scenario"
    scen.write_text("[scenario]\nplant = mimo_toy\n[sim]\ndt = 1e-2\nt_end = 1\n"
                    "[initial]\nx0 = 1, 1\n")
    assert main(["simulate", str(scen), "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "status: ok" in out and "final y" in out
    csv_path = tmp_path / "lin.csv"
    assert csv_path.exists()
    assert main(["plot", str(csv_path)]) == EXIT_OK
    assert (tmp_path / "lin.gp").exists()


def test_cli_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.scenario"
    bad.write_text("[scenario]\nplant = scalar_cubic\n[sim]\ndt = -1\n")
    assert main(["simulate", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["simulate", "no_such_thing", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["plot", str(tmp_path / "missing.csv")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_cli_seeded_runs_are_identical(tmp_path):
    scen = tmp_path / "m.scenario"
    sc = load_bundled("motor")
    from homcontrol.scenario import dump_scenario
    import dataclasses
    scen.write_text(dump_scenario(dataclasses.replace(
        sc, sim=dataclasses.replace(sc.sim, t_end=0.02))))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", str(scen), "--out", str(a), "--seed", "42"]) == EXIT_OK
    assert main(["simulate", str(scen), "--out", str(b), "--seed", "42"]) == EXIT_OK
    assert (a / "m.csv").read_bytes() == (b / "m.csv").read_bytes()
    c = tmp_path / "c"
    assert main(["simulate", str(scen), "--out", str(c), "--seed", "7"]) == EXIT_OK
    assert (a / "m.csv").read_bytes() != (c / "m.csv").read_bytes()
