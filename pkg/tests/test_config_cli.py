import csv
import json

import numpy as np
import pytest
import yaml

from iontransport import cli
from iontransport import config as cf

from _common import CONFIGS

MINIMAL = {
    "magnet": {"kind": "ising", "n_spins": 2, "jz_kHz": 0.16},
    "drive": {
        "S": {"g_over_kappa": 0.05, "delta_over_J": -2.0, "kappa_over_J": 0.05, "nbar": 0.1},
        "D": {"g_over_kappa": 0.05, "delta_over_J": -2.0, "kappa_over_J": 0.05, "nbar": 0.01},
    },
}


def write(tmp_path, data, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def crystal_cfg(**trap):
    c = yaml.safe_load((CONFIGS / "fig5a.yaml").read_text())
    c["crystal"].update(trap)
    return c


# -- schema ------------------------------------------------------------------

def test_defaults_filled_in():
    cfg = cf.from_dict(MINIMAL)
    assert cfg.solver.mode == "secular"
    assert cfg.solver.horizon_rates == 50.0
    assert cfg.protocol.t_q_rates == 40.0
    assert cfg.output.directory == "out"
    assert cfg.crystal is None and cfg.cooling is None


def test_negative_trap_frequency_names_field():
    with pytest.raises(cf.ConfigError) as exc:
        cf.from_dict(crystal_cfg(trap_z_MHz=-1.0))
    locs = [loc for loc, _ in exc.value.errors]
    assert "crystal.trap_z_MHz" in locs


def test_all_errors_reported_together():
    bad = crystal_cfg(trap_x_MHz=-4.0, trap_y_MHz=0.0)
    bad["cooling"]["wavelength_nm"] = -1
    with pytest.raises(cf.ConfigError) as exc:
        cf.from_dict(bad)
    locs = {loc for loc, _ in exc.value.errors}
    assert {"crystal.trap_x_MHz", "crystal.trap_y_MHz", "cooling.wavelength_nm"} <= locs


def test_unknown_key_rejected():
    data = dict(MINIMAL, solver={"mode": "bohr", "tolerance": 1})
    with pytest.raises(cf.ConfigError) as exc:
        cf.from_dict(data)
    assert any("tolerance" in loc for loc, _ in exc.value.errors)


def test_reservoir_needs_one_of_each_pair():
    data = yaml.safe_load(yaml.safe_dump(MINIMAL))
    data["drive"]["S"]["delta_kHz"] = 0.1
    with pytest.raises(cf.ConfigError, match="delta_over_J"):
        cf.from_dict(data)


def test_grid_forms():
    assert np.allclose(cf.Grid(start=0, stop=1, points=3).array(), [0, 0.5, 1])
    assert np.allclose(cf.Grid(values=[3, 2, 1]).array(), [3, 2, 1])
    with pytest.raises(ValueError):
        cf.Grid(values=[1, 3, 2])
    with pytest.raises(ValueError):
        cf.Grid(start=0, points=3)


def test_missing_file_and_bad_yaml(tmp_path):
    with pytest.raises(cf.ConfigError, match="not found"):
        cf.parse_config(tmp_path / "nope.yaml")
    p = tmp_path / "bad.yaml"
    p.write_text("magnet: [unclosed")
    with pytest.raises(cf.ConfigError, match="invalid YAML"):
        cf.parse_config(p)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")), ids=lambda p: p.stem)
def test_round_trip(path):
    cfg = cf.parse_config(path)
    again = cf.from_dict(yaml.safe_load(cf.dump_config(cfg)))
    assert again == cfg


# -- command line --------------------------------------------------------------

def run_cli(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_modes_table(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "modes", CONFIGS / "fig5a.yaml", "--out", tmp_path)
    assert code == 0
    assert json.loads(out)["subcommand"] == "modes"
    rows = read_csv(tmp_path / "modes.csv")
    assert len(rows) == 9


def test_invalid_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["fly", str(CONFIGS / "dimer.yaml")])
    assert exc.value.code == 2


def test_error_json_on_stderr(tmp_path, capsys):
    p = write(tmp_path, crystal_cfg(trap_z_MHz=-1.0))
    code, out, err = run_cli(capsys, "modes", p)
    assert code == 1 and out == ""
    msg = json.loads(err)
    assert msg["error"] == "ConfigError"
    assert any(e["field"] == "crystal.trap_z_MHz" for e in msg["errors"])


def test_runtime_error_json(tmp_path, capsys):
    # no crystal section: modes cannot run
    code, _, err = run_cli(capsys, "modes", write(tmp_path, MINIMAL), "--out", tmp_path)
    assert code == 1
    assert "crystal" in json.loads(err)["message"]


def test_sweep_peak_at_minus_two_j(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "sweep", CONFIGS / "fig5a.yaml", "--out", tmp_path)
    assert code == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 200
    best = max(rows, key=lambda r: float(r["I_S"]))
    assert float(best["delta_over_J"]) == pytest.approx(-2.0, abs=0.05)


def test_sweep_independent_of_threads(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    run_cli(capsys, "sweep", CONFIGS / "fig5a.yaml", "--out", a, "--threads", 1)
    run_cli(capsys, "sweep", CONFIGS / "fig5a.yaml", "--out", b, "--threads", 4)
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()


@pytest.mark.parametrize("sub,png", [("modes", "modes"), ("dimer", "dimer"), ("protocol", "protocol")])
def test_plot_writes_png(tmp_path, capsys, sub, png):
    name = "fig5a.yaml" if sub == "modes" else "dimer.yaml"
    code, out, _ = run_cli(capsys, sub, CONFIGS / name, "--out", tmp_path, "--plot")
    assert code == 0
    assert (tmp_path / f"{png}.png").stat().st_size > 0
    assert str(tmp_path / f"{png}.png") in json.loads(out)["outputs"]


def test_output_dir_relative_to_config(tmp_path, capsys, monkeypatch):
    sub = tmp_path / "cfgdir"
    sub.mkdir()
    p = write(sub, dict(MINIMAL, output={"directory": "results", "prefix": "x_"}))
    monkeypatch.chdir(tmp_path)
    code, _, _ = run_cli(capsys, "dimer", p)
    assert code == 0
    assert (sub / "results" / "x_dimer.csv").is_file()


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.make_parser().parse_args(["sweep", "c.yaml"]).threads == 3
    monkeypatch.setenv(cli.THREADS_ENV, "junk")
    assert cli.make_parser().parse_args(["sweep", "c.yaml"]).threads == 1


def test_dimer_csv_matches_closed_form(tmp_path, capsys):
    run_cli(capsys, "dimer", CONFIGS / "dimer.yaml", "--out", tmp_path)
    (row,) = read_csv(tmp_path / "dimer.csv")
    assert float(row["I_numeric"]) == pytest.approx(float(row["I_analytic"]), rel=1e-2)
