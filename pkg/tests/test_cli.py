import csv
import hashlib
import os
import subprocess
import sys

import pytest

from hodgewave.cli import TIMESERIES_COLUMNS as COLUMNS, ConfigError, RunConfig, load_config, main, parse_config

SMALL = """
[mesh]
nx = 8
ny = 2
lx = 1.0
ly = 0.25

[method]
problem = linear_plane_wave
method = {method}
degree = 1
alpha0 = -0.05
alpha1 = 0.05

[time]
integrator = {integrator}
dt = 0.01
t_final = 0.1

[output]
every = 1
mscl = {mscl}
energy_identity = {ei}
cross_section_points = 11
name = small
"""


def write_cfg(tmp_path, method="ms_ldgh", integrator="midpoint", mscl="true", ei="false", extra=""):
    p = tmp_path / f"{method}_{integrator}.ini"
    p.write_text(SMALL.format(method=method, integrator=integrator, mscl=mscl, ei=ei) + extra)
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def md5(path):
    return hashlib.md5(open(path, "rb").read()).hexdigest()


def test_run_writes_timeseries(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", write_cfg(tmp_path), "--out-dir", str(out)]) == 0
    rows = read_csv(out / "small_timeseries.csv")
    assert rows[0] == COLUMNS
    assert rows[0] == [
        "t", "H_global", "H_discrete", "l2err_u", "l2err_p", "l2err_sigma", "l2err_rho",
        "mscl_max_element_residual", "energy_identity_residual", "newton_iters_max", "linsolve_residual_max",
    ]  # fmt: skip
    assert len(rows) == 11 + 1
    assert rows[1][0] == "0.0" and rows[-1][0] == "0.1"
    assert rows[1][COLUMNS.index("mscl_max_element_residual")] == ""
    assert max(float(r[COLUMNS.index("mscl_max_element_residual")]) for r in rows[2:]) <= 1e-11
    # energy identity was not requested
    assert all(r[COLUMNS.index("energy_identity_residual")] == "" for r in rows[1:])


def test_run_field_outputs(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", write_cfg(tmp_path, mscl="false"), "--out-dir", str(out)]) == 0
    vtk = (out / "small_fields.vtk").read_text().splitlines()
    assert vtk[0].startswith("# vtk DataFile Version")
    assert vtk[2] == "ASCII" and vtk[3] == "DATASET UNSTRUCTURED_GRID"
    xs = read_csv(out / "small_cross_section.csv")
    assert xs[0] == ["x", "u_y_numeric", "u_y_exact"]
    assert len(xs) == 12
    # numeric and exact values are close for this resolved wave at t = 0.1
    err = max(abs(float(a) - float(b)) for _, a, b in xs[1:])
    assert err < 0.5


def test_mixed_energy_identity_column(tmp_path):
    out = tmp_path / "out"
    cfg = write_cfg(tmp_path, method="mixed_ldgh", mscl="false", ei="true")
    assert main(["run", "--config", cfg, "--out-dir", str(out)]) == 0
    rows = read_csv(out / "small_timeseries.csv")
    col = COLUMNS.index("energy_identity_residual")
    vals = [float(r[col]) for r in rows[1:]]
    assert max(vals) <= 1e-11
    # no discrete Hamiltonian for the velocity-trace method
    assert all(r[COLUMNS.index("H_discrete")] == "" for r in rows[1:])


def test_outputs_deterministic(tmp_path):
    cfg = write_cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out-dir", str(a)]) == 0
    assert main(["run", "--config", cfg, "--out-dir", str(b)]) == 0
    for f in ("small_timeseries.csv", "small_fields.vtk", "small_cross_section.csv"):
        assert md5(a / f) == md5(b / f)


def test_invalid_alpha1(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(SMALL.format(method="ms_ldgh", integrator="midpoint", mscl="false", ei="false").replace("alpha1 = 0.05", "alpha1 = -1"))
    assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 1
    assert "alpha1" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write_cfg(tmp_path, extra="colour = red\n")
    assert main(["run", "--config", cfg]) == 1
    assert "colour" in capsys.readouterr().err


def test_unknown_section_rejected():
    with pytest.raises(ConfigError):
        parse_config("[solver]\nx = 1\n")


def test_verlet_needs_ms_method(tmp_path, capsys):
    cfg = write_cfg(tmp_path, method="mixed_ldgh", integrator="verlet", mscl="false")
    assert main(["run", "--config", cfg, "--out-dir", str(tmp_path)]) == 1
    assert "integrator" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.ini")]) == 1


def test_usage_error_exit_code():
    assert main(["frobnicate"]) == 1
    assert main(["converge", "--config", "x.ini"]) == 1


def test_solver_failure_exit_code(tmp_path, capsys):
    text = (
        SMALL.format(method="ms_ldgh", integrator="midpoint", mscl="false", ei="false")
        .replace("problem = linear_plane_wave", "problem = cubic_klein_gordon\nnewton_maxit = 1\nnewton_tol = 1e-300")
        .replace("lx = 1.0\nly = 0.25", "lx = 1.0\nly = 1.0")
    )
    cfg = tmp_path / "fail.ini"
    cfg.write_text(text)
    assert main(["run", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
    assert "solver failure" in capsys.readouterr().err


def test_check_tableaux(tmp_path, capsys):
    assert main(["check-tableaux", "--out-dir", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "(unexpected)" not in text
    rows = read_csv(tmp_path / "tableaux.csv")
    by_name = {r[0]: r for r in rows[1:]}
    assert by_name["midpoint"][2] == "1" and float(by_name["midpoint"][3]) == 0.0
    assert by_name["verlet"][2] == "1" and float(by_name["verlet"][3]) == 0.0
    assert by_name["verlet_cbar_half"][2] == "0"


def test_converge(tmp_path, capsys):
    cfg = write_cfg(tmp_path, mscl="false")
    assert main(["converge", "--config", cfg, "--levels", "3", "--out-dir", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "small_converge.csv")
    assert len(rows) == 4
    hdr = rows[0]
    orders = [float(r[hdr.index("order_u")]) for r in rows[2:]]
    assert all(o > 1.0 for o in orders)
    assert main(["converge", "--config", cfg, "--levels", "0"]) == 1


def test_mscl_check(tmp_path, capsys):
    cfg = write_cfg(tmp_path, integrator="verlet", mscl="false")
    assert main(["mscl-check", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
    assert ": pass" in capsys.readouterr().out
    rows = read_csv(tmp_path / "small_mscl.csv")
    assert rows[0] == ["step", "t", "max_element_residual", "global_residual"]
    assert len(rows) == 11


def test_mscl_check_mixed_reports_bracket(tmp_path, capsys):
    cfg = write_cfg(tmp_path, method="mixed_ldgh", mscl="false")
    assert main(["mscl-check", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
    assert "not multisymplectic" in capsys.readouterr().out


def test_defaults_validate():
    cfg = RunConfig()
    cfg.validate()
    assert cfg.n_steps == 200


def test_load_config_roundtrip(tmp_path):
    cfg = load_config(write_cfg(tmp_path))
    assert (cfg.nx, cfg.ny, cfg.dt, cfg.method) == (8, 2, 0.01, "ms_ldgh")
    assert cfg.n_steps == 10


def test_module_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "hodgewave", "check-tableaux", "--out-dir", str(tmp_path)],
        capture_output=True,
        text=True,
        env=dict(os.environ),
    )
    assert r.returncode == 0
    assert "yoshida6" in r.stdout
