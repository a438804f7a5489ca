#!/usr/bin/env python3
"""
Command-line tests: exit codes, output files and configuration layering.
"""
import os
import sys

import pytest

from transfer_hdg.core.errors import ConfigError
from transfer_hdg.core.mesh import read_mesh
from transfer_hdg.main import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, run_cli
from transfer_hdg.tools.mesh_tools import build_mesh
from transfer_hdg.utils.config_utils import ENV_PREFIX, load_run_config, read_config_file
from transfer_hdg.utils.file_utils import REPORT_COLUMNS, read_report_csv


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for key in list(os.environ):
        if key.startswith(ENV_PREFIX):
            monkeypatch.delenv(key)


def test_mesh_command_writes_square_grid(tmp_path):
    out = str(tmp_path / "square.mesh")
    assert run_cli(["mesh", "--geometry", "square", "--n", "4", "--out", out]) == EXIT_OK
    mesh = read_mesh(out)
    assert mesh.num_triangles == 32
    assert mesh.summary()["neumann"] == 4


def test_mesh_command_interpolated_annulus(tmp_path):
    out = str(tmp_path / "annulus")
    assert run_cli(["mesh", "--geometry", "annulus", "--nodes", "64", "--out", out]) == EXIT_OK
    mesh = read_mesh(out + ".mesh")
    assert mesh.summary()["neumann"] > 0
    assert mesh.summary()["dirichlet"] > 0


def test_unknown_geometry_is_a_usage_error(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        run_cli(["mesh", "--geometry", "torus", "--out", str(tmp_path / "t.mesh")])
    assert excinfo.value.code == EXIT_USAGE


def test_nodes_with_immersed_fit_is_a_usage_error(tmp_path):
    out = str(tmp_path / "ring.mesh")
    assert run_cli(["mesh", "--geometry", "ring", "--fit", "immersed", "--nodes", "32", "--out", out]) == EXIT_USAGE
    assert not os.path.exists(out)


def test_build_mesh_marks_unknown_geometry_as_usage(tmp_path):
    result = build_mesh("torus", str(tmp_path / "t.mesh"))
    assert not result["success"]
    assert result["usage"]


def test_bad_degree_is_a_usage_error(tmp_path):
    assert run_cli(["solve", "--case", "ex1", "--k", "7", "--out", str(tmp_path)]) == EXIT_USAGE


def test_configuration_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep\ncase = ex4\nk = 1\ntol = 1e-9\ncondensed = yes\n")
    environ = {ENV_PREFIX + "K": "2", ENV_PREFIX + "TOL": "1e-8"}
    config = load_run_config({"k": 3, "paths": None}, config_file=str(cfg), environ=environ)
    assert config.case == "ex4"
    assert config.k == 3
    assert config.tol == 1e-8
    assert config.condensed is True
    assert config.levels == (1, 2, 4, 8)
    assert config.fit == "interpolated"
    assert config.paths == "p2"


def test_configuration_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("case = ex1\ncolour = blue\n")
    with pytest.raises(ConfigError):
        read_config_file(str(cfg))


def test_interface_case_requires_interpolated_fit():
    with pytest.raises(ConfigError):
        load_run_config({"case": "ex6", "fit": "immersed"}, environ={})


def test_solve_writes_fields_paths_and_log(tmp_path):
    code = run_cli(["solve", "--case", "ex1", "--k", "1", "--levels", "4", "--out", str(tmp_path)])
    assert code == EXIT_OK
    for name in ("ex1_k1.vtk", "paths.csv", "run.log"):
        assert (tmp_path / name).exists()
    with open(tmp_path / "ex1_k1.vtk", encoding="utf-8") as handle:
        text = handle.read()
    assert "SCALARS u_star double 1" in text
    assert "VECTORS q_h double" in text


def test_solve_on_mesh_file(tmp_path):
    mesh_path = str(tmp_path / "square.mesh")
    assert run_cli(["mesh", "--geometry", "square", "--n", "4", "--out", mesh_path]) == EXIT_OK
    out = tmp_path / "run"
    code = run_cli(["solve", "--case", "ex1", "--k", "1", "--mesh-file", mesh_path, "--out", str(out)])
    assert code == EXIT_OK
    assert (out / "ex1_k1.vtk").exists()


def test_missing_mesh_file_fails(tmp_path):
    code = run_cli(["solve", "--case", "ex1", "--mesh-file", str(tmp_path / "none.mesh"),
                    "--out", str(tmp_path)])
    assert code == EXIT_FAILURE


def test_unreachable_tolerance_is_a_numerical_failure(tmp_path):
    code = run_cli(["solve", "--case", "ex1", "--k", "1", "--levels", "4", "--tol", "1e-300",
                    "--out", str(tmp_path)])
    assert code == EXIT_FAILURE


def test_convergence_report(tmp_path):
    code = run_cli(["convergence", "--case", "ex1", "--k", "1", "--levels", "4,8", "--docx",
                    "--out", str(tmp_path)])
    assert code == EXIT_OK
    rows = read_report_csv(str(tmp_path / "report.csv"))
    assert len(rows) == 2
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert rows[0]["ord_u"] is None
    assert rows[1]["ord_u"] is not None
    assert rows[1]["h"] < rows[0]["h"]
    assert (tmp_path / "paths_level4.csv").exists()
    assert (tmp_path / "paths_level8.csv").exists()
    assert (tmp_path / "report.docx").exists()


def test_convergence_report_is_reproducible(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        assert run_cli(["convergence", "--case", "ex1", "--k", "0", "--levels", "4,8",
                        "--out", str(out)]) == EXIT_OK
    assert (first / "report.csv").read_bytes() == (second / "report.csv").read_bytes()


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
