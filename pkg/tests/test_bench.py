import csv
import subprocess
import sys

import numpy as np
import pytest

from ddfem.bench import (
    COOK_SCHEMA,
    INFLATION_SCHEMA,
    STRETCH_SCHEMA,
    ExperimentConfig,
    cook_mesh,
    default_stretch_mesh,
    inflation_mesh,
    run_cook,
    run_inflation,
    run_linearised,
    run_stretch,
)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_inflation_mesh_tags():
    mesh = inflation_mesh(4)
    mids = mesh.edge_midpoints(mesh.boundary_edges)
    for e, mid in zip(mesh.boundary_edges, mids):
        tag = mesh.boundary_tags[int(e)]
        radius = np.hypot(mid[0], mid[1])
        if abs(mid[0]) < 1e-9 or abs(mid[1]) < 1e-9:
            assert tag == "d"  # symmetry cuts
        elif radius < 0.75:
            assert tag == "t"  # inner arc
        else:
            assert tag == "d"  # outer arc


def test_cook_mesh_geometry():
    mesh = cook_mesh(6)
    assert mesh.n_cells == 72
    assert np.max(mesh.vertices[:, 0]) == pytest.approx(48.0)
    assert np.max(mesh.vertices[:, 1]) == pytest.approx(60.0)


def test_inflation_lambda_one_exactness(tmp_path):
    config = ExperimentConfig(experiment="inflation", order=1, lam=1.0,
                              levels=(2, 3), out_dir=str(tmp_path))
    result = run_inflation(config)
    assert not result["failures"]
    for row in result["rows"]:
        for key in ("err_u", "err_K", "err_P_hdiv", "err_p", "err_u_corr"):
            assert row[key] <= 1e-8
    header = read_csv(result["csv"])[0]
    assert header == INFLATION_SCHEMA


def test_inflation_csv_and_slopes(tmp_path):
    config = ExperimentConfig(experiment="inflation", order=1, lam=2.0,
                              levels=(2, 4), out_dir=str(tmp_path))
    result = run_inflation(config)
    rows = read_csv(result["csv"])
    assert len(rows) == 3
    slope_rows = read_csv(result["slopes_csv"])
    assert slope_rows[0] == ["field", "slope_fit", "slope_last"]
    assert result["slopes"]["err_K"]["fit"] > 1.0


def test_cook_zero_traction_gives_zero(tmp_path):
    config = ExperimentConfig(experiment="cook", order=1, f=0.0, levels=(2,),
                              out_dir=str(tmp_path),
                              continuation=(1.0,))
    result = run_cook(config)
    row = result["rows"][0]
    assert abs(row["ux_A"]) < 1e-10
    assert abs(row["uy_A"]) < 1e-10
    assert read_csv(result["csv"])[0] == COOK_SCHEMA


def test_cook_small_run(tmp_path):
    config = ExperimentConfig(experiment="cook", order=1, f=0.1, levels=(4,),
                              out_dir=str(tmp_path))
    result = run_cook(config)
    assert not result["failures"]
    row = result["rows"][0]
    assert row["ux_A"] < 0 < row["uy_A"]
    assert "corrected_csv" in result


def test_stretch_zero_displacement(tmp_path):
    config = ExperimentConfig(experiment="stretch", order=1, u=0.0,
                              out_dir=str(tmp_path), continuation=(1.0,))
    result = run_stretch(config)
    assert not result["failures"]
    row = result["rows"][0]
    assert row["norm_u"] < 1e-10
    assert row["J_neg_count"] == 0
    assert row["J_median"] == pytest.approx(1.0, abs=1e-10)
    assert read_csv(result["csv"])[0] == STRETCH_SCHEMA


def test_linearised_polynomial_exactness(tmp_path):
    for k in (1, 2):
        config = ExperimentConfig(experiment="linearised", order=k,
                                  levels=(2, 3), solution="polynomial",
                                  out_dir=str(tmp_path))
        result = run_linearised(config)
        for row in result["rows"]:
            for key in ("err_u", "err_K", "err_P_hdiv", "err_p", "err_u_corr"):
                assert row[key] <= 1e-9


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="unknown")
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="inflation", order=3)
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="inflation", lam=0.5)
    with pytest.raises(ValueError):
        ExperimentConfig(experiment="inflation", levels=())


def test_cli_runs_inflation(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "ddfem.cli", "inflation", "--order", "1",
         "--lambda", "1.0", "--levels", "2", "--out", str(tmp_path)],
        capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "inflation.csv").exists()


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "experiment = inflation\norder = 1\nlambda = 1.0\nlevels = 2\n"
        f"out = {tmp_path}\n")
    out = subprocess.run(
        [sys.executable, "-m", "ddfem.cli", "--config", str(cfg)],
        capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "inflation.csv").exists()


def test_asset_available():
    from ddfem.mesh import read_mesh

    mesh = read_mesh(default_stretch_mesh())
    assert mesh.n_cells > 2000
