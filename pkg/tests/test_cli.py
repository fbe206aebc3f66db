import json
import math

import pytest

from datafiles import read_power_map_csv, read_table, read_verify_csv
from models import LayoutRecord, RunRecord

from conftest import make_config

QUICK_SIM = """
omega_t = 12.0
periods = 6
samples_per_period = 64
"""
SMALL_PARK = """
devices = 3
edge = 30.0
piles = false
random_layouts = 2
omega_t = 12.0
verify_periods = 4
verify_average = 2
map_extent = 10.0
map_points = 3
"""


def _run(runner, *args):
    return runner.invoke(args=[str(a) for a in args])


def _meta(out):
    return json.loads((out / "run_meta.json").read_text(encoding="utf-8"))


def test_device_sim_writes_series_summary_and_meta(runner, tmp_path):
    config = make_config(tmp_path, SIMULATION=QUICK_SIM)
    out = tmp_path / "sim"
    result = _run(runner, "device-sim", "--config", config, "--out", out, "--png")
    assert result.exit_code == 0, result.output
    assert "mean power" in result.output
    rows, _ = read_table(out / "timeseries.csv",
                         ("t", "zeta", "zetadot", "Q", "dp", "torque", "P", "pmin"))
    assert len(rows) == 6 * 64 + 1
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["omega_t"] == 12.0
    assert summary["mean_power"] > 0
    assert (out / "timeseries.png").exists()
    meta = _meta(out)
    assert meta["status"] == "ok"
    assert meta["model"] == "nonlinear"
    assert set(meta["outputs"]) == {"timeseries.csv", "summary.json", "timeseries.png"}


def test_run_meta_is_deterministic(runner, tmp_path):
    config = make_config(tmp_path, SIMULATION=QUICK_SIM)
    first, second = tmp_path / "a", tmp_path / "b"
    assert _run(runner, "device-sim", "--config", config, "--out", first).exit_code == 0
    assert _run(runner, "device-sim", "--config", config, "--out", second).exit_code == 0
    assert (first / "timeseries.csv").read_bytes() == (second / "timeseries.csv").read_bytes()
    assert _meta(first) == _meta(second)


def test_power_matrix_single_cell(runner, tmp_path):
    config = make_config(tmp_path, MATRIX="hs = [3.0]\nte = [8.15]", drop=["MATRIX.scatter"])
    out = tmp_path / "pm"
    result = _run(runner, "power-matrix", "--config", config, "--out", out)
    assert result.exit_code == 0, result.output
    rows, meta = read_table(out / "power_matrix_linear.csv",
                            ("Hs", "Te", "omega_t", "P", "Phyd", "zeta_min", "zeta_max", "p_min",
                             "CWR", "flags"), text_columns=("flags",))
    assert meta["model"] == "linear"
    assert len(rows) == 1 and rows[0]["P"] > 0
    summary = json.loads((out / "power_matrix_summary.json").read_text(encoding="utf-8"))
    assert summary["linear"]["cells"] == 1
    heatmap = json.loads((out / "power_matrix_linear_heatmap.json").read_text(encoding="utf-8"))
    assert heatmap["power"] == [[rows[0]["P"]]]


def test_power_matrix_with_scatter_reports_annual_power(runner, tmp_path):
    config = make_config(tmp_path)
    out = tmp_path / "pm"
    result = _run(runner, "power-matrix", "--config", config, "--out", out)
    assert result.exit_code == 0, result.output
    summary = json.loads((out / "power_matrix_summary.json").read_text(encoding="utf-8"))
    assert summary["linear"]["cells"] == 9
    assert summary["linear"]["annual_power"] > 0


def test_unknown_matrix_model_is_a_config_error(runner, tmp_path):
    config = make_config(tmp_path, MATRIX='models = ["linear", "spectral"]')
    result = _run(runner, "power-matrix", "--config", config, "--out", tmp_path / "pm")
    assert result.exit_code == 2
    assert _meta(tmp_path / "pm")["status"] == "failed"


def test_dim_sweep_single_point(runner, tmp_path):
    config = make_config(tmp_path, SWEEP="radii = [0.75]\ndrafts = [5.65]")
    out = tmp_path / "sweep"
    result = _run(runner, "dim-sweep", "--config", config, "--out", out)
    assert result.exit_code == 0, result.output
    for variant in ("unconstrained", "constrained"):
        rows, meta = read_table(out / f"sweep_{variant}.csv",
                                ("r", "d", "annualP", "linear_density", "surface_density", "flags"),
                                text_columns=("flags",))
        assert meta["variant"] == variant
        assert len(rows) == 1 and rows[0]["annualP"] > 0
    assert "best unconstrained r=0.75" in result.output


def test_dim_sweep_rejects_nonlinear_model(runner, tmp_path):
    config = make_config(tmp_path)
    result = _run(runner, "dim-sweep", "--config", config, "--out", tmp_path / "s", "--model", "nonlinear")
    assert result.exit_code == 2


def test_park_opt_is_reproducible(app, runner, tmp_path):
    config = make_config(tmp_path, PARK=SMALL_PARK, OPTIMIZER="maxit = 3")
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        result = _run(runner, "park-opt", "--config", config, "--out", out, "--seed", "0,1")
        assert result.exit_code == 0, result.output
    for name in ("trace.csv", "random_layouts.csv", "layout_optimized.json", "histograms.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    optimized = json.loads((first / "layout_optimized.json").read_text(encoding="utf-8"))
    best = json.loads((first / "layout_best.json").read_text(encoding="utf-8"))
    assert len(optimized["positions"]) == 3
    assert optimized["total_power"] >= best["total_power"]
    assert _meta(first)["seeds"] == [0, 1]
    with app.app_context():
        assert LayoutRecord.query.filter_by(label="optimized").count() == 2
        assert RunRecord.query.filter_by(command="park-opt", status="ok").count() == 2


def test_park_verify_and_map_after_optimisation(runner, tmp_path):
    config = make_config(tmp_path, PARK=SMALL_PARK, OPTIMIZER="maxit = 2")
    out = tmp_path / "park"
    assert _run(runner, "park-opt", "--config", config, "--out", out, "--seed", "4").exit_code == 0
    result = _run(runner, "park-verify", "--config", config, "--out", out)
    assert result.exit_code == 0, result.output
    rows = read_verify_csv(out / "verify.csv")
    assert sorted(r["label"] for r in rows) == ["best", "optimized", "worst"]
    best = next(r for r in rows if r["label"] == "best")
    assert best["linear_gain"] == 0.0
    assert all(math.isfinite(r["nonlinear_power"]) for r in rows)

    result = _run(runner, "park-map", "--config", config, "--out", out)
    assert result.exit_code == 0, result.output
    cells, meta = read_power_map_csv(out / "power_map_device.csv")
    assert len(cells) == 9
    assert "isolated_power" in meta


def test_park_runs_from_stored_body_and_coupling(runner, tmp_path):
    first = tmp_path / "first"
    config = make_config(tmp_path, PARK=SMALL_PARK, OPTIMIZER="maxit = 2")
    assert _run(runner, "park-opt", "--config", config, "--out", first, "--seed", "3").exit_code == 0
    assert _run(runner, "park-verify", "--config", config, "--out", first).exit_code == 0
    assert (first / "body.json").exists()

    again = tmp_path / "again"
    again.mkdir()
    stored = make_config(again, PARK=SMALL_PARK + f'body = "{(first / "body.json").as_posix()}"\n',
                         OPTIMIZER="maxit = 2")
    second = tmp_path / "second"
    result = _run(runner, "park-opt", "--config", stored, "--out", second, "--seed", "3")
    assert result.exit_code == 0, result.output
    for name in ("random_layouts.csv", "layout_optimized.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()

    coupled = tmp_path / "coupled"
    coupled.mkdir()
    coupling = (first / "coupling_optimized.json").as_posix()
    verify = make_config(coupled, PARK=SMALL_PARK + f'layouts = []\ncoupling = "{coupling}"\n')
    out = tmp_path / "verify"
    result = _run(runner, "park-verify", "--config", verify, "--out", out)
    assert result.exit_code == 0, result.output
    (row,) = read_verify_csv(out / "verify.csv")
    (layout_row,) = [r for r in read_verify_csv(first / "verify.csv") if r["label"] == "optimized"]
    assert row["label"] == "coupling_optimized"
    assert row["linear_power"] == pytest.approx(layout_row["linear_power"], rel=1e-9)
    assert row["nonlinear_power"] == pytest.approx(layout_row["nonlinear_power"], rel=1e-9)


def test_body_file_at_another_frequency_is_rejected(runner, tmp_path):
    out = tmp_path / "park"
    config = make_config(tmp_path, PARK=SMALL_PARK, OPTIMIZER="maxit = 1")
    assert _run(runner, "park-opt", "--config", config, "--out", out, "--seed", "0").exit_code == 0
    other = tmp_path / "other"
    other.mkdir()
    shifted = make_config(other, PARK=SMALL_PARK + f'te = 6.0\nbody = "{(out / "body.json").as_posix()}"\n')
    result = _run(runner, "park-opt", "--config", shifted, "--out", tmp_path / "o", "--seed", "0")
    assert result.exit_code == 2
    assert "omega" in result.output


@pytest.mark.slow
def test_desk_park_optimisation_holds_up_in_the_time_domain(runner, tmp_path):
    config = make_config(tmp_path, PARK="verify_periods = 8\nverify_average = 4",
                         OPTIMIZER="maxit = 40")
    out = tmp_path / "desk"
    result = _run(runner, "park-opt", "--config", config, "--out", out, "--seed", "0")
    assert result.exit_code == 0, result.output
    assert len(json.loads((out / "layout_optimized.json").read_text(encoding="utf-8"))["positions"]) == 20
    result = _run(runner, "park-verify", "--config", config, "--out", out)
    assert result.exit_code == 0, result.output
    rows = {r["label"]: r for r in read_verify_csv(out / "verify.csv")}
    assert set(rows) == {"best", "optimized", "worst"}
    for row in rows.values():
        assert 0.8 <= row["ratio"] <= 1.2
    optimized = rows["optimized"]
    assert optimized["linear_gain"] > 0
    assert math.copysign(1.0, optimized["nonlinear_gain"]) == math.copysign(1.0, optimized["linear_gain"])


def test_park_verify_without_layouts(runner, tmp_path):
    config = make_config(tmp_path, PARK="layouts = []")
    out = tmp_path / "verify"
    result = _run(runner, "park-verify", "--config", config, "--out", out)
    assert result.exit_code == 0, result.output
    assert "no layouts to verify" in result.output
    assert (out / "verify.csv").read_text(encoding="utf-8").strip() == \
        "label,seed,linear_power,nonlinear_power,ratio,linear_gain,nonlinear_gain"


def test_infeasible_park_is_a_numerical_failure(runner, tmp_path):
    config = make_config(tmp_path, PARK=SMALL_PARK + "devices = 2000\n")
    out = tmp_path / "park"
    result = _run(runner, "park-opt", "--config", config, "--out", out, "--seed", "0")
    assert result.exit_code == 3
    meta = _meta(out)
    assert meta["status"] == "failed"


def test_missing_config_file(runner, tmp_path):
    result = _run(runner, "device-sim", "--config", tmp_path / "nope.toml", "--out", tmp_path / "o")
    assert result.exit_code == 2


def test_invalid_toml(runner, tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("[GEOMETRY\nnodes = 1\n", encoding="utf-8")
    result = _run(runner, "device-sim", "--config", path, "--out", tmp_path / "o")
    assert result.exit_code == 2


def test_malformed_data_file_is_a_config_error(runner, tmp_path):
    bad = tmp_path / "hydro.csv"
    bad.write_text("# normalization: per-unit-amplitude\nomega,A,B,Re_pe,Im_pe\n0.5,1,x,1,0\n",
                   encoding="utf-8")
    config = make_config(tmp_path, HYDRO=f'file = "{bad.as_posix()}"', SIMULATION=QUICK_SIM)
    result = _run(runner, "device-sim", "--config", config, "--out", tmp_path / "o")
    assert result.exit_code == 2
    assert "hydro.csv:3" in result.output


@pytest.mark.parametrize("geometry,drop", [
    ('turbine_z = "deep"', ()),
    ("turbine_z = 1.0", ()),
    ("", ["WAVE.hs"]),
])
def test_bad_configuration_values(runner, tmp_path, geometry, drop):
    config = make_config(tmp_path, drop=drop, SIMULATION=QUICK_SIM, GEOMETRY=geometry)
    result = _run(runner, "device-sim", "--config", config, "--out", tmp_path / "o")
    assert result.exit_code == 2


def test_runs_lists_recorded_commands(runner, tmp_path):
    assert "no runs recorded" in _run(runner, "runs").output
    config = make_config(tmp_path, SIMULATION=QUICK_SIM)
    _run(runner, "device-sim", "--config", config, "--out", tmp_path / "o")
    _run(runner, "dim-sweep", "--config", config, "--out", tmp_path / "s", "--model", "nonlinear")
    result = _run(runner, "runs")
    assert result.exit_code == 0
    assert "device-sim" in result.output and "dim-sweep" in result.output
    only = _run(runner, "runs", "--command", "dim-sweep").output
    assert "failed" in only and "device-sim" not in only
