import math

import numpy as np
import pytest

from control import ControlResult, PowerMatrix, SweepPoint
from datafiles import (body_from_json, body_to_json, coupling_to_json, fmt, load_body_json,
                       load_coupling_json, load_curves_csv, load_hydro_csv, load_layout_json,
                       load_scatter_csv, read_json, read_power_map_csv, read_power_matrix_csv,
                       read_random_csv, read_sweep_csv, read_table, read_timeseries_csv,
                       read_trace_csv, read_verify_csv, save_body_json, write_hydro_csv, write_json,
                       write_power_map_csv, write_power_matrix_csv, write_random_csv,
                       write_scatter_csv, write_sweep_csv, write_timeseries_csv, write_trace_csv,
                       write_verify_csv)
from device import TimeSeries
from errors import DataFormatError
from layout import OptimizerTrace, RandomStudy
from park import effective_coupling

from conftest import DATA_DIR, synthetic_body


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_fmt_keeps_full_precision():
    assert float(fmt(0.1 + 0.2)) == 0.1 + 0.2
    assert fmt(True) == "1"
    assert fmt(np.int64(3)) == "3"
    assert fmt("x;y") == "x;y"


def test_shipped_scatter_diagrams_load():
    for name in ("scatter_demo.csv", "scatter_energetic.csv"):
        scatter = load_scatter_csv(DATA_DIR / name)
        assert 0 < scatter.total_occurrence() <= 1 + 1e-9


def test_non_numeric_field_reports_its_line(tmp_path):
    path = _write(tmp_path / "scatter.csv", "# demo\nHs,Te,occurrence\n1.0,6.0,0.1\n2.0,abc,0.2\n")
    with pytest.raises(DataFormatError) as info:
        load_scatter_csv(path)
    assert info.value.line == 4
    assert "scatter.csv:4" in str(info.value)


@pytest.mark.parametrize("text,line", [
    ("Hs,Te\n1,2\n", 1),
    ("Hs,Te,occurrence\n1,6,0.1,9\n", 2),
    ("Hs,Te,occurrence\n1,6,1.5\n", 2),
])
def test_malformed_tables(tmp_path, text, line):
    with pytest.raises(DataFormatError) as info:
        load_scatter_csv(_write(tmp_path / "bad.csv", text))
    assert info.value.line == line


def test_missing_header_and_missing_file(tmp_path):
    with pytest.raises(DataFormatError):
        read_table(_write(tmp_path / "empty.csv", "# only a comment\n"), ("a",))
    with pytest.raises(DataFormatError):
        read_table(tmp_path / "absent.csv", ("a",))


def test_duplicate_sea_states_are_a_format_error(tmp_path):
    path = _write(tmp_path / "dup.csv", "Hs,Te,occurrence\n1,6,0.1\n1,6,0.2\n")
    with pytest.raises(DataFormatError):
        load_scatter_csv(path)


def test_scatter_written_and_read_back(tmp_path):
    scatter = load_scatter_csv(DATA_DIR / "scatter_demo.csv")
    again = load_scatter_csv(write_scatter_csv(tmp_path / "copy.csv", scatter))
    assert again == scatter


def test_hydro_table_needs_normalization(tmp_path):
    path = _write(tmp_path / "hydro.csv", "omega,A,B,Re_pe,Im_pe\n0.5,1,1,1,0\n1.0,1,1,1,0\n")
    with pytest.raises(DataFormatError):
        load_hydro_csv(path)


def test_hydro_table_written_and_read_back(tmp_path, device):
    path = write_hydro_csv(tmp_path / "hydro.csv", device.hydro)
    again = load_hydro_csv(path)
    np.testing.assert_array_equal(again.omega, device.hydro.omega)
    np.testing.assert_array_equal(again.excitation, device.hydro.excitation)
    assert again.normalization == device.hydro.normalization


def test_curves_must_increase(tmp_path):
    path = _write(tmp_path / "curves.csv", "phi,Ca,Ct\n0.0,0,0\n0.2,1,0.1\n0.1,2,0.05\n")
    with pytest.raises(DataFormatError):
        load_curves_csv(path)


def test_body_json(tmp_path):
    body = synthetic_body(order=3, seed=2)
    again = load_body_json(save_body_json(tmp_path / "body.json", body))
    np.testing.assert_array_equal(again.dtm, body.dtm)
    np.testing.assert_array_equal(again.excitation, body.excitation)
    assert again.impedance() == body.impedance()
    doc = body_to_json(body)
    del doc["mass"]
    with pytest.raises(DataFormatError, match="mass"):
        body_from_json(doc)
    doc = body_to_json(body)
    doc["radiation"] = [1.0, 2.0, 3.0]
    with pytest.raises(DataFormatError):
        body_from_json(doc)


def test_layout_documents(tmp_path):
    listed = write_json(tmp_path / "bodies.json", [{"x": 1, "y": 2}, {"x": 3, "y": 4, "kind": "pile"}])
    positions, kinds, _ = load_layout_json(listed)
    np.testing.assert_array_equal(positions, [[1.0, 2.0], [3.0, 4.0]])
    assert kinds == ["device", "pile"]

    result = write_json(tmp_path / "layout_best.json", {"label": "best", "positions": [[0.5, 1.5]]})
    positions, kinds, doc = load_layout_json(result)
    assert kinds == ["device"] and doc["label"] == "best"

    with pytest.raises(DataFormatError):
        load_layout_json(write_json(tmp_path / "bad.json", [{"x": 1, "y": 2, "kind": "buoy"}]))
    with pytest.raises(DataFormatError):
        load_layout_json(write_json(tmp_path / "scalar.json", {"positions": 3}))


def test_broken_json_reports_its_line(tmp_path):
    path = _write(tmp_path / "broken.json", '{\n  "a": 1,\n  "b": \n}\n')
    with pytest.raises(DataFormatError) as info:
        read_json(path)
    assert info.value.line == 4


def test_coupling_json(tmp_path, park_factory):
    coupling = effective_coupling(park_factory([(0.0, 0.0), (9.0, 4.0)]))
    path = write_json(tmp_path / "coupling.json", coupling_to_json(coupling))
    again = load_coupling_json(path)
    np.testing.assert_array_equal(again.added_mass, coupling.added_mass)
    np.testing.assert_array_equal(again.excitation, coupling.excitation)
    assert again.omega == coupling.omega
    doc = coupling_to_json(coupling)
    doc["n"] = 3
    with pytest.raises(DataFormatError):
        load_coupling_json(write_json(tmp_path / "wrong.json", doc))


def test_result_tables(tmp_path):
    study = RandomStudy([np.zeros((2, 2)), np.ones((2, 2))], np.array([300.0, 500.0]), [7, 8])
    rows, meta = read_random_csv(write_random_csv(tmp_path / "random.csv", study, 125.0))
    assert [r["seed"] for r in rows] == [7.0, 8.0]
    assert rows[1]["q"] == pytest.approx(2.0)
    assert float(meta["isolated_power"]) == 125.0

    verify = [{"label": "best", "seed": 3, "linear_power": 10.0, "nonlinear_power": 9.0,
               "ratio": 0.9, "linear_gain": 0.0, "nonlinear_gain": 0.0}]
    back = read_verify_csv(write_verify_csv(tmp_path / "verify.csv", verify))
    assert back[0]["label"] == "best" and back[0]["seed"] == "3"
    assert back[0]["ratio"] == 0.9

    own = np.array([[1.0, np.nan]])
    rows, _ = read_power_map_csv(write_power_map_csv(tmp_path / "map.csv", [0.0, 1.0], [2.0], own,
                                                     2 * own, 4.0))
    assert rows[0]["q"] == 0.5
    assert math.isnan(rows[1]["P_device"])


def _same_rows(rows, expected, text=("flags",)):
    assert len(rows) == len(expected)
    for row, want in zip(rows, expected):
        for key, value in want.items():
            if key in text:
                assert row[key] == value
            elif isinstance(value, float) and math.isnan(value):
                assert math.isnan(row[key])
            else:
                assert row[key] == float(value)


def test_timeseries_written_and_read_back(tmp_path):
    rng = np.random.default_rng(8)
    n = 33
    columns = rng.normal(size=(8, n)) * [[1.0], [0.5], [2.0], [3.0], [1e4], [1e3], [1e5], [1e5]]
    columns[7, :3] = np.nan
    t = np.linspace(0.0, 16.0, n)
    ts = TimeSeries(t, *columns, period=8.0, window_start=8.0)
    back = read_timeseries_csv(write_timeseries_csv(tmp_path / "ts.csv", ts))
    for name, values in zip(("t", "zeta", "zetadot", "Q", "dp", "torque", "P", "pmin"),
                            (t, ts.zeta, ts.zetadot, ts.flow, ts.dp, ts.torque, ts.power, ts.pmin)):
        np.testing.assert_array_equal(back[name], values)


def test_power_matrix_written_and_read_back(tmp_path):
    cells = {(0, 0): ControlResult(1.0, 6.0, 11.3, 1234.5678901234, 1500.1, -0.7, 0.71, 98000.25,
                                   0.1 / 3, ("validity", "c3-mismatch")),
             (0, 1): ControlResult(1.0, 8.0, float("nan"), float("nan"), float("nan"), float("nan"),
                                   float("nan"), float("nan"), float("nan"), ("error:DomainError",))}
    matrix = PowerMatrix(np.array([1.0]), np.array([6.0, 8.0]), "linear", cells)
    rows, meta = read_power_matrix_csv(write_power_matrix_csv(tmp_path / "pm.csv", matrix))
    assert meta["model"] == "linear"
    _same_rows(rows, list(matrix.rows()))
    assert rows[0]["flags"] == "validity;c3-mismatch"


def test_sweep_written_and_read_back(tmp_path):
    points = [SweepPoint(0.5, 3.0, 2345.6789, ()), SweepPoint(1.0 / 3, 7.25, 0.1 + 0.2, ("c1",))]
    rows, meta = read_sweep_csv(write_sweep_csv(tmp_path / "sweep.csv", points, "constrained"))
    assert meta["variant"] == "constrained"
    _same_rows(rows, [p.as_row() for p in points])


def test_trace_written_and_read_back(tmp_path):
    trace = OptimizerTrace()
    for k, accepted in enumerate((True, False, True)):
        trace.record(np.zeros((2, 2)), iteration=k, cost=-1e4 / (k + 3), grad_norm=0.1 * (k + 1),
                     backtracks=k, overlap_shrinks=0, max_d=1.0 / (k + 7), step_norm=math.pi * k,
                     accepted=accepted)
    rows = read_trace_csv(write_trace_csv(tmp_path / "trace.csv", trace))
    _same_rows(rows, trace.rows)
