# datafiles.py
"""Readers and writers for every table and JSON document the commands exchange."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from device import HydroCoefficients
from errors import DataFormatError, DomainError
from layout import TRACE_COLUMNS
from park import BodyHydro, EffectiveCoupling
from turbine import CavitationTable, CharacteristicCurves
from waves import ScatterDiagram, SeaState

SCATTER_COLUMNS = ("Hs", "Te", "occurrence")
CURVE_COLUMNS = ("phi", "Ca", "Ct")
CAVITATION_COLUMNS = ("phi", "Cpmin")
HYDRO_COLUMNS = ("omega", "A", "B", "Re_pe", "Im_pe")
TIMESERIES_COLUMNS = ("t", "zeta", "zetadot", "Q", "dp", "torque", "P", "pmin")
MATRIX_COLUMNS = ("Hs", "Te", "omega_t", "P", "Phyd", "zeta_min", "zeta_max", "p_min", "CWR", "flags")
SWEEP_COLUMNS = ("r", "d", "annualP", "linear_density", "surface_density", "flags")
VERIFY_COLUMNS = ("label", "seed", "linear_power", "nonlinear_power", "ratio",
                  "linear_gain", "nonlinear_gain")
RANDOM_COLUMNS = ("seed", "total_power", "q")
MAP_COLUMNS = ("x", "y", "P_device", "P_total", "q")


def fmt(value) -> str:
    """Full double precision for numbers, plain text otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def read_table(path, columns, text_columns=()):
    """Strict CSV reader.

    Returns (rows, meta): rows are dicts keyed by column name with floats
    (text for `text_columns`), meta collects `# key: value` comment lines.
    """
    path = Path(path)
    rows, meta = [], {}
    header = None
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot open file: {exc.strerror}", path) from exc
    with handle:
        for lineno, record in enumerate(csv.reader(handle), start=1):
            if not record or not "".join(record).strip():
                continue
            if record[0].lstrip().startswith("#"):
                text = ",".join(record).lstrip()[1:].strip()
                if ":" in text:
                    key, value = text.split(":", 1)
                    meta[key.strip()] = value.strip()
                continue
            fields = [f.strip() for f in record]
            if header is None:
                if tuple(fields) != tuple(columns):
                    raise DataFormatError(f"expected header {','.join(columns)}, got {','.join(fields)}",
                                          path, lineno)
                header = fields
                continue
            if len(fields) != len(header):
                raise DataFormatError(f"expected {len(header)} fields, got {len(fields)}", path, lineno)
            row = {}
            for name, text in zip(header, fields):
                if name in text_columns:
                    row[name] = text
                    continue
                try:
                    row[name] = float(text)
                except ValueError:
                    raise DataFormatError(f"column {name}: {text!r} is not a number", path, lineno) from None
            row["_line"] = lineno
            rows.append(row)
    if header is None:
        raise DataFormatError("missing header line", path)
    return rows, meta


def write_table(path, columns, rows, comments=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        for line in comments:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row[c]) for c in columns])
    return path


def _strictly_increasing(values, name, path):
    if np.any(np.diff(values) <= 0):
        raise DataFormatError(f"{name} must be strictly increasing", path)


def load_scatter_csv(path) -> ScatterDiagram:
    rows, _ = read_table(path, SCATTER_COLUMNS)
    states = []
    for row in rows:
        try:
            states.append(SeaState(row["Hs"], row["Te"], row["occurrence"]))
        except DomainError as exc:
            raise DataFormatError(str(exc), path, row["_line"]) from exc
    try:
        return ScatterDiagram(tuple(states))
    except DomainError as exc:
        raise DataFormatError(str(exc), path) from exc


def write_scatter_csv(path, scatter: ScatterDiagram):
    return write_table(path, SCATTER_COLUMNS, ({"Hs": s.hs, "Te": s.te, "occurrence": s.occurrence or 0.0}
                                               for s in scatter.states))


def load_curves_csv(path, fit_tolerance=1e-3) -> CharacteristicCurves:
    rows, _ = read_table(path, CURVE_COLUMNS)
    phi = np.array([r["phi"] for r in rows])
    _strictly_increasing(phi, "phi", path)
    try:
        return CharacteristicCurves(phi, [r["Ca"] for r in rows], [r["Ct"] for r in rows], fit_tolerance)
    except (DomainError, DataFormatError) as exc:
        raise DataFormatError(str(exc), path) from exc


def load_cavitation_csv(path) -> CavitationTable:
    rows, _ = read_table(path, CAVITATION_COLUMNS)
    phi = np.array([r["phi"] for r in rows])
    _strictly_increasing(phi, "phi", path)
    try:
        return CavitationTable(phi, np.array([r["Cpmin"] for r in rows]))
    except DomainError as exc:
        raise DataFormatError(str(exc), path) from exc


def load_hydro_csv(path) -> HydroCoefficients:
    """Hydrodynamic table; a `# normalization:` comment is mandatory."""
    rows, meta = read_table(path, HYDRO_COLUMNS)
    if "normalization" not in meta:
        raise DataFormatError("missing '# normalization: ...' header line", path)
    height = meta.get("reference_height")
    try:
        height = float(height) if height is not None else None
    except ValueError:
        raise DataFormatError(f"reference_height {height!r} is not a number", path) from None
    omega = np.array([r["omega"] for r in rows])
    _strictly_increasing(omega, "omega", path)
    try:
        return HydroCoefficients(omega, [r["A"] for r in rows], [r["B"] for r in rows],
                                 np.array([r["Re_pe"] + 1j * r["Im_pe"] for r in rows]),
                                 meta["normalization"], height)
    except DomainError as exc:
        raise DataFormatError(str(exc), path) from exc


def write_hydro_csv(path, hydro: HydroCoefficients, comments=()):
    head = [f"normalization: {hydro.normalization}"]
    if hydro.reference_height is not None:
        head.append(f"reference_height: {fmt(hydro.reference_height)}")
    rows = ({"omega": w, "A": a, "B": b, "Re_pe": p.real, "Im_pe": p.imag}
            for w, a, b, p in zip(hydro.omega, hydro.added_mass, hydro.damping, hydro.excitation))
    return write_table(path, HYDRO_COLUMNS, rows, list(comments) + head)


def write_timeseries_csv(path, ts):
    rows = ({"t": t, "zeta": z, "zetadot": v, "Q": q, "dp": dp, "torque": tq, "P": p, "pmin": pm}
            for t, z, v, q, dp, tq, p, pm in zip(ts.t, ts.zeta, ts.zetadot, ts.flow, ts.dp,
                                                  ts.torque, ts.power, ts.pmin))
    return write_table(path, TIMESERIES_COLUMNS, rows)


def read_timeseries_csv(path) -> dict:
    """Column name -> array of a device time series table."""
    rows, _ = read_table(path, TIMESERIES_COLUMNS)
    return {c: np.array([r[c] for r in rows]) for c in TIMESERIES_COLUMNS}


def write_power_matrix_csv(path, matrix):
    return write_table(path, MATRIX_COLUMNS, matrix.rows(), [f"model: {matrix.model}"])


def read_power_matrix_csv(path):
    return read_table(path, MATRIX_COLUMNS, text_columns=("flags",))


def write_sweep_csv(path, points, variant):
    return write_table(path, SWEEP_COLUMNS, (p.as_row() for p in points), [f"variant: {variant}"])


def read_sweep_csv(path):
    return read_table(path, SWEEP_COLUMNS, text_columns=("flags",))


def write_trace_csv(path, trace):
    return write_table(path, TRACE_COLUMNS, trace.rows)


def read_trace_csv(path):
    rows, _ = read_table(path, TRACE_COLUMNS)
    return rows


def write_random_csv(path, study, isolated):
    count = len(study.layouts[0]) if study.layouts else 0
    rows = ({"seed": seed, "total_power": power,
             "q": power / (count * isolated) if count and isolated else float("nan")}
            for seed, power in zip(study.seeds, study.powers))
    return write_table(path, RANDOM_COLUMNS, rows, [f"isolated_power: {fmt(isolated)}"])


def read_random_csv(path):
    return read_table(path, RANDOM_COLUMNS)


def write_verify_csv(path, rows):
    return write_table(path, VERIFY_COLUMNS, rows)


def read_verify_csv(path):
    rows, _ = read_table(path, VERIFY_COLUMNS, text_columns=("label", "seed"))
    return rows


def write_power_map_csv(path, xs, ys, own, total, reference, comments=()):
    """One row per grid point; `reference` is the power of the same devices in isolation."""
    rows = []
    for r, y in enumerate(ys):
        for c, x in enumerate(xs):
            rows.append({"x": x, "y": y, "P_device": own[r, c], "P_total": total[r, c],
                         "q": total[r, c] / reference if reference else float("nan")})
    return write_table(path, MAP_COLUMNS, rows, comments)


def read_power_map_csv(path):
    return read_table(path, MAP_COLUMNS)


def write_json(path, document):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        json.dump(document, handle, indent=2, sort_keys=True, allow_nan=True)
        handle.write("\n")
    return path


def read_json(path):
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise DataFormatError(f"cannot open file: {exc.strerror}", path) from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(exc.msg, path, exc.lineno) from exc


def _pairs(values):
    return [[float(v.real), float(v.imag)] for v in np.asarray(values, dtype=complex).ravel()]


def _complex(pairs, path, name):
    try:
        arr = np.asarray(pairs, dtype=float)
    except (TypeError, ValueError):
        raise DataFormatError(f"{name} must hold [re, im] pairs", path) from None
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise DataFormatError(f"{name} must hold [re, im] pairs", path)
    return arr[..., 0] + 1j * arr[..., 1]


def body_to_json(body: BodyHydro) -> dict:
    size = body.size
    return {"omega": body.omega, "order": body.order, "kind": body.kind,
            "dtm": [_pairs(body.dtm[i]) for i in range(size)],
            "radiation": _pairs(body.radiation), "excitation": _pairs(body.excitation),
            "added_mass": body.added_mass, "damping": body.damping, "mass": body.mass,
            "pto_damping": body.pto_damping, "stiffness": body.stiffness,
            "radius": body.radius, "omega_t": body.omega_t}


def body_from_json(doc, path=None) -> BodyHydro:
    try:
        return BodyHydro(float(doc["omega"]), int(doc["order"]), _complex(doc["dtm"], path, "dtm"),
                         _complex(doc["radiation"], path, "radiation"),
                         _complex(doc["excitation"], path, "excitation"),
                         float(doc["added_mass"]), float(doc["damping"]), float(doc["mass"]),
                         float(doc["pto_damping"]), float(doc["stiffness"]), float(doc["radius"]),
                         doc.get("kind", "device"), doc.get("omega_t"))
    except KeyError as exc:
        raise DataFormatError(f"missing key {exc.args[0]!r}", path) from None
    except DomainError as exc:
        raise DataFormatError(str(exc), path) from exc


def load_body_json(path) -> BodyHydro:
    return body_from_json(read_json(path), path)


def save_body_json(path, body: BodyHydro):
    return write_json(path, body_to_json(body))


def load_layout_json(path):
    """Positions and kinds from a layout document.

    Accepts either a list of {x, y, kind} or a layout result with `positions`.
    """
    doc = read_json(path)
    items = doc.get("bodies", doc.get("positions")) if isinstance(doc, dict) else doc
    if not isinstance(items, list):
        raise DataFormatError("layout must be a list of bodies or carry 'positions'", path)
    positions, kinds = [], []
    for n, item in enumerate(items):
        if isinstance(item, dict):
            try:
                positions.append((float(item["x"]), float(item["y"])))
            except (KeyError, TypeError, ValueError):
                raise DataFormatError(f"body {n}: needs numeric x and y", path) from None
            kind = item.get("kind", "device")
        else:
            try:
                x, y = item
                positions.append((float(x), float(y)))
            except (TypeError, ValueError):
                raise DataFormatError(f"body {n}: expected [x, y]", path) from None
            kind = "device"
        if kind not in ("device", "pile"):
            raise DataFormatError(f"body {n}: unknown kind {kind!r}", path)
        kinds.append(kind)
    return np.array(positions, dtype=float).reshape(-1, 2), kinds, doc


def coupling_to_json(coupling: EffectiveCoupling) -> dict:
    n = len(coupling.devices)
    return {"n": n, "omega": coupling.omega, "devices": [int(i) for i in coupling.devices],
            "added_mass": np.asarray(coupling.added_mass).tolist(),
            "damping": np.asarray(coupling.damping).tolist(),
            "excitation": _pairs(coupling.excitation)}


def load_coupling_json(path) -> EffectiveCoupling:
    doc = read_json(path)
    try:
        n = int(doc["n"])
        added = np.asarray(doc["added_mass"], dtype=float)
        damping = np.asarray(doc["damping"], dtype=float)
        excitation = _complex(doc["excitation"], path, "excitation")
        omega = float(doc["omega"])
    except KeyError as exc:
        raise DataFormatError(f"missing key {exc.args[0]!r}", path) from None
    except (TypeError, ValueError) as exc:
        raise DataFormatError(str(exc), path) from None
    if added.shape != (n, n) or damping.shape != (n, n) or excitation.shape != (n,):
        raise DataFormatError(f"interaction matrices do not match the declared size {n}", path)
    if not omega > 0 or not math.isfinite(omega):
        raise DataFormatError("omega must be positive", path)
    return EffectiveCoupling(added, damping, excitation, omega,
                             np.asarray(doc.get("devices", range(n)), dtype=int))
