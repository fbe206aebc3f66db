# conftest.py
import math
from pathlib import Path

import numpy as np
import pytest

from app import create_app
from datafiles import load_cavitation_csv, load_curves_csv, load_hydro_csv
from device import DuctGeometry, OWCDevice
from park import BodyHydro, ParkProblem
from turbine import TurbineSpec
from waves import MonochromaticWave, PhysicalConstants

ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = ROOT / "data"
CONFIG_DIR = ROOT / "configs"


@pytest.fixture
def const():
    return PhysicalConstants()


@pytest.fixture(scope="session")
def curves():
    return load_curves_csv(DATA_DIR / "synthetic_wells_curves.csv")


@pytest.fixture(scope="session")
def cavitation():
    return load_cavitation_csv(DATA_DIR / "synthetic_cavitation.csv")


@pytest.fixture(scope="session")
def turbine():
    return TurbineSpec(tip_radius=0.74, hub_radius=0.45, chord=0.38, blades=7, duct_radius=0.75)


@pytest.fixture(scope="session")
def device(turbine, curves, cavitation):
    """Reference constant-section device with the shipped synthetic data."""
    geometry = DuctGeometry([(-5.65, 0.75), (3.0, 0.75)], -3.65)
    hydro = load_hydro_csv(DATA_DIR / "constant_section_hydro.csv")
    return OWCDevice(geometry, turbine, curves, hydro, cavitation, PhysicalConstants())


def synthetic_body(omega=0.8, order=6, radius=1.0, draft=4.0, pto_damping=2.0e4, seed=0):
    """Small-body surrogate with mildly randomised coefficients."""
    rng = np.random.default_rng(seed)
    const = PhysicalConstants()
    return BodyHydro.surrogate(radius, draft, omega,
                               added_mass=0.6 * const.rho * radius * (1 + 0.1 * rng.random()),
                               damping=50.0 * (1 + rng.random()),
                               excitation_per_amplitude=const.rho * const.g * math.exp(-omega ** 2 / const.g * draft)
                               * np.exp(0.3j * rng.random()),
                               mass=const.rho * draft,
                               stiffness=const.rho * const.g,
                               pto_damping=pto_damping, order=order)


@pytest.fixture
def park_factory():
    """Builds a park problem of surrogate bodies at given positions."""
    def build(positions, omega=0.8, order=6, seed=0, direction=0.0):
        positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        bodies = tuple(synthetic_body(omega, order, seed=seed + i) for i in range(len(positions)))
        wave = MonochromaticWave(height=2.0, period=2 * math.pi / omega, direction=direction)
        return ParkProblem(positions, bodies, wave)
    return build


@pytest.fixture
def app():
    app = create_app({"TESTING": True, "SQLALCHEMY_DATABASE_URI": "sqlite://"})
    yield app


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


def _assignments(snippet):
    """key -> line for each `key = value` line of a TOML snippet."""
    lines = {}
    for line in snippet.strip().splitlines():
        if line.strip():
            lines[line.split("=", 1)[0].strip()] = line.strip()
    return lines


def make_config(directory, base="constant_section.toml", drop=(), **tables):
    """Copy a shipped config into `directory` with absolute data paths.

    Keyword tables are TOML text whose assignments replace or extend that
    table, e.g. MATRIX='hs = [1.0]'; `drop` names keys to remove as "TABLE.key".
    """
    text = (CONFIG_DIR / base).read_text(encoding="utf-8")
    text = text.replace('"../data/', f'"{DATA_DIR.as_posix()}/')
    pending = {name: _assignments(snippet) for name, snippet in tables.items()}
    dropped = {tuple(name.split(".", 1)) for name in drop}
    out, table = [], None

    def flush():
        out.extend(pending.pop(table, {}).values())

    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("["):
            flush()
            table = stripped.strip("[]")
        elif "=" in stripped and not stripped.startswith("#"):
            key = stripped.split("=", 1)[0].strip()
            if (table, key) in dropped:
                continue
            if key in pending.get(table, {}):
                line = pending[table].pop(key)
        out.append(line)
    flush()
    for name in list(pending):
        out.append(f"[{name}]")
        table = name
        flush()
    path = Path(directory) / base
    path.write_text("\n".join(out) + "\n", encoding="utf-8")
    return path
