# runconfig.py
"""Plumbing shared by every command.

A run is described by a TOML file with upper-case tables ([CONSTANTS],
[GEOMETRY], [TURBINE], [HYDRO], [WAVE], ...). The tables are loaded into the
application config, turned into library objects by the `build_*` helpers,
and every run is logged to the registry and to `run_meta.json`.
"""
from __future__ import annotations

import hashlib
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager, nullcontext
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np
from flask import current_app

from control import MODELS, SimulationSettings, optimize_rotation_speed
from datafiles import load_cavitation_csv, load_curves_csv, load_hydro_csv, load_scatter_csv, write_json
from device import DuctGeometry, HydroCoefficients, OWCDevice
from errors import DataFormatError, DomainError, OWCError
from extensions import db
from models import RunRecord
from turbine import TurbineSpec
from waves import PhysicalConstants, SeaState

VERSION = "1.0.0"
TABLES = ("CONSTANTS", "GEOMETRY", "TURBINE", "HYDRO", "WAVE", "SIMULATION", "CONTROL",
          "MATRIX", "SWEEP", "PARK", "OPTIMIZER")
SURROGATE_OMEGAS = np.round(np.arange(0.20, 3.0 + 1e-9, 0.05), 10)
_MISSING = object()


class ConfigError(click.ClickException):
    """Bad configuration or input data."""
    exit_code = 2


class NumericalFailure(click.ClickException):
    exit_code = 3


def parse_seeds(ctx, param, value):
    if value is None or value == "":
        return ()
    try:
        return tuple(int(s) for s in value.split(",") if s.strip())
    except ValueError:
        raise click.BadParameter("seeds must be a comma-separated list of integers") from None


def run_options(func):
    """Flags common to every run command."""
    options = [
        click.option("--config", "config_path", required=True,
                     type=click.Path(dir_okay=False, path_type=Path), help="TOML run configuration."),
        click.option("--out", "out_dir", default="out", show_default=True,
                     type=click.Path(file_okay=False, path_type=Path), help="Output directory."),
        click.option("--seed", "seeds", default="", callback=parse_seeds,
                     help="Comma-separated list of seeds."),
        click.option("--model", type=click.Choice(MODELS), default="linear", show_default=True),
        click.option("--png", is_flag=True, help="Also render PNG figures."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


@dataclass
class RunConfig:
    command: str
    path: Path
    tables: dict
    out_dir: Path
    seeds: tuple = ()
    model: str = "linear"
    png: bool = False
    config_hash: str = ""
    outputs: list = field(default_factory=list)
    record: RunRecord | None = field(default=None, repr=False)

    def table(self, name) -> dict:
        return dict(self.tables.get(name, {}))

    def value(self, table, key, default=_MISSING):
        values = self.tables.get(table, {})
        if key in values:
            return values[key]
        if default is _MISSING:
            raise DomainError(f"[{table}] {key} missing from {self.path}")
        return default

    def resolve(self, name) -> Path:
        """A path from the config, relative to the config file's directory."""
        path = Path(name)
        if not path.is_absolute():
            path = self.path.parent / path
        if not path.exists():
            raise DomainError(f"{path}: file referenced by {self.path} does not exist")
        return path

    def output(self, name) -> Path:
        path = self.out_dir / name
        self.outputs.append(name)
        return path

    def meta(self, status) -> dict:
        return {"command": self.command, "config": str(self.path), "config_hash": self.config_hash,
                "seeds": list(self.seeds), "model": self.model, "version": VERSION,
                "status": status, "outputs": sorted(self.outputs)}


def load_run_config(command, config_path, out_dir, seeds=(), model="linear", png=False) -> RunConfig:
    config_path = Path(config_path)
    try:
        raw = config_path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {config_path}: {exc.strerror}") from exc
    for name in TABLES:
        current_app.config.pop(name, None)
    try:
        current_app.config.from_file(str(config_path.resolve()), load=tomllib.load, text=False)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{config_path}: {exc}") from exc
    tables = {name: current_app.config.get(name, {}) for name in TABLES}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc.strerror}") from exc
    return RunConfig(command, config_path, tables, Path(out_dir), tuple(seeds), model, png,
                     hashlib.sha256(raw).hexdigest())


@contextmanager
def recorded_run(command, config_path, out_dir, seeds=(), model="linear", png=False):
    """Load the config, open a registry row and map library errors to exit codes."""
    run = load_run_config(command, config_path, out_dir, seeds, model, png)
    record = RunRecord(command=command, config_path=str(run.path), config_hash=run.config_hash,
                       seeds=list(run.seeds), model=model, version=VERSION, out_dir=str(run.out_dir))
    db.session.add(record)
    run.record = record
    db.session.commit()
    current_app.logger.info("%s run %d started (config %s)", command, record.id, run.path)
    try:
        yield run
    except OWCError as exc:
        _finish(run, record, "failed", str(exc))
        current_app.logger.error("%s failed: %s", command, exc)
        if isinstance(exc, (DataFormatError, DomainError)):
            raise ConfigError(str(exc)) from exc
        raise NumericalFailure(str(exc)) from exc
    except click.ClickException as exc:
        _finish(run, record, "failed", exc.format_message())
        raise
    except (KeyError, TypeError, ValueError) as exc:
        # malformed table values surface as plain Python errors from the builders
        _finish(run, record, "failed", str(exc))
        raise ConfigError(f"{run.path}: invalid configuration value: {exc}") from exc
    _finish(run, record, "ok", None)
    current_app.logger.info("%s run %d finished", command, record.id)


def _finish(run, record, status, message):
    record.status = status
    record.message = message
    record.finished_at = datetime.now(timezone.utc)
    db.session.commit()
    write_json(run.out_dir / "run_meta.json", run.meta(status))


def executor_for(workers):
    """A process pool for `workers` > 1, else a context yielding None (run in order)."""
    workers = int(workers)
    if workers < 1:
        raise DomainError("workers must be at least 1")
    return ProcessPoolExecutor(max_workers=workers) if workers > 1 else nullcontext(None)


def build_constants(run: RunConfig) -> PhysicalConstants:
    return PhysicalConstants(**run.table("CONSTANTS"))


def build_geometry(run: RunConfig) -> DuctGeometry:
    return DuctGeometry(run.value("GEOMETRY", "nodes"), run.value("GEOMETRY", "turbine_z"),
                        run.value("GEOMETRY", "blend", 0.01))


def build_turbine(run: RunConfig, const: PhysicalConstants) -> TurbineSpec:
    t = run.table("TURBINE")
    return TurbineSpec(float(t["tip_radius"]), float(t["hub_radius"]), float(t["chord"]),
                       int(t["blades"]), float(t["duct_radius"]), float(t.get("omega_min", 0.5)),
                       float(t.get("omega_max", 60.0)), const.rho)


def build_hydro(run: RunConfig, geometry: DuctGeometry, const: PhysicalConstants) -> HydroCoefficients:
    """Tabulated coefficients from [HYDRO] file, or the small-body surrogate."""
    hydro = run.table("HYDRO")
    if "file" in hydro:
        return load_hydro_csv(run.resolve(hydro["file"]))
    if not hydro.get("surrogate", False):
        raise DomainError(f"[HYDRO] needs either file or surrogate = true in {run.path}")
    omegas = np.asarray(hydro.get("omegas", SURROGATE_OMEGAS), dtype=float)
    return HydroCoefficients.small_body(geometry.max_radius, geometry.draft, omegas, const,
                                        wave_depth(run))


def build_device(run: RunConfig) -> OWCDevice:
    const = build_constants(run)
    geometry = build_geometry(run)
    turbine = build_turbine(run, const)
    curves = load_curves_csv(run.resolve(run.value("TURBINE", "curves")),
                             float(run.value("TURBINE", "fit_tolerance", 1e-3)))
    cavitation = None
    if "cavitation" in run.table("TURBINE"):
        cavitation = load_cavitation_csv(run.resolve(run.value("TURBINE", "cavitation")))
    return OWCDevice(geometry, turbine, curves, build_hydro(run, geometry, const), cavitation, const)


def wave_depth(run: RunConfig):
    depth = run.value("WAVE", "depth", None)
    return None if depth is None else float(depth)


def sea_state(run: RunConfig, table="WAVE") -> SeaState:
    return SeaState(float(run.value(table, "hs")), float(run.value(table, "te")))


def simulation_settings(run: RunConfig) -> SimulationSettings:
    s = run.table("SIMULATION")
    defaults = SimulationSettings()
    return SimulationSettings(int(s.get("periods", defaults.periods)),
                              int(s.get("samples_per_period", defaults.samples_per_period)),
                              float(s.get("rtol", defaults.rtol)), float(s.get("atol", defaults.atol)))


def load_scatter(run: RunConfig, table):
    return load_scatter_csv(run.resolve(run.value(table, "scatter")))


def turbine_speed(run: RunConfig, table, device: OWCDevice, state: SeaState, direction=0.0):
    """Configured turbine speed; "optimal" picks the linear-model optimum for `state`."""
    value = run.value(table, "omega_t", "optimal")
    if value == "optimal":
        result = optimize_rotation_speed(state, device, "linear", direction=direction,
                                         depth=wave_depth(run),
                                         rel_tol=float(run.value("CONTROL", "rel_tol", 1e-3)))
        current_app.logger.info("optimal turbine speed %.6g rad/s for Hs=%g Te=%g",
                                result.omega_t, state.hs, state.te)
        return result.omega_t
    omega_t = float(value)
    if not math.isfinite(omega_t) or omega_t <= 0:
        raise DomainError(f"[{table}] omega_t must be positive or \"optimal\"")
    return omega_t
