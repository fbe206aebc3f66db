# control.py
"""Turbine speed control per sea state, power matrices and the dimension study."""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar, newton

from device import (DuctGeometry, HydroCoefficients, OWCDevice, hydraulic_power,
                    linear_frequency_solve, simulate_device)
from errors import DomainError, OWCError, SolverError
from turbine import mean_blade_pressure, min_pressure_bound, omega_t_for_lambda
from waves import (MonochromaticWave, PhysicalConstants, ScatterDiagram, SeaState,
                   dispersion_wavenumber, equivalent_monochromatic, seastate_flux)

log = logging.getLogger(__name__)

MODELS = ("linear", "nonlinear")


@dataclass(frozen=True)
class SimulationSettings:
    """Time-domain settings used when the nonlinear model is selected."""
    periods: int = 12
    samples_per_period: int = 128
    rtol: float = 1e-8
    atol: float = 1e-10


@dataclass(frozen=True)
class ControlResult:
    hs: float
    te: float
    omega_t: float
    power: float
    hydraulic_power: float
    zeta_min: float
    zeta_max: float
    p_min: float
    cwr: float
    flags: tuple = ()
    model: str = "linear"

    def as_row(self) -> dict:
        return {"Hs": self.hs, "Te": self.te, "omega_t": self.omega_t, "P": self.power,
                "Phyd": self.hydraulic_power, "zeta_min": self.zeta_min,
                "zeta_max": self.zeta_max, "p_min": self.p_min, "CWR": self.cwr,
                "flags": ";".join(self.flags)}


def capture_width_ratio(power, device: OWCDevice, flux) -> float:
    if flux <= 0:
        return float("nan")
    return power / (2.0 * device.geometry.max_radius * flux)


def lambda_max_hydraulic(omega, device: OWCDevice) -> float:
    """Turbine damping maximising mean hydraulic power at `omega`."""
    added, radiation, _ = device.hydro.at(omega)
    bracket = -omega ** 2 * (device.column_mass + added) + device.stiffness
    return math.sqrt(radiation ** 2 + (bracket / omega) ** 2) / device.s0


def hydraulic_optimum_speed(omega, device: OWCDevice) -> float:
    return omega_t_for_lambda(lambda_max_hydraulic(omega, device), device.turbine, device.curves)


def evaluate_control(device: OWCDevice, state: SeaState, omega_t: float, model: str = "linear",
                     sim: SimulationSettings | None = None, direction=0.0, depth=None) -> ControlResult:
    """Power, levels, pressure and flags for a given turbine speed."""
    if model not in MODELS:
        raise DomainError(f"unknown model {model!r}")
    wave = equivalent_monochromatic(state, direction, depth)
    omega = wave.omega
    const = device.const
    geom = device.geometry
    flux = seastate_flux(state, const)
    flags = []
    if model == "linear":
        lam = device.Lambda(omega_t)
        zeta = linear_frequency_solve(device, lam, omega, device.hydro.excitation_for(wave))
        series = device.series(omega_t)
        power = float(series.power(omega, zeta))
        p_hyd = hydraulic_power(zeta, omega, lam, device.s0)
        amp = abs(zeta)
        z_min, z_max = -amp, amp
        if device.cavitation is not None:
            p_min = min_pressure_bound(amp, omega, omega_t, geom.turbine_z, device.turbine,
                                       device.cavitation, const, device.s0)
        else:
            p_min = float("nan")
        if not series.within_model(omega, zeta):
            flags.append("validity")
    else:
        sim = sim or SimulationSettings()
        ts = simulate_device(device, wave, omega_t, periods=sim.periods,
                             samples_per_period=sim.samples_per_period, rtol=sim.rtol, atol=sim.atol)
        power = ts.mean_power()
        p_hyd = ts.mean_hydraulic_power()
        z_min, z_max = ts.level_range()
        p_min = ts.min_pressure()
        if ts.flags.get("clamped"):
            flags.append("validity")
    if z_min < geom.turbine_z:
        flags.append("uncovered")
    if z_max > geom.z_top:
        flags.append("overflow")
    if p_min < const.p_v:
        flags.append("cavitation")
    return ControlResult(state.hs, state.te, omega_t, power, p_hyd, z_min, z_max, p_min,
                         capture_width_ratio(power, device, flux), tuple(flags), model)


def _bounded_maximum(objective, lo, hi, xatol):
    """Bounded Brent minimisation of `objective` plus an endpoint check."""
    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                          options={"xatol": xatol, "maxiter": 200})
    if not res.success:
        raise SolverError(f"bounded minimisation failed: {res.message}")
    best_x, best_f = float(res.x), float(res.fun)
    for x in (lo, hi):
        f = objective(x)
        if f < best_f:
            best_x, best_f = x, f
    return best_x, best_f


def optimize_rotation_speed(state: SeaState, device: OWCDevice, model: str = "linear",
                            sim: SimulationSettings | None = None, direction=0.0,
                            depth=None, rel_tol=1e-3) -> ControlResult:
    """Turbine speed maximising mean shaft power in the equivalent regular wave.

    The search starts on [w_h/2, 2 w_h] around the hydraulic-optimum speed w_h
    and is widened once to the turbine bounds if the optimum sits on an
    inner edge.
    """
    turbine = device.turbine
    omega = equivalent_monochromatic(state).omega
    omega_h = hydraulic_optimum_speed(omega, device)
    centre = min(max(omega_h, turbine.omega_min), turbine.omega_max)
    lo = max(turbine.omega_min, 0.5 * centre)
    hi = min(turbine.omega_max, 2.0 * centre)
    xatol = rel_tol * centre

    @functools.lru_cache(maxsize=None)
    def objective(omega_t):
        return -evaluate_control(device, state, float(omega_t), model, sim, direction, depth).power

    best, _ = _bounded_maximum(objective, lo, hi, xatol)
    inner_lo = lo > turbine.omega_min and best <= lo + 2 * xatol
    inner_hi = hi < turbine.omega_max and best >= hi - 2 * xatol
    if inner_lo or inner_hi:
        log.info("optimum on the search edge (%.4g); widening to turbine bounds", best)
        best, _ = _bounded_maximum(objective, turbine.omega_min, turbine.omega_max, xatol)
    result = evaluate_control(device, state, best, model, sim, direction, depth)
    log.info("Hs=%.3g Te=%.3g %s: omega_t=%.4g P=%.6g W (hydraulic optimum speed %.4g)",
             state.hs, state.te, model, best, result.power, omega_h)
    return result


@dataclass
class PowerMatrix:
    hs: np.ndarray
    te: np.ndarray
    model: str
    cells: dict = field(default_factory=dict)

    def power_grid(self) -> np.ndarray:
        grid = np.full((len(self.hs), len(self.te)), np.nan)
        for (i, j), cell in self.cells.items():
            grid[i, j] = cell.power
        return grid

    def rows(self):
        for i in range(len(self.hs)):
            for j in range(len(self.te)):
                yield self.cells[(i, j)].as_row()

    def index_of(self, hs, te):
        i = np.flatnonzero(np.isclose(self.hs, hs, rtol=1e-12, atol=0.0))
        j = np.flatnonzero(np.isclose(self.te, te, rtol=1e-12, atol=0.0))
        if not len(i) or not len(j):
            raise DomainError(f"sea state Hs={hs} Te={te} not on the power matrix axes")
        return int(i[0]), int(j[0])


def _matrix_cell(device, model, sim, state):
    try:
        return optimize_rotation_speed(state, device, model, sim)
    except OWCError as exc:
        log.warning("power matrix cell Hs=%g Te=%g failed: %s", state.hs, state.te, exc)
        nan = float("nan")
        return ControlResult(state.hs, state.te, nan, nan, nan, nan, nan, nan, nan,
                             (f"error:{type(exc).__name__}",), model)


def build_power_matrix(hs_axis, te_axis, device: OWCDevice, model: str = "linear",
                       sim: SimulationSettings | None = None, executor=None) -> PowerMatrix:
    """Optimised control on every (Hs, Te) cell; failed cells are flagged.

    `executor` is any concurrent.futures executor; cells run in order when None.
    """
    hs_axis = np.asarray(hs_axis, dtype=float)
    te_axis = np.asarray(te_axis, dtype=float)
    if hs_axis.ndim != 1 or te_axis.ndim != 1 or not hs_axis.size or not te_axis.size:
        raise DomainError("power matrix axes must be non-empty vectors")
    if np.any(np.diff(hs_axis) <= 0) or np.any(np.diff(te_axis) <= 0):
        raise DomainError("power matrix axes must be strictly increasing")
    keys = [(i, j) for i in range(hs_axis.size) for j in range(te_axis.size)]
    states = [SeaState(float(hs_axis[i]), float(te_axis[j])) for i, j in keys]
    work = functools.partial(_matrix_cell, device, model, sim)
    results = list(executor.map(work, states) if executor is not None else map(work, states))
    return PowerMatrix(hs_axis, te_axis, model, dict(zip(keys, results)))


def annual_power(matrix: PowerMatrix, scatter: ScatterDiagram) -> float:
    """Occurrence-weighted mean power over the scatter diagram."""
    total = 0.0
    for s in scatter.states:
        occ = s.occurrence or 0.0
        cell = matrix.cells[matrix.index_of(s.hs, s.te)]
        if occ == 0.0:
            continue
        if not math.isfinite(cell.power):
            log.warning("cell Hs=%g Te=%g has no power value; skipped", s.hs, s.te)
            continue
        total += cell.power * occ
    return total


@dataclass(frozen=True)
class StallSolution:
    omega_t: float
    amplitude: float
    residual: float
    method: str
    within_bounds: bool


def _stall_terms(device: OWCDevice, wave: MonochromaticWave):
    omega = wave.omega
    added, radiation, _ = device.hydro.at(omega)
    stiff = -omega ** 2 * (added + device.column_mass) + device.stiffness
    lam_per_speed = device.Lambda(1.0)
    amp_per_speed = (device.curves.phi_opt * device.s_t * device.turbine.tip_radius
                     / (omega * device.s0))
    pe2 = abs(device.hydro.excitation_for(wave)) ** 2
    return omega, radiation, stiff, lam_per_speed, amp_per_speed, pe2


def stall_speed_newton(state: SeaState, device: OWCDevice, direction=0.0, depth=None) -> StallSolution:
    """Turbine speed at which the flow-coefficient amplitude equals phi_opt.

    Solves |den(w_t)|^2 |zeta(w_t)|^2 - |p_e|^2 = 0 with zeta(w_t) the
    amplitude implied by incipient stall; Newton from the hydraulic-optimum
    speed, bisection when Newton fails.
    """
    wave = equivalent_monochromatic(state, direction, depth)
    omega, radiation, stiff, lam1, a1, pe2 = _stall_terms(device, wave)
    turbine = device.turbine
    if pe2 == 0.0:
        return StallSolution(turbine.omega_min, 0.0, 0.0, "calm", True)
    s0 = device.s0

    def f(x):
        damping = radiation + s0 * lam1 * x
        return (stiff ** 2 + omega ** 2 * damping ** 2) * (a1 * x) ** 2 - pe2

    def fprime(x):
        damping = radiation + s0 * lam1 * x
        den2 = stiff ** 2 + omega ** 2 * damping ** 2
        return 2.0 * omega ** 2 * damping * s0 * lam1 * (a1 * x) ** 2 + den2 * 2.0 * a1 * a1 * x

    x0 = hydraulic_optimum_speed(omega, device)
    tol = 1e-10 * pe2
    method = "newton"
    try:
        root = newton(f, x0, fprime=fprime, tol=1e-14 * x0, maxiter=100)
        if not root > 0 or abs(f(root)) > tol:
            raise RuntimeError("newton residual too large")
    except (RuntimeError, OverflowError, ZeroDivisionError) as exc:
        log.debug("stall speed newton failed (%s); bisecting", exc)
        method = "bisection"
        lo, hi = 0.0, max(x0, 1e-6)
        while f(hi) <= 0:
            hi *= 2.0
            if hi > 1e8:
                raise SolverError("no sign change for the incipient-stall equation")
        root = brentq(f, lo, hi, xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=500)
    residual = f(root)
    if abs(residual) > tol:
        raise SolverError(f"incipient-stall equation residual {residual:.3g} above {tol:.3g}")
    within = turbine.omega_min <= root <= turbine.omega_max
    return StallSolution(float(root), a1 * root, float(residual), method, within)


@dataclass(frozen=True)
class ConstraintScales:
    """Natural units in which the tolerance applies (m, Pa, -)."""
    level: float = 1.0
    pressure: float = 1025.0 * 9.81
    flow: float = 1.0


def printed_cavitation_c3(amplitude, omega, omega_t, z_t, device: OWCDevice) -> float:
    """Interior cavitation constraint evaluated in its textbook closed form.

    Returns 0 when the stationary-point condition holds and the closed-form
    expression otherwise; NaN when its square root is undefined.
    """
    const = device.const
    c_tilde = device.cavitation.c_tilde
    s, s_t, g, rho = device.s0, device.s_t, const.g, const.rho
    a = abs(amplitude)
    if a == 0:
        return 0.0
    if c_tilde <= -g * s_t ** 2 / (s ** 2 * omega ** 2 * a):
        return 0.0
    p_bar = mean_blade_pressure(omega_t, z_t, device.turbine, c_tilde, const)
    arg = (omega ** 2 * a * s ** 2 * c_tilde) ** 2 - (g * s_t ** 2) ** 2
    root = math.sqrt(arg) if arg >= 0 else float("nan")
    return (-p_bar - rho * g ** 2 * s_t ** 2 / (omega ** 2 * s ** 2 * c_tilde)
            - 0.5 * rho * a / s_t ** 2 * root + const.p_v)


def interior_cavitation_c3(amplitude, omega, omega_t, z_t, device: OWCDevice) -> float:
    """p_v minus the interior cycle minimum of the pressure bound, 0 if none."""
    const = device.const
    a = abs(amplitude)
    c_tilde = device.cavitation.c_tilde
    v_amp = omega * a * device.s0 / device.s_t
    if a == 0 or not c_tilde <= -const.g * a / v_amp ** 2:
        return 0.0
    p_bar = mean_blade_pressure(omega_t, z_t, device.turbine, c_tilde, const)
    interior = (p_bar + 0.5 * const.rho * v_amp ** 2 * c_tilde
                + 0.5 * const.rho * (const.g * a) ** 2 / (v_amp ** 2 * c_tilde))
    return const.p_v - interior


def constraint_values(omega_t, device: OWCDevice, wave: MonochromaticWave,
                      scales: ConstraintScales = ConstraintScales()):
    """Scaled constraint functions c1..c4 (feasible when <= 0) and diagnostics."""
    const = device.const
    omega = wave.omega
    z_t = device.geometry.turbine_z
    zeta = linear_frequency_solve(device, device.Lambda(omega_t), omega,
                                  device.hydro.excitation_for(wave))
    a = abs(zeta)
    series = device.series(omega_t)
    values = {"c1": (a - abs(z_t)) / scales.level,
              "c4": (float(series.phi_amplitude(omega, a)) - series.phi_max) / scales.flow}
    mismatch = False
    if device.cavitation is not None:
        p_bar = mean_blade_pressure(omega_t, z_t, device.turbine, device.cavitation.c_tilde, const)
        values["c2"] = (-p_bar + const.rho * const.g * a + const.p_v) / scales.pressure
        c3 = interior_cavitation_c3(a, omega, omega_t, z_t, device)
        printed = printed_cavitation_c3(a, omega, omega_t, z_t, device)
        if not math.isfinite(printed) or abs(printed - c3) > 1e-9 * max(1.0, abs(c3)):
            mismatch = True
            log.debug("closed-form c3 %.6g disagrees with the cycle minimum %.6g", printed, c3)
        values["c3"] = c3 / scales.pressure
    else:
        values["c2"] = values["c3"] = 0.0
    return values, zeta, series, mismatch


def penalized_dimension_objective(omega_t, device: OWCDevice, wave: MonochromaticWave, mu,
                                  scales: ConstraintScales = ConstraintScales()) -> float:
    """Q_mu = -P + mu sum [c_i]_+^2."""
    if not mu > 0:
        raise DomainError("penalty parameter must be positive")
    values, zeta, series, _ = constraint_values(omega_t, device, wave, scales)
    penalty = sum(max(v, 0.0) ** 2 for v in values.values())
    return -float(series.power(wave.omega, zeta)) + mu * penalty


@dataclass(frozen=True)
class ConstrainedSolution:
    omega_t: float
    power: float
    amplitude: float
    mu: float
    rounds: int
    violations: dict
    c3_mismatch: bool


def constrained_rotation_speed(device: OWCDevice, wave: MonochromaticWave, lower=None, upper=None,
                               mu0=1.0, mu_factor=2.0, tolerance=1e-3, max_rounds=80,
                               scales: ConstraintScales = ConstraintScales()) -> ConstrainedSolution:
    """Quadratic-penalty continuation over the turbine speed."""
    if not mu_factor > 1:
        raise DomainError("penalty schedule must increase")
    turbine = device.turbine
    lo = turbine.omega_min if lower is None else lower
    hi = turbine.omega_max if upper is None else upper
    lo = min(max(lo, turbine.omega_min), turbine.omega_max)
    mu = mu0
    mismatch = False
    for rounds in range(1, max_rounds + 1):
        if hi - lo > 1e-12 * hi:
            x, _ = _bounded_maximum(
                lambda w: penalized_dimension_objective(w, device, wave, mu, scales),
                lo, hi, 1e-9 * hi)
        else:
            x = lo
        values, zeta, series, bad = constraint_values(x, device, wave, scales)
        mismatch = mismatch or bad
        worst = max(values.values())
        if worst < tolerance:
            return ConstrainedSolution(x, float(series.power(wave.omega, zeta)), abs(zeta),
                                       mu, rounds, values, mismatch)
        mu *= mu_factor
    raise SolverError(f"penalty continuation left a violation of {worst:.3g} after {max_rounds} rounds")


@dataclass(frozen=True)
class DimensionStudyConfig:
    radii: tuple
    drafts: tuple
    turbine_fraction: float = 0.6
    top: float = 3.0
    mu0: float = 1.0
    mu_factor: float = 2.0
    tolerance: float = 1e-3
    scales: ConstraintScales = ConstraintScales()

    def __post_init__(self):
        if not self.radii or not self.drafts:
            raise DomainError("dimension study needs radii and drafts")
        if min(self.radii) <= 0 or min(self.drafts) <= 0:
            raise DomainError("radii and drafts must be positive")
        if not self.mu0 > 0 or not self.mu_factor > 1:
            raise DomainError("penalty schedule must start positive and increase")
        if not 0 < self.turbine_fraction < 1:
            raise DomainError("turbine position must lie between inflow and surface")


def scaled_device(template: OWCDevice, radius, draft, turbine_fraction=0.6, top=3.0,
                  omegas=None) -> OWCDevice:
    """Constant-section device of given radius and draft, geometrically scaled turbine,
    small-body hydrodynamics."""
    geometry = DuctGeometry.uniform(radius, draft, -turbine_fraction * draft, top)
    turbine = template.turbine.scaled(radius / template.turbine.duct_radius)
    if omegas is None:
        omegas = template.hydro.omega
    hydro = HydroCoefficients.small_body(radius, draft, omegas, template.const)
    return replace(template, geometry=geometry, turbine=turbine, hydro=hydro)


@dataclass(frozen=True)
class SweepPoint:
    radius: float
    draft: float
    annual_power: float
    flags: tuple = ()

    @property
    def linear_density(self) -> float:
        return self.annual_power / (2.0 * self.radius)

    @property
    def surface_density(self) -> float:
        return self.annual_power / (math.pi * self.radius ** 2)

    def as_row(self) -> dict:
        return {"r": self.radius, "d": self.draft, "annualP": self.annual_power,
                "linear_density": self.linear_density, "surface_density": self.surface_density,
                "flags": ";".join(self.flags)}


def sea_state_power(device: OWCDevice, state: SeaState, constrained: bool,
                    config: DimensionStudyConfig):
    """Shaft power under the incipient-stall control, optionally penalised."""
    wave = equivalent_monochromatic(state)
    stall = stall_speed_newton(state, device)
    flags = set()
    if not stall.within_bounds:
        flags.add("speed-bounds")
    series = device.series(stall.omega_t)
    power = float(series.power(wave.omega, stall.amplitude))
    values, _, _, mismatch = constraint_values(stall.omega_t, device, wave, config.scales)
    if mismatch:
        flags.add("c3-mismatch")
    active = {name for name, v in values.items() if v >= config.tolerance}
    if values["c1"] > 0:
        flags.add("uncovered")
    if values["c2"] > 0 or values["c3"] > 0:
        flags.add("cavitation")
    if not constrained or not active:
        return power, flags
    flags.add("constrained")
    sol = constrained_rotation_speed(device, wave, lower=stall.omega_t, mu0=config.mu0,
                                     mu_factor=config.mu_factor, tolerance=config.tolerance,
                                     scales=config.scales)
    if sol.c3_mismatch:
        flags.add("c3-mismatch")
    return sol.power, flags


def dimension_sweep(config: DimensionStudyConfig, scatter: ScatterDiagram, template: OWCDevice,
                    constrained: bool = False, executor=None) -> list[SweepPoint]:
    """Annual power over the (radius, draft) grid."""
    omegas = _sweep_frequencies(scatter)
    points = [(r, d) for r in config.radii for d in config.drafts]
    work = functools.partial(_sweep_point, config, scatter, template, constrained, omegas)
    return list(executor.map(work, points) if executor is not None else map(work, points))


def _sweep_frequencies(scatter: ScatterDiagram):
    return np.array(sorted({2.0 * math.pi / s.te for s in scatter.states}))


def _sweep_point(config, scatter, template, constrained, omegas, point):
    radius, draft = point
    device = scaled_device(template, radius, draft, config.turbine_fraction, config.top, omegas)
    total = 0.0
    flags = set()
    for state in scatter.states:
        occ = state.occurrence or 0.0
        if occ == 0.0 or state.hs == 0.0:
            continue
        try:
            power, cell_flags = sea_state_power(device, state, constrained, config)
        except OWCError as exc:
            log.warning("sweep point r=%g d=%g, Hs=%g Te=%g failed: %s",
                        radius, draft, state.hs, state.te, exc)
            flags.add("error")
            continue
        flags |= cell_flags
        total += occ * power
    log.info("r=%.3g d=%.3g: annual power %.6g W%s", radius, draft, total,
             " (constrained)" if constrained else "")
    return SweepPoint(radius, draft, total if "error" not in flags else float("nan"),
                      tuple(sorted(flags)))


@dataclass(frozen=True)
class SmallBodyPower:
    exact: float
    approximate: float | None
    c_opt: float
    folded: bool = False


def small_body_power(radius, draft, wave: MonochromaticWave,
                     const: PhysicalConstants | None = None) -> SmallBodyPower:
    """Optimal mean power of a small floating cylinder without diffraction or radiation."""
    const = const or PhysicalConstants()
    omega = wave.omega
    k = dispersion_wavenumber(omega, None, const.g)
    if k * radius > 0.2:
        log.warning("kr = %.3g is not small; small-body power is a rough estimate", k * radius)
    area = math.pi * radius ** 2
    mass = const.rho * area * draft
    stiffness = const.rho * const.g * area
    c_opt = abs(-omega ** 2 * mass + stiffness) / omega
    kd = k * draft
    if kd == 1.0:
        raise DomainError("kd = 1 is resonant for the small-body model")
    prefactor = const.rho * const.g * omega * wave.height ** 2 / 16.0 * area
    # the closed form has (1 - kd) in the denominator and turns negative past kd = 1;
    # its magnitude is reported there and `folded` is set
    exact = prefactor * math.exp(-2.0 * kd) / abs(1.0 - kd)
    approximate = prefactor * (1.0 - kd) if kd < 1.0 else None
    return SmallBodyPower(exact, approximate, c_opt, folded=kd > 1.0)
