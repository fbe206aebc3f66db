# device.py
"""Single OWC device: duct geometry, hydrodynamic data and column dynamics."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.signal import find_peaks

from errors import DomainError, SolverError
from turbine import (CavitationTable, CharacteristicCurves, MeanPowerSeries, TurbineSpec,
                     linear_damping_Lambda, mean_power_coefficients, pressure_jump, torque)
from waves import (MonochromaticWave, PhysicalConstants, depth_factor, dispersion_wavenumber,
                   group_velocity)

log = logging.getLogger(__name__)

NORMALIZATIONS = ("per-unit-amplitude", "absolute")


class DuctGeometry:
    """Axisymmetric duct with a piecewise-linear radius profile r(z).

    Nodes are (z, r) pairs ordered bottom to top. Two nodes at the same z
    describe a step; steps are replaced by a linear ramp `blend` wide so that
    S(z) stays continuous.
    """

    def __init__(self, profile, turbine_z, blend=0.01):
        nodes = [(float(z), float(r)) for z, r in profile]
        if len(nodes) < 2:
            raise DomainError("duct profile needs at least two nodes")
        smoothed = []
        for i, (z, r) in enumerate(nodes):
            if i and z < nodes[i - 1][0]:
                raise DomainError("duct profile z must be non-decreasing")
            if r <= 0:
                raise DomainError("duct radius must be positive")
            if i + 1 < len(nodes) and nodes[i + 1][0] == z:
                smoothed.append((z - blend / 2, r))
            elif i and nodes[i - 1][0] == z:
                smoothed.append((z + blend / 2, r))
            else:
                smoothed.append((z, r))
        z_arr = np.array([n[0] for n in smoothed])
        if np.any(np.diff(z_arr) <= 0):
            raise DomainError("duct steps closer than the blending band")
        self.z = z_arr
        self.r = np.array([n[1] for n in smoothed])
        self.profile = tuple(nodes)
        self.turbine_z = float(turbine_z)
        self.blend = blend
        if not self.z[0] < self.turbine_z < 0.0 < self.z[-1]:
            raise DomainError("duct needs z_inflow < z_turbine < 0 < z_top")
        # C at every node, bottom up
        pieces = [self._piece_integral(i, self.z[i + 1]) for i in range(len(self.z) - 1)]
        self._c_nodes = np.concatenate(([0.0], np.cumsum(pieces)))

    @classmethod
    def uniform(cls, radius, draft, turbine_z=None, top=3.0):
        """Constant-section tube; the turbine sits at 60 % of the draft by default."""
        if turbine_z is None:
            turbine_z = -0.6 * draft
        return cls([(-draft, radius), (top, radius)], turbine_z)

    @property
    def z_inflow(self) -> float:
        return float(self.z[0])

    @property
    def z_top(self) -> float:
        return float(self.z[-1])

    @property
    def draft(self) -> float:
        return -self.z_inflow

    @property
    def max_radius(self) -> float:
        return float(self.r.max())

    @property
    def s_inflow(self) -> float:
        return self.area(self.z_inflow)

    @property
    def s0(self) -> float:
        return self.area(0.0)

    @property
    def s_turbine(self) -> float:
        return self.area(self.turbine_z)

    def _segment(self, z):
        # above the top the duct continues with the top section
        return int(np.clip(np.searchsorted(self.z, z, side="right") - 1, 0, len(self.z) - 2))

    def radius(self, z) -> float:
        if z >= self.z_top:
            return float(self.r[-1])
        return float(np.interp(z, self.z, self.r))

    def area(self, z) -> float:
        r = self.radius(z)
        return math.pi * r * r

    def darea_dz(self, z) -> float:
        if z >= self.z_top or z < self.z_inflow:
            return 0.0
        i = self._segment(z)
        slope = (self.r[i + 1] - self.r[i]) / (self.z[i + 1] - self.z[i])
        return 2.0 * math.pi * self.radius(z) * slope

    def _piece_integral(self, i, zeta):
        """Closed form of the integral of 1/S from node i to zeta within segment i."""
        z0 = self.z[i]
        r0 = self.r[i]
        slope = (self.r[i + 1] - r0) / (self.z[i + 1] - z0)
        if slope == 0.0:
            return (zeta - z0) / (math.pi * r0 * r0)
        r1 = r0 + slope * (zeta - z0)
        return (1.0 / r0 - 1.0 / r1) / (math.pi * slope)

    def inertia(self, zeta) -> float:
        if zeta < self.z_inflow:
            raise DomainError(f"level {zeta} below the inflow section")
        if zeta >= self.z_top:
            return float(self._c_nodes[-1] + (zeta - self.z_top) / self.area(self.z_top))
        i = self._segment(zeta)
        return float(self._c_nodes[i] + self._piece_integral(i, zeta))


def column_inertia_C(geom: DuctGeometry, zeta: float, method: str = "closed") -> float:
    """C(zeta), the integral of dz/S(z) from the inflow section to zeta.

    `method="quad"` integrates with adaptive quadrature instead of the
    per-piece closed forms.
    """
    if method == "closed":
        return geom.inertia(zeta)
    if zeta < geom.z_inflow:
        raise DomainError(f"level {zeta} below the inflow section")
    breaks = [z for z in geom.z if geom.z_inflow < z < zeta]
    value, _ = quad(lambda z: 1.0 / geom.area(z), geom.z_inflow, zeta,
                    points=breaks or None, epsabs=0.0, epsrel=1e-13, limit=200)
    return value


@dataclass(frozen=True)
class HydroCoefficients:
    """Added mass, radiation damping and excitation pressure on a frequency grid.

    Pressure form: A in kg/m^2, B in Pa s/m, excitation in Pa per metre of
    incident amplitude or, for `absolute` tables, in Pa for a wave of
    `reference_height`.
    """
    omega: np.ndarray = field(repr=False)
    added_mass: np.ndarray = field(repr=False)
    damping: np.ndarray = field(repr=False)
    excitation: np.ndarray = field(repr=False)
    normalization: str = "per-unit-amplitude"
    reference_height: float | None = None

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        arrays = [np.atleast_1d(np.asarray(a, dtype=t)) for a, t in
                  ((self.added_mass, float), (self.damping, float), (self.excitation, complex))]
        if any(a.shape != omega.shape for a in arrays):
            raise DomainError("hydrodynamic columns must share the frequency grid")
        if np.any(np.diff(omega) <= 0):
            raise DomainError("hydrodynamic frequency grid must be strictly increasing")
        if np.any(arrays[1] < 0):
            raise DomainError("radiation damping must be non-negative")
        if self.normalization not in NORMALIZATIONS:
            raise DomainError(f"unknown excitation normalization {self.normalization!r}")
        if self.normalization == "absolute" and not (self.reference_height or 0) > 0:
            raise DomainError("absolute excitation tables need a reference wave height")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "added_mass", arrays[0])
        object.__setattr__(self, "damping", arrays[1])
        object.__setattr__(self, "excitation", arrays[2])

    @classmethod
    def small_body(cls, radius, draft, omegas, const: PhysicalConstants | None = None,
                   depth=None):
        """Analytic surrogate for a slender open tube.

        Excitation is the undisturbed pressure at the inflow depth, added mass
        an open-end correction of 0.6 r and radiation damping that of a
        pulsating source at the inflow depth.
        """
        const = const or PhysicalConstants()
        omegas = np.asarray(omegas, dtype=float)
        s = math.pi * radius ** 2
        k = np.array([dispersion_wavenumber(w, depth, const.g) for w in omegas])
        cg = np.array([group_velocity(w, depth, const.g) for w in omegas])
        decay = np.array([depth_factor(kk, -draft, depth) for kk in k])
        excitation = const.rho * const.g * decay
        added = np.full_like(omegas, 0.6 * const.rho * radius)
        # power carried away by the outgoing ring wave of a source of strength S zetadot
        damping = const.rho * cg * omegas ** 2 * k * s * decay ** 2 / const.g
        return cls(omegas, added, damping, excitation.astype(complex))

    def _interp(self, values, omega):
        if self.omega.size == 1:
            if not math.isclose(omega, self.omega[0], rel_tol=1e-12):
                raise DomainError(f"omega={omega} not in single-frequency hydrodynamic table")
            return values[0]
        if not self.omega[0] * (1 - 1e-12) <= omega <= self.omega[-1] * (1 + 1e-12):
            raise DomainError(f"omega={omega} outside hydrodynamic grid "
                              f"[{self.omega[0]}, {self.omega[-1]}]")
        if np.iscomplexobj(values):
            return complex(np.interp(omega, self.omega, values.real)
                           + 1j * np.interp(omega, self.omega, values.imag))
        return float(np.interp(omega, self.omega, values))

    def at(self, omega):
        """(A, B, excitation table value) at `omega`."""
        return (self._interp(self.added_mass, omega), self._interp(self.damping, omega),
                self._interp(self.excitation, omega))

    def excitation_per_amplitude(self, omega) -> complex:
        pe = self._interp(self.excitation, omega)
        if self.normalization == "absolute":
            return pe / (0.5 * self.reference_height)
        return pe

    def excitation_for(self, wave: MonochromaticWave) -> complex:
        """Excitation pressure amplitude for a device at the origin."""
        return self.excitation_per_amplitude(wave.omega) * wave.amplitude


@dataclass(frozen=True)
class OWCDevice:
    geometry: DuctGeometry
    turbine: TurbineSpec
    curves: CharacteristicCurves
    hydro: HydroCoefficients
    cavitation: CavitationTable | None = None
    const: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        r_geom = self.geometry.radius(self.geometry.turbine_z)
        if abs(r_geom - self.turbine.duct_radius) > 0.01 * r_geom:
            log.warning("turbine duct radius %.3g differs from the duct profile at the turbine (%.3g)",
                        self.turbine.duct_radius, r_geom)

    @property
    def s0(self) -> float:
        return self.geometry.s0

    @property
    def s_t(self) -> float:
        return self.turbine.flow_area

    @property
    def column_mass(self) -> float:
        """rho C(0) S(0), kg/m^2."""
        return self.const.rho * self.geometry.inertia(0.0) * self.s0

    @property
    def stiffness(self) -> float:
        return self.const.rho * self.const.g

    def effective_mass(self, omega) -> float:
        return self.column_mass + self.hydro.at(omega)[0]

    def Lambda(self, omega_t) -> float:
        return linear_damping_Lambda(omega_t, self.turbine, self.curves)

    def series(self, omega_t) -> MeanPowerSeries:
        return mean_power_coefficients(self.turbine, self.curves, omega_t, self.s0)


def natural_frequency(device: OWCDevice, omega) -> float:
    """Undamped natural frequency of the linearized column with A(omega)."""
    return math.sqrt(device.stiffness / device.effective_mass(omega))


def frequency_response(mass, damping, stiffness, omega, pe) -> complex:
    denominator = -omega * omega * mass - 1j * omega * damping + stiffness
    if denominator == 0:
        raise SolverError("resonance singularity: undamped system forced at its natural frequency")
    return pe / denominator


def linear_frequency_solve(device: OWCDevice, lam, omega, pe) -> complex:
    """Complex column amplitude of the linearized model."""
    added, radiation, _ = device.hydro.at(omega)
    return frequency_response(device.column_mass + added, lam * device.s0 + radiation,
                              device.stiffness, omega, pe)


def hydraulic_power(zeta_hat, omega, lam, s0) -> float:
    if lam < 0:
        raise DomainError("turbine damping must be non-negative")
    return 0.5 * lam * omega ** 2 * s0 ** 2 * abs(zeta_hat) ** 2


def mechanical_power(zeta_hat, omega, series: MeanPowerSeries) -> float:
    if not series.within_model(omega, zeta_hat):
        log.warning("flow coefficient amplitude %.4g beyond model validity %.4g",
                    float(series.phi_amplitude(omega, zeta_hat)), series.phi_max)
    return float(series.power(omega, zeta_hat))


@dataclass(frozen=True)
class DeviceState:
    zeta: float
    zetadot: float
    t: float = 0.0


@dataclass(frozen=True)
class ColumnModel:
    """Right-hand side data of the nonlinear column equation at one frequency.

    With `turbine=None` the pressure drop term is switched off.
    """
    geometry: DuctGeometry
    added_mass: float
    damping: float
    excitation: complex
    omega: float
    turbine: TurbineSpec | None = None
    curves: CharacteristicCurves | None = None
    omega_t: float | None = None
    cavitation: CavitationTable | None = None
    const: PhysicalConstants = field(default_factory=PhysicalConstants)

    @classmethod
    def from_device(cls, device: OWCDevice, wave: MonochromaticWave, omega_t: float):
        added, radiation, _ = device.hydro.at(wave.omega)
        return cls(device.geometry, added, radiation, device.hydro.excitation_for(wave),
                   wave.omega, device.turbine, device.curves, omega_t, device.cavitation,
                   device.const)

    def forcing(self, t):
        return (self.excitation * np.exp(-1j * self.omega * t)).real

    def turbine_velocity(self, zeta, zetadot):
        return self.geometry.area(zeta) * zetadot / self.turbine.flow_area

    def pressure_drop(self, zeta, zetadot, warn=False):
        if self.turbine is None:
            return 0.0
        return float(pressure_jump(self.turbine_velocity(zeta, zetadot), self.omega_t,
                                   self.turbine, self.curves, warn))

    def column_terms(self, t, zeta, zetadot):
        """Column inertia rho C S and every load term except radiation and excitation."""
        geom = self.geometry
        rho = self.const.rho
        if zeta <= geom.z_inflow:
            raise SolverError(f"water column drained below the inflow section at t={t:.4g}")
        c = geom.inertia(zeta)
        s = geom.area(zeta)
        load = (rho * c * geom.darea_dz(zeta) * zetadot ** 2
                + 0.5 * rho * zetadot ** 2 * (1.0 - (s / geom.s_inflow) ** 2)
                + self.pressure_drop(zeta, zetadot)
                + rho * self.const.g * zeta)
        return rho * c * s, load

    def acceleration(self, t, zeta, zetadot, forcing=None):
        inertia, load = self.column_terms(t, zeta, zetadot)
        mass = inertia + self.added_mass
        if not mass > 0:
            raise SolverError("degenerate column mass term")
        p_e = self.forcing(t) if forcing is None else forcing
        return (p_e - load - self.damping * zetadot) / mass

    def rhs(self, t, y):
        return [y[1], self.acceleration(t, y[0], y[1])]


def nonlinear_rhs(state: DeviceState, model: ColumnModel, forcing=None) -> float:
    """Column acceleration for the given state."""
    return model.acceleration(state.t, state.zeta, state.zetadot, forcing)


@dataclass
class TimeSeries:
    t: np.ndarray
    zeta: np.ndarray
    zetadot: np.ndarray
    zetaddot: np.ndarray
    flow: np.ndarray
    dp: np.ndarray
    torque: np.ndarray
    power: np.ndarray
    pmin: np.ndarray
    period: float
    window_start: float
    flags: dict = field(default_factory=dict)

    def _window(self):
        # half-open window so that sampled whole periods average trig terms exactly
        return (self.t >= self.window_start - 1e-9 * self.period) & (self.t < self.t[-1] - 1e-9 * self.period)

    def mean_power(self) -> float:
        return float(np.mean(self.power[self._window()]))

    def mean_hydraulic_power(self) -> float:
        w = self._window()
        return float(np.mean(self.flow[w] * self.dp[w]))

    def level_range(self):
        w = self._window()
        return float(self.zeta[w].min()), float(self.zeta[w].max())

    def min_pressure(self) -> float:
        w = self._window()
        return float(np.nanmin(self.pmin[w])) if np.any(np.isfinite(self.pmin[w])) else float("nan")

    def amplitude(self) -> float:
        lo, hi = self.level_range()
        return 0.5 * (hi - lo)

    def period_rms_difference(self) -> float:
        """RMS difference of the level between the last two periods."""
        n = int(round(self.period / (self.t[1] - self.t[0])))
        last = self.zeta[-n - 1:-1]
        prev = self.zeta[-2 * n - 1:-n - 1]
        return float(np.sqrt(np.mean((last - prev) ** 2)))

    def power_maxima_per_period(self) -> float:
        w = self._window()
        power = self.power[w]
        peaks, _ = find_peaks(power, prominence=1e-6 * max(float(np.ptp(power)), 1e-300))
        return len(peaks) / round((self.t[-1] - self.window_start) / self.period)

    def summary(self) -> dict:
        lo, hi = self.level_range()
        return {"mean_power": self.mean_power(), "mean_hydraulic_power": self.mean_hydraulic_power(),
                "zeta_min": lo, "zeta_max": hi, "p_min": self.min_pressure(),
                "power_maxima_per_period": self.power_maxima_per_period(),
                "flags": sorted(k for k, v in self.flags.items() if v)}


def blade_pressure(model: ColumnModel, zeta, zetadot, zetaddot, dp, v_t):
    """Minimum blade pressure including the unsteady column terms."""
    if model.cavitation is None or model.turbine is None:
        return np.full_like(zeta, np.nan)
    geom = model.geometry
    const = model.const
    z_t = geom.turbine_z
    c_t = geom.inertia(z_t)
    s_t_sec = geom.area(z_t)
    s = np.array([geom.area(z) for z in zeta])
    ds = np.array([geom.darea_dz(z) for z in zeta])
    c = np.array([geom.inertia(z) for z in zeta])
    u = model.omega_t * model.turbine.tip_radius
    phi = v_t / u
    p = (const.p_atm + const.rho * const.g * (zeta - z_t)
         + const.rho * (ds * zetadot ** 2 + s * zetaddot) * (c - c_t)
         + 0.5 * const.rho * zetadot ** 2 * (1.0 - (s / s_t_sec) ** 2)
         + 0.5 * const.rho * (v_t ** 2 + u ** 2) * model.cavitation.at(phi))
    return p + np.where(zetadot > 0, dp, 0.0)


def integrate_nonlinear(model: ColumnModel, periods: int = 20, samples_per_period: int = 200,
                        initial: DeviceState | None = None, rtol: float = 1e-8,
                        atol: float = 1e-10, window_periods: int | None = None) -> TimeSeries:
    """Integrate the column equation from `initial` (rest by default).

    The output grid is uniform; averages use the trailing `window_periods`
    (half the run by default).
    """
    if periods < 1 or samples_per_period < 4:
        raise DomainError("need at least one period and four samples per period")
    if rtol > 1e-8:
        raise DomainError("relative tolerance must not exceed 1e-8")
    period = 2.0 * math.pi / model.omega
    initial = initial or DeviceState(0.0, 0.0)
    n = periods * samples_per_period
    t = np.linspace(0.0, periods * period, n + 1)
    try:
        sol = solve_ivp(model.rhs, (0.0, t[-1]), [initial.zeta, initial.zetadot],
                        method="DOP853", t_eval=t, rtol=rtol, atol=atol)
    except DomainError as exc:
        raise SolverError(str(exc)) from exc
    if not sol.success:
        raise SolverError(f"time integration failed: {sol.message}")
    zeta, zetadot = sol.y
    zetaddot = np.array([model.acceleration(ti, a, b) for ti, a, b in zip(t, zeta, zetadot)])
    geom = model.geometry
    flow = np.array([geom.area(z) for z in zeta]) * zetadot
    window = window_periods if window_periods is not None else max(1, periods // 2)
    window_start = t[-1] - window * period
    # start-up transients are not flagged
    steady = t >= window_start - 1e-9 * period
    flags = {"uncovered": bool(np.any(zeta[steady] < geom.turbine_z)),
             "overflow": bool(np.any(zeta[steady] > geom.z_top))}
    if model.turbine is not None:
        v_t = flow / model.turbine.flow_area
        phi_peak = float(np.max(np.abs(v_t[steady]))) / (model.omega_t * model.turbine.tip_radius)
        flags["clamped"] = phi_peak > model.curves.phi_max_model
        dp = pressure_jump(v_t, model.omega_t, model.turbine, model.curves, warn=True)
        tq = torque(v_t, model.omega_t, model.turbine, model.curves, warn=False)
        power = tq * model.omega_t
        pmin = blade_pressure(model, zeta, zetadot, zetaddot, dp, v_t)
        tail = pmin[steady]
        flags["cavitation"] = bool(np.nanmin(tail) < model.const.p_v) if np.any(np.isfinite(tail)) else False
    else:
        dp = tq = power = np.zeros_like(t)
        pmin = np.full_like(t, np.nan)
    series = TimeSeries(t, zeta, zetadot, zetaddot, flow, np.asarray(dp, dtype=float),
                        np.asarray(tq, dtype=float), np.asarray(power, dtype=float), pmin,
                        period, window_start, flags)
    for name, raised in flags.items():
        if raised:
            log.warning("time series flag raised: %s", name)
    return series


def simulate_device(device: OWCDevice, wave: MonochromaticWave, omega_t: float, **kwargs) -> TimeSeries:
    return integrate_nonlinear(ColumnModel.from_device(device, wave, omega_t), **kwargs)
