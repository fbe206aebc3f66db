# turbine.py
"""Wells turbine characteristics, mean-power series and the blade pressure bound."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

from errors import DataFormatError, DomainError
from waves import PhysicalConstants

log = logging.getLogger(__name__)

MAX_HALF_DEGREE = 6


@dataclass(frozen=True)
class TurbineSpec:
    tip_radius: float
    hub_radius: float
    chord: float
    blades: int
    duct_radius: float
    omega_min: float = 0.5
    omega_max: float = 60.0
    rho: float = 1025.0

    def __post_init__(self):
        if not 0 < self.hub_radius < self.tip_radius:
            raise DomainError("turbine needs 0 < hub radius < tip radius")
        if not self.duct_radius >= self.tip_radius:
            raise DomainError("duct radius at the turbine must not be smaller than the tip radius")
        if not self.chord > 0 or self.blades < 1:
            raise DomainError("blade chord and count must be positive")
        if not 0 < self.omega_min < self.omega_max:
            raise DomainError("rotational speed bounds must satisfy 0 < min < max")

    @property
    def flow_area(self) -> float:
        """S_t, area between hub and duct wall."""
        return math.pi * (self.duct_radius ** 2 - self.hub_radius ** 2)

    @property
    def k_a(self) -> float:
        return self.rho * self.chord * (self.tip_radius - self.hub_radius) * self.blades / 2.0

    @property
    def solidity(self) -> float:
        return self.chord * (self.tip_radius - self.hub_radius) * self.blades / self.flow_area

    def scaled(self, factor: float) -> "TurbineSpec":
        """Geometrically similar turbine, all lengths multiplied by `factor`."""
        return TurbineSpec(self.tip_radius * factor, self.hub_radius * factor,
                           self.chord * factor, self.blades, self.duct_radius * factor,
                           self.omega_min, self.omega_max, self.rho)


class CharacteristicCurves:
    """Tabulated C_a(phi), C_t(phi) with an even-polynomial torque fit.

    C_a is interpolated with a monotone cubic; C_t is evaluated through the
    fitted polynomial so that instantaneous and mean power agree. Both are
    clamped at the last tabulated flow coefficient.
    """

    def __init__(self, phi, ca, ct, fit_tolerance=1e-3):
        phi = np.asarray(phi, dtype=float)
        ca = np.asarray(ca, dtype=float)
        ct = np.asarray(ct, dtype=float)
        if phi.ndim != 1 or phi.shape != ca.shape or phi.shape != ct.shape or phi.size < 3:
            raise DataFormatError("turbine curves need at least three (phi, Ca, Ct) rows")
        if phi[0] != 0.0:
            raise DataFormatError("turbine curve table must start at phi = 0")
        if np.any(np.diff(phi) <= 0):
            raise DataFormatError("turbine curve phi column must be strictly increasing")
        if ca[0] < 0:
            raise DataFormatError("Ca(0) must be non-negative")
        self.phi = phi
        self.ca_table = ca
        self.ct_table = ct
        self.fit_tolerance = fit_tolerance
        self._ca = PchipInterpolator(phi, ca, extrapolate=False)
        self.ca_slope0 = float(self._ca.derivative()(0.0))
        self.ct_coeffs, self.fit_residual = fit_even_polynomial(phi, ct, fit_tolerance)

    @property
    def phi_max_model(self) -> float:
        return float(self.phi[-1])

    @cached_property
    def phi_opt(self) -> float:
        """Flow coefficient of peak torque coefficient on the fitted polynomial."""
        i = int(np.argmax(self.ct_table))
        lo = self.phi[max(i - 1, 0)]
        hi = self.phi[min(i + 1, self.phi.size - 1)]
        res = minimize_scalar(lambda p: -float(self.ct(p, warn=False)), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        return float(res.x)

    @property
    def half_degree(self) -> int:
        return len(self.ct_coeffs) - 1

    def _clamp(self, phi, warn):
        a = np.abs(np.asarray(phi, dtype=float))
        over = a > self.phi_max_model
        if warn and np.any(over):
            log.warning("flow coefficient %.4g beyond the turbine table (%.4g); curves clamped",
                        float(a.max()), self.phi_max_model)
        return np.minimum(a, self.phi_max_model)

    def ca(self, phi, warn=True):
        return self._ca(self._clamp(phi, warn))

    def ct(self, phi, warn=True):
        a = self._clamp(phi, warn)
        return npoly.polyval(a * a, self.ct_coeffs)


def fit_even_polynomial(phi, values, tolerance=1e-3, max_half_degree=MAX_HALF_DEGREE):
    """Least-squares fit sum_j c_2j phi^2j, raising the degree until the
    largest residual drops below `tolerance`.

    Returns (coefficients c_0, c_2, ..., c_2d; max residual).
    """
    phi = np.asarray(phi, dtype=float)
    values = np.asarray(values, dtype=float)
    scale = float(np.max(np.abs(phi)))
    t2 = (phi / scale) ** 2
    for d in range(max_half_degree + 1):
        basis = np.vander(t2, d + 1, increasing=True)
        a, *_ = np.linalg.lstsq(basis, values, rcond=None)
        residual = float(np.max(np.abs(basis @ a - values)))
        if residual < tolerance:
            break
    else:
        raise DomainError(f"torque curve not fitted within {tolerance} by an even "
                          f"polynomial of degree {2 * max_half_degree} (residual {residual:.3g})")
    coeffs = a / scale ** (2 * np.arange(d + 1))
    log.debug("torque curve fitted with degree %d, residual %.3g", 2 * d, residual)
    return coeffs, residual


@dataclass(frozen=True)
class CavitationTable:
    phi: np.ndarray = field(repr=False)
    cpmin: np.ndarray = field(repr=False)

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        cp = np.asarray(self.cpmin, dtype=float)
        if phi.ndim != 1 or phi.shape != cp.shape or phi.size < 2:
            raise DataFormatError("cavitation table needs at least two (phi, Cpmin) rows")
        if np.any(np.diff(phi) <= 0):
            raise DataFormatError("cavitation table phi column must be strictly increasing")
        if np.any(cp >= 0):
            raise DataFormatError("Cpmin entries must be negative")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "cpmin", cp)

    @property
    def c_tilde(self) -> float:
        """Smallest tabulated minimum-pressure coefficient."""
        return float(self.cpmin.min())

    def at(self, phi):
        return np.interp(np.abs(phi), self.phi, self.cpmin)


def flow_coefficient(v_t, omega_t, spec: TurbineSpec):
    if not omega_t > 0:
        raise DomainError("turbine speed must be positive")
    return np.asarray(v_t) / (omega_t * spec.tip_radius)


def pressure_jump(v_t, omega_t, spec: TurbineSpec, curves: CharacteristicCurves, warn=True):
    """Pressure drop across the rotor, signed like the flow."""
    v_t = np.asarray(v_t, dtype=float)
    phi = flow_coefficient(v_t, omega_t, spec)
    u = omega_t * spec.tip_radius
    return np.sign(v_t) * curves.ca(phi, warn) * spec.k_a / spec.flow_area * (v_t * v_t + u * u)


def torque(v_t, omega_t, spec: TurbineSpec, curves: CharacteristicCurves, warn=True):
    v_t = np.asarray(v_t, dtype=float)
    phi = flow_coefficient(v_t, omega_t, spec)
    u = omega_t * spec.tip_radius
    return curves.ct(phi, warn) * spec.k_a * spec.tip_radius * (v_t * v_t + u * u)


def efficiency(phi, curves: CharacteristicCurves):
    """Shaft power over hydraulic power, C_t/(phi C_a)."""
    phi = np.abs(np.asarray(phi, dtype=float))
    ca = curves.ca(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = curves.ct(phi) / (phi * ca)
    return np.where(phi > 0, eta, 0.0)


def reynolds_number(phi, omega_t, spec: TurbineSpec, const: PhysicalConstants | None = None):
    const = const or PhysicalConstants()
    return spec.tip_radius * omega_t * spec.chord * np.sqrt(np.asarray(phi) ** 2 + 1.0) / const.nu


def cubic_correction_ratio(phi):
    """Ratio of the cubic to the linear term of the expanded pressure jump."""
    return np.asarray(phi) ** 2


def linear_damping_Lambda(omega_t, spec: TurbineSpec, curves: CharacteristicCurves) -> float:
    """dDelta_p/dQ at zero flow, Pa s/m^3."""
    if not omega_t > 0:
        raise DomainError("turbine speed must be positive")
    return curves.ca_slope0 * spec.k_a * omega_t * spec.tip_radius / spec.flow_area ** 2


def omega_t_for_lambda(lam: float, spec: TurbineSpec, curves: CharacteristicCurves) -> float:
    """Turbine speed giving linear damping `lam`."""
    return lam * spec.flow_area ** 2 / (curves.ca_slope0 * spec.k_a * spec.tip_radius)


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def In_integral(n: int) -> Fraction:
    """Mean of sin^n over one period."""
    if n < 0:
        raise DomainError("exponent must be non-negative")
    if n % 2:
        return Fraction(0)
    return Fraction(_double_factorial(n - 1), _double_factorial(n))


@dataclass(frozen=True)
class MeanPowerSeries:
    """Mean shaft power P = sum_n p_n (omega |zeta|)^(2n) for sinusoidal motion.

    `phi_scale` converts omega |zeta| into the flow-coefficient amplitude.
    """
    coeffs: np.ndarray = field(repr=False)
    phi_scale: float
    phi_max: float

    def power(self, omega, amplitude):
        x = (np.asarray(omega) * np.abs(amplitude)) ** 2
        return npoly.polyval(x, self.coeffs)

    def amplitude_gradient(self, omega, zeta):
        """d P / d conj(zeta) times two: sum 2n p_n omega^2n conj(zeta)^(n-1) zeta^n."""
        zeta = np.asarray(zeta, dtype=complex)
        out = np.zeros_like(zeta)
        for n in range(1, len(self.coeffs)):
            out = out + 2 * n * self.coeffs[n] * omega ** (2 * n) * np.conj(zeta) ** (n - 1) * zeta ** n
        return out

    def phi_amplitude(self, omega, amplitude):
        return self.phi_scale * np.asarray(omega) * np.abs(amplitude)

    def within_model(self, omega, amplitude) -> bool:
        return bool(np.all(self.phi_amplitude(omega, amplitude) <= self.phi_max * (1 + 1e-12)))


def mean_power_coefficients(spec: TurbineSpec, curves: CharacteristicCurves,
                            omega_t: float, s0: float) -> MeanPowerSeries:
    """Coefficients p_0 ... p_(d+1) of the mean shaft power series."""
    if not omega_t > 0:
        raise DomainError("turbine speed must be positive")
    c = curves.ct_coeffs
    u = spec.tip_radius * omega_t
    ratio = s0 / spec.flow_area
    p = np.zeros(len(c) + 1)
    for n in range(len(c) + 1):
        below = c[n - 1] if n >= 1 else 0.0
        here = c[n] if n < len(c) else 0.0
        p[n] = float(In_integral(2 * n)) * (below + here) * spec.k_a * u ** (3 - 2 * n) * ratio ** (2 * n)
    return MeanPowerSeries(coeffs=p, phi_scale=ratio / u, phi_max=curves.phi_max_model)


def mean_blade_pressure(omega_t, z_t, spec: TurbineSpec, c_tilde: float,
                        const: PhysicalConstants) -> float:
    """Constant part of the blade pressure bound."""
    u = omega_t * spec.tip_radius
    return const.p_atm - const.rho * const.g * z_t + 0.5 * const.rho * u * u * c_tilde


def pressure_bound_samples(amplitude, omega, omega_t, z_t, spec: TurbineSpec,
                           c_tilde: float, const: PhysicalConstants, s0: float, phases):
    """Blade pressure bound at the given phases (omega t) of a sinusoidal cycle."""
    v_amp = omega * amplitude * s0 / spec.flow_area
    u = omega_t * spec.tip_radius
    zeta = amplitude * np.cos(phases)
    v = -v_amp * np.sin(phases)
    return const.p_atm + const.rho * const.g * (zeta - z_t) + 0.5 * const.rho * (v * v + u * u) * c_tilde


def min_pressure_bound(amplitude, omega, omega_t, z_t, spec: TurbineSpec,
                       cav: CavitationTable, const: PhysicalConstants | None, s0: float) -> float:
    """Cycle minimum of the blade pressure bound for sinusoidal motion.

    Written in c = cos(omega t) the bound is a convex parabola; its minimum
    on [-1, 1] is either the trough (c = -1) or the stationary point
    c* = g a / (V^2 C~) when that lies in the interval.
    """
    const = const or PhysicalConstants()
    if not z_t < 0:
        raise DomainError("turbine coordinate must be below the free surface")
    a = abs(amplitude)
    c_tilde = cav.c_tilde
    p_bar = mean_blade_pressure(omega_t, z_t, spec, c_tilde, const)
    trough = p_bar - const.rho * const.g * a
    v_amp = omega * a * s0 / spec.flow_area
    if a == 0 or v_amp == 0:
        return trough
    if c_tilde <= -const.g * a / v_amp ** 2:
        interior = (p_bar + 0.5 * const.rho * v_amp ** 2 * c_tilde
                    + 0.5 * const.rho * (const.g * a) ** 2 / (v_amp ** 2 * c_tilde))
        return min(trough, interior)
    return trough
