# waves.py
"""Linear wave kinematics, energy flux and sea-state equivalence."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from errors import DomainError

DEEP_WATER_LIMIT = 1.0 - 1e-12


@dataclass(frozen=True)
class PhysicalConstants:
    rho: float = 1025.0
    g: float = 9.81
    p_atm: float = 101325.0
    p_v: float = 2340.0
    nu: float = 1.0e-6

    def __post_init__(self):
        for name in ("rho", "g", "p_atm", "p_v", "nu"):
            if not getattr(self, name) > 0:
                raise DomainError(f"physical constant {name} must be positive")


@dataclass(frozen=True)
class MonochromaticWave:
    """Regular wave of height H and period T travelling along `direction`.

    `depth=None` stands for deep water. A zero height is accepted and
    describes calm sea, so that zero-forcing runs go through the same path.
    """
    height: float
    period: float
    direction: float = 0.0
    depth: float | None = None

    def __post_init__(self):
        if self.height < 0:
            raise DomainError("wave height must be non-negative")
        if not self.period > 0:
            raise DomainError("wave period must be positive")
        if self.depth is not None and not self.depth > 0:
            raise DomainError("water depth must be positive")

    @property
    def omega(self) -> float:
        return 2.0 * math.pi / self.period

    @property
    def amplitude(self) -> float:
        return 0.5 * self.height

    def wavenumber(self, const: PhysicalConstants | None = None) -> float:
        g = (const or PhysicalConstants()).g
        return dispersion_wavenumber(self.omega, self.depth, g)


@dataclass(frozen=True)
class SeaState:
    hs: float
    te: float
    occurrence: float | None = None

    def __post_init__(self):
        if self.hs < 0:
            raise DomainError("significant height must be non-negative")
        if not self.te > 0:
            raise DomainError("energy period must be positive")
        if self.occurrence is not None and not 0.0 <= self.occurrence <= 1.0:
            raise DomainError("occurrence must lie in [0, 1]")


@dataclass(frozen=True)
class ScatterDiagram:
    """Relative occurrences of sea states at a site.

    The missing occurrence mass (1 - sum) is calm sea.
    """
    states: tuple[SeaState, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        seen = set()
        for s in self.states:
            key = (s.hs, s.te)
            if key in seen:
                raise DomainError(f"duplicate scatter cell Hs={s.hs} Te={s.te}")
            seen.add(key)
        if self.total_occurrence() > 1.0 + 1e-9:
            raise DomainError("scatter diagram occurrences sum to more than one")

    def total_occurrence(self) -> float:
        return math.fsum(s.occurrence or 0.0 for s in self.states)

    def hs_axis(self) -> np.ndarray:
        return np.array(sorted({s.hs for s in self.states}))

    def te_axis(self) -> np.ndarray:
        return np.array(sorted({s.te for s in self.states}))

    def occurrence_of(self, hs: float, te: float) -> float:
        for s in self.states:
            if s.hs == hs and s.te == te:
                return s.occurrence or 0.0
        return 0.0

    def scaled(self, factor: float) -> "ScatterDiagram":
        return ScatterDiagram(tuple(
            SeaState(s.hs, s.te, (s.occurrence or 0.0) * factor) for s in self.states))


def dispersion_wavenumber(omega: float, depth: float | None = None, g: float = 9.81) -> float:
    """Wavenumber solving omega**2 = g k tanh(k h); `depth=None` is deep water."""
    if not omega > 0:
        raise DomainError("angular frequency must be positive")
    k_deep = omega * omega / g
    if depth is None:
        return k_deep
    if not depth > 0:
        raise DomainError("water depth must be positive")
    if math.tanh(k_deep * depth) > DEEP_WATER_LIMIT:
        return k_deep

    # f is increasing in k; k_deep and k_deep / tanh(k_deep h) bracket the root.
    def residual(k):
        return g * k * math.tanh(k * depth) - omega * omega

    lower = k_deep
    upper = k_deep / math.tanh(k_deep * depth)
    k = brentq(residual, lower, upper, xtol=1e-300, rtol=4.0 * np.finfo(float).eps, maxiter=200)
    # one Newton polish
    t = math.tanh(k * depth)
    slope = g * (t + k * depth * (1.0 - t * t))
    if slope > 0:
        polished = k - residual(k) / slope
        if abs(residual(polished)) <= abs(residual(k)):
            k = polished
    return k


def group_velocity(omega: float, depth: float | None = None, g: float = 9.81) -> float:
    k = dispersion_wavenumber(omega, depth, g)
    if depth is None or math.tanh(k * depth) > DEEP_WATER_LIMIT:
        return 0.5 * omega / k
    kh2 = 2.0 * k * depth
    return 0.5 * omega / k * (1.0 + kh2 / math.sinh(kh2))


def monochromatic_flux(wave: MonochromaticWave, const: PhysicalConstants | None = None) -> float:
    """Deep-water energy flux per unit crest width, W/m."""
    const = const or PhysicalConstants()
    return const.rho * const.g ** 2 * wave.period * wave.height ** 2 / (32.0 * math.pi)


def seastate_flux(state: SeaState, const: PhysicalConstants | None = None) -> float:
    const = const or PhysicalConstants()
    return const.rho * const.g ** 2 * state.te * state.hs ** 2 / (64.0 * math.pi)


def equivalent_monochromatic(state: SeaState, direction: float = 0.0,
                             depth: float | None = None) -> MonochromaticWave:
    """Regular wave carrying the same energy flux as the sea state."""
    return MonochromaticWave(height=state.hs / math.sqrt(2.0), period=state.te,
                             direction=direction, depth=depth)


def depth_factor(k: float, z: float, depth: float | None) -> float:
    """cosh(k(z+h))/cosh(kh), evaluated without overflow; exp(kz) in deep water."""
    if depth is None:
        return math.exp(k * z)
    return math.exp(k * z) * (1.0 + math.exp(-2.0 * k * (z + depth))) / (1.0 + math.exp(-2.0 * k * depth))


def incident_pressure_amplitude(wave: MonochromaticWave, z: float,
                                const: PhysicalConstants | None = None,
                                x: float = 0.0, y: float = 0.0) -> complex:
    """Complex amplitude of the incident-wave dynamic pressure at (x, y, z)."""
    const = const or PhysicalConstants()
    if z > 0 or (wave.depth is not None and z < -wave.depth):
        raise DomainError(f"z={z} outside the water column")
    if wave.height == 0:
        return 0j
    k = wave.wavenumber(const)
    phase = np.exp(1j * k * (x * math.cos(wave.direction) + y * math.sin(wave.direction)))
    # p = i omega rho phi with phi = -i (H/2)(g/omega) f(z) e^{ik.x}
    return complex(const.rho * const.g * wave.amplitude * depth_factor(k, z, wave.depth) * phase)


def seastate_from_spectrum(frequencies, density) -> SeaState:
    """Significant height and energy period of a one-sided variance spectrum S(f).

    Hs = 4 sqrt(m0) and Te = m_{-1}/m0; frequencies in Hz, strictly increasing
    and positive.
    """
    f = np.asarray(frequencies, dtype=float)
    s = np.asarray(density, dtype=float)
    if f.ndim != 1 or f.shape != s.shape or f.size < 2:
        raise DomainError("spectrum needs matching one-dimensional arrays")
    if np.any(f <= 0) or np.any(np.diff(f) <= 0):
        raise DomainError("spectrum frequencies must be positive and strictly increasing")
    if np.any(s < 0):
        raise DomainError("spectral density must be non-negative")
    m0 = trapezoid(s, f)
    if m0 <= 0:
        raise DomainError("spectrum carries no energy")
    m_1 = trapezoid(s / f, f)
    return SeaState(hs=4.0 * math.sqrt(m0), te=m_1 / m0)
