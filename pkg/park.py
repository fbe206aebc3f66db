# park.py
"""Frequency-domain interaction model of a park of OWC devices and piles.

Each body is described in a basis of cylindrical partial waves of orders
-M..M around its own centre (propagating modes only). The unknowns are the
scattered-wave coefficients gamma of every body and the complex column
amplitudes zeta; they solve

    gamma_j - D_j sum_i T_ij^T gamma_i + i w R_j zeta_j = D_j a_j
    Z_j zeta_j - f_j sum_i T_ij^T gamma_i             = f_j a_j

with a_j the ambient incident coefficients at body j and T_ij the Graf
translation from body i's outgoing basis to body j's regular basis.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.special import h1vp, hankel1, jvp

from device import ColumnModel, HydroCoefficients, OWCDevice
from errors import DomainError, SolverError
from turbine import MeanPowerSeries, torque
from waves import MonochromaticWave, PhysicalConstants, dispersion_wavenumber, group_velocity

log = logging.getLogger(__name__)

DEFAULT_ORDER = 6
PILE_STIFFNESS_FACTOR = 1e9
BODY_KINDS = ("device", "pile")


@dataclass(frozen=True)
class BodyHydro:
    """Single-body data at one frequency, in the pressure form of the column equation.

    `dtm` maps incident to scattered partial-wave coefficients, `radiation`
    gives the radiated partial waves per unit column velocity (s), and
    `excitation` maps incident coefficients to excitation pressure (Pa/m).
    """
    omega: float
    order: int
    dtm: np.ndarray = field(repr=False)
    radiation: np.ndarray = field(repr=False)
    excitation: np.ndarray = field(repr=False)
    added_mass: float
    damping: float
    mass: float
    pto_damping: float
    stiffness: float
    radius: float
    kind: str = "device"
    omega_t: float | None = None

    def __post_init__(self):
        size = 2 * self.order + 1
        dtm = np.asarray(self.dtm, dtype=complex)
        radiation = np.asarray(self.radiation, dtype=complex).reshape(-1)
        excitation = np.asarray(self.excitation, dtype=complex).reshape(-1)
        if self.order < 0:
            raise DomainError("truncation order must be non-negative")
        if dtm.shape != (size, size) or radiation.shape != (size,) or excitation.shape != (size,):
            raise DomainError(f"body matrices do not match truncation order {self.order}")
        if self.damping < 0 or self.pto_damping < 0:
            raise DomainError("damping coefficients must be non-negative")
        if not self.stiffness > 0:
            raise DomainError("body stiffness must be positive")
        if self.kind not in BODY_KINDS:
            raise DomainError(f"unknown body kind {self.kind!r}")
        object.__setattr__(self, "dtm", dtm)
        object.__setattr__(self, "radiation", radiation)
        object.__setattr__(self, "excitation", excitation)

    @property
    def size(self) -> int:
        return 2 * self.order + 1

    @property
    def is_pile(self) -> bool:
        return self.kind == "pile"

    def impedance(self) -> complex:
        w = self.omega
        return -w * w * (self.mass + self.added_mass) - 1j * w * (self.pto_damping + self.damping) + self.stiffness

    @classmethod
    def surrogate(cls, radius, draft, omega, added_mass, damping, excitation_per_amplitude,
                  mass, stiffness, pto_damping=0.0, order=DEFAULT_ORDER, kind="device",
                  omega_t=None, const: PhysicalConstants | None = None, depth=None):
        """Axisymmetric small-body surrogate.

        The scattering of a truncated cylinder is that of a bottom-mounted one
        of the same radius, reduced by the fraction 1 - exp(-2 k d) of the wave
        energy found above the draft. Radiation and excitation act through the
        isotropic order only, with the radiated amplitude fixed by the
        radiation damping.
        """
        const = const or PhysicalConstants()
        k = dispersion_wavenumber(omega, depth, const.g)
        cg = group_velocity(omega, depth, const.g)
        orders = np.arange(-order, order + 1)
        shelter = 1.0 - math.exp(-2.0 * k * draft)
        dtm = np.diag(-shelter * jvp(orders, k * radius) / h1vp(orders, k * radius))
        radiation = np.zeros(2 * order + 1, dtype=complex)
        excitation = np.zeros(2 * order + 1, dtype=complex)
        area = math.pi * radius ** 2
        radiation[order] = -math.sqrt(damping * area * k / (4.0 * const.rho * const.g * cg))
        excitation[order] = excitation_per_amplitude
        return cls(omega, order, dtm, radiation, excitation, added_mass, damping, mass,
                   pto_damping, stiffness, radius, kind, omega_t)

    @classmethod
    def from_device(cls, device: OWCDevice, omega, omega_t, order=DEFAULT_ORDER, depth=None):
        added, radiation, _ = device.hydro.at(omega)
        return cls.surrogate(device.geometry.max_radius, device.geometry.draft, omega, added,
                             radiation, device.hydro.excitation_per_amplitude(omega),
                             device.column_mass, device.stiffness,
                             device.Lambda(omega_t) * device.s0, order, "device", omega_t,
                             device.const, depth)


def make_pile(radius, omega, order=DEFAULT_ORDER, draft=None, reference_stiffness=None,
              const: PhysicalConstants | None = None, depth=None) -> BodyHydro:
    """Fixed pile: a body with a very stiff spring and no power take-off.

    Without `draft` the pile spans the whole water depth (30 radii in deep water).
    """
    const = const or PhysicalConstants()
    if not radius > 0:
        raise DomainError("pile radius must be positive")
    if draft is None:
        draft = depth if depth is not None else 30.0 * radius
    base = reference_stiffness if reference_stiffness is not None else const.rho * const.g
    added, damping, excitation = HydroCoefficients.small_body(
        radius, draft, [omega], const, depth).at(omega)
    return BodyHydro.surrogate(radius, draft, omega, added, damping, excitation,
                               const.rho * draft, PILE_STIFFNESS_FACTOR * base, 0.0, order,
                               "pile", None, const, depth)


@dataclass(frozen=True)
class ParkProblem:
    positions: np.ndarray
    bodies: tuple
    wave: MonochromaticWave
    const: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 2)
        bodies = tuple(self.bodies)
        if len(bodies) != len(pos) or not len(bodies):
            raise DomainError("need one body description per position")
        order = {b.order for b in bodies}
        if len(order) != 1:
            raise DomainError("all bodies must share the truncation order")
        for b in bodies:
            if not math.isclose(b.omega, self.wave.omega, rel_tol=1e-10):
                raise DomainError("body data computed at a different frequency than the wave")
        if len(pos) > 1:
            diff = pos[:, None, :] - pos[None, :, :]
            dist = np.hypot(diff[..., 0], diff[..., 1])
            np.fill_diagonal(dist, np.inf)
            if np.min(dist) <= 0:
                raise DomainError("coincident body centres")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "bodies", bodies)

    @property
    def count(self) -> int:
        return len(self.bodies)

    @property
    def order(self) -> int:
        return self.bodies[0].order

    @property
    def omega(self) -> float:
        return self.wave.omega

    @property
    def wavenumber(self) -> float:
        return self.wave.wavenumber(self.const)

    def device_indices(self) -> np.ndarray:
        return np.array([i for i, b in enumerate(self.bodies) if not b.is_pile], dtype=int)

    def moved(self, positions) -> "ParkProblem":
        return replace(self, positions=positions)

    def without_piles(self) -> "ParkProblem":
        keep = self.device_indices()
        return replace(self, positions=self.positions[keep],
                       bodies=tuple(self.bodies[i] for i in keep))


def ambient_incident_coefficients(position, wave: MonochromaticWave, order=DEFAULT_ORDER,
                                  k=None, amplitude=None) -> np.ndarray:
    """Partial-wave coefficients of the undisturbed plane wave about `position`."""
    if k is None:
        k = wave.wavenumber()
    if amplitude is None:
        amplitude = wave.amplitude
    x, y = position
    theta = wave.direction
    orders = np.arange(-order, order + 1)
    phase = np.exp(1j * k * (x * math.cos(theta) + y * math.sin(theta)))
    return amplitude * phase * (1j ** orders) * np.exp(-1j * orders * theta)


def _separation(pos_i, pos_j):
    dx = pos_j[0] - pos_i[0]
    dy = pos_j[1] - pos_i[1]
    dist = math.hypot(dx, dy)
    if dist == 0:
        raise DomainError("basis transformation between coincident centres")
    return dist, math.atan2(dy, dx)


def _toeplitz(values, order):
    """Matrix with entry [n, m] = values[n - m + 2M]."""
    idx = np.arange(-order, order + 1)
    return values[(idx[:, None] - idx[None, :]) + 2 * order]


@dataclass(frozen=True)
class Translation:
    """Graf translation T_ij and its derivatives with respect to body j's centre.

    Derivatives with respect to body i's centre are the negatives.
    """
    matrix: np.ndarray
    d_xj: np.ndarray
    d_yj: np.ndarray

    @property
    def d_xi(self):
        return -self.d_xj

    @property
    def d_yi(self):
        return -self.d_yj


def basis_transformation(pos_i, pos_j, k, order=DEFAULT_ORDER) -> Translation:
    """T_ij[n, m] = H_(n-m)(k L_ij) exp(i (n-m) alpha_ij).

    Row n is body i's outgoing order, column m body j's regular order; alpha_ij
    is the bearing of j seen from i.
    """
    dist, alpha = _separation(pos_i, pos_j)
    nu = np.arange(-2 * order - 1, 2 * order + 2)
    h = hankel1(nu, k * dist)
    core = slice(1, -1)
    rot = np.exp(1j * nu[core] * alpha)
    values = h[core] * rot
    d_dist = 0.5 * k * (h[:-2] - h[2:]) * rot
    d_alpha = 1j * nu[core] * values
    ca, sa = math.cos(alpha), math.sin(alpha)
    d_x = d_dist * ca - d_alpha * sa / dist
    d_y = d_dist * sa + d_alpha * ca / dist
    return Translation(_toeplitz(values, order), _toeplitz(d_x, order), _toeplitz(d_y, order))


@dataclass
class BlockSystem:
    matrix: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    incident: np.ndarray = field(repr=False)
    translations: dict = field(repr=False)
    problem: ParkProblem = field(repr=False)

    @property
    def wave_size(self) -> int:
        return self.problem.count * (2 * self.problem.order + 1)

    def gamma_slice(self, j):
        size = 2 * self.problem.order + 1
        return slice(j * size, (j + 1) * size)

    def zeta_index(self, j) -> int:
        return self.wave_size + j


def assemble_block_system(problem: ParkProblem) -> BlockSystem:
    """Dense [M_gg M_gz; M_zg M_zz] and right-hand side [h1; h2]."""
    n_b = problem.count
    order = problem.order
    size = 2 * order + 1
    k = problem.wavenumber
    omega = problem.omega
    n = n_b * size + n_b
    matrix = np.zeros((n, n), dtype=complex)
    rhs = np.zeros(n, dtype=complex)
    incident = np.array([ambient_incident_coefficients(p, problem.wave, order, k)
                         for p in problem.positions])
    translations = {}
    for j, body in enumerate(problem.bodies):
        gj = slice(j * size, (j + 1) * size)
        zj = n_b * size + j
        matrix[gj, gj] = np.eye(size)
        matrix[gj, zj] = 1j * omega * body.radiation
        matrix[zj, zj] = body.impedance()
        rhs[gj] = body.dtm @ incident[j]
        rhs[zj] = body.excitation @ incident[j]
        for i in range(n_b):
            if i == j:
                continue
            t = basis_transformation(problem.positions[i], problem.positions[j], k, order)
            translations[(i, j)] = t
            gi = slice(i * size, (i + 1) * size)
            matrix[gj, gi] = -body.dtm @ t.matrix.T
            matrix[zj, gi] = -body.excitation @ t.matrix.T
    return BlockSystem(matrix, rhs, incident, translations, problem)


@dataclass(frozen=True)
class ParkState:
    gamma: np.ndarray = field(repr=False)
    zeta: np.ndarray
    residual: float
    system: BlockSystem = field(repr=False, compare=False)
    factors: tuple = field(repr=False, compare=False)


def _factorize(matrix):
    with warnings.catch_warnings():
        warnings.simplefilter("error", LinAlgWarning)
        try:
            lu, piv = lu_factor(matrix)
        except (LinAlgWarning, ValueError) as exc:
            raise SolverError(f"singular park system (condition estimate "
                              f"{np.linalg.cond(matrix):.3g}): {exc}") from exc
    if np.any(np.diag(lu) == 0):
        raise SolverError(f"singular park system (condition estimate {np.linalg.cond(matrix):.3g})")
    return lu, piv


def solve_park(problem: ParkProblem, system: BlockSystem | None = None) -> ParkState:
    """Direct dense solve of the block system."""
    system = system or assemble_block_system(problem)
    factors = _factorize(system.matrix)
    x = lu_solve(factors, system.rhs)
    scale = np.linalg.norm(system.rhs)
    residual = float(np.linalg.norm(system.matrix @ x - system.rhs))
    if residual > 1e-10 * max(scale, np.finfo(float).tiny):
        raise SolverError(f"park solve residual {residual:.3g} exceeds 1e-10 |h| = {1e-10 * scale:.3g}")
    split = system.wave_size
    gamma = x[:split].reshape(problem.count, -1)
    return ParkState(gamma, x[split:], residual, system, factors)


def device_series(problem: ParkProblem, series):
    devices = problem.device_indices()
    if isinstance(series, MeanPowerSeries):
        return {int(i): series for i in devices}
    series = list(series)
    if len(series) != len(devices):
        raise DomainError("need one power series per device")
    return {int(i): s for i, s in zip(devices, series)}


@dataclass(frozen=True)
class ParkPower:
    total: float
    per_device: np.ndarray
    out_of_model: tuple = ()


def park_power(state: ParkState, series, omega=None) -> ParkPower:
    """Mean shaft power of every device (piles excluded)."""
    problem = state.system.problem
    omega = problem.omega if omega is None else omega
    per_body = device_series(problem, series)
    powers = []
    outside = []
    for i, s in per_body.items():
        powers.append(float(s.power(omega, state.zeta[i])))
        if not s.within_model(omega, state.zeta[i]):
            outside.append(i)
    if outside:
        log.warning("%d device(s) beyond the flow-coefficient validity range", len(outside))
    per_device = np.array(powers)
    return ParkPower(float(math.fsum(powers)), per_device, tuple(outside))


def interaction_factor(park_total, isolated, count) -> float:
    """q = park power / (N times isolated power)."""
    if count < 1:
        raise DomainError("interaction factor needs at least one device")
    if isolated == 0:
        return float("nan")
    return park_total / (count * isolated)


def park_power_map(fixed_positions, fixed_bodies, movable: BodyHydro, xs, ys,
                   wave: MonochromaticWave, series, clearance=None,
                   const: PhysicalConstants | None = None):
    """Power of a movable device placed at every grid point next to fixed bodies.

    Returns (movable power, total device power) grids of shape (len(ys), len(xs));
    points closer than `clearance` to a fixed body are NaN.
    """
    const = const or PhysicalConstants()
    fixed_positions = np.asarray(fixed_positions, dtype=float).reshape(-1, 2)
    if clearance is None:
        clearance = movable.radius + max((b.radius for b in fixed_bodies), default=0.0)
    bodies = tuple(fixed_bodies) + (movable,)
    own = np.full((len(ys), len(xs)), np.nan)
    total = np.full((len(ys), len(xs)), np.nan)
    for r, y in enumerate(ys):
        for c, x in enumerate(xs):
            if len(fixed_positions) and np.min(np.hypot(*(fixed_positions - (x, y)).T)) < clearance:
                continue
            problem = ParkProblem(np.vstack([fixed_positions, [x, y]]), bodies, wave, const)
            result = park_power(solve_park(problem), series)
            own[r, c] = result.per_device[-1]
            total[r, c] = result.total
    return own, total


@dataclass(frozen=True)
class EffectiveCoupling:
    """Device-only coupling with scattered waves and piles eliminated."""
    added_mass: np.ndarray
    damping: np.ndarray
    excitation: np.ndarray
    omega: float
    devices: np.ndarray


def effective_coupling(problem: ParkProblem, system: BlockSystem | None = None) -> EffectiveCoupling:
    """Schur complement of the block system onto the device amplitudes."""
    system = system or assemble_block_system(problem)
    devices = problem.device_indices()
    keep = system.wave_size + devices
    rest = np.setdiff1d(np.arange(system.matrix.shape[0]), keep)
    m = system.matrix
    m_kk = m[np.ix_(keep, keep)]
    m_ke = m[np.ix_(keep, rest)]
    m_ek = m[np.ix_(rest, keep)]
    m_ee = m[np.ix_(rest, rest)]
    factors = _factorize(m_ee)
    k_eff = m_kk - m_ke @ lu_solve(factors, m_ek)
    p_eff = system.rhs[keep] - m_ke @ lu_solve(factors, system.rhs[rest])
    w = problem.omega
    own = np.array([-w * w * problem.bodies[i].mass - 1j * w * problem.bodies[i].pto_damping
                    + problem.bodies[i].stiffness for i in devices])
    hydro = k_eff - np.diag(own)
    return EffectiveCoupling(-hydro.real / w ** 2, -hydro.imag / w, p_eff, w, devices)


def coupling_response(coupling: EffectiveCoupling, device: OWCDevice, omega_t) -> np.ndarray:
    """Linear device amplitudes of the reduced system, each device carrying `device`'s PTO."""
    n = len(coupling.devices)
    w = coupling.omega
    speeds = np.broadcast_to(np.asarray(omega_t, dtype=float), (n,))
    own = np.array([-w * w * device.column_mass - 1j * w * device.Lambda(s) * device.s0
                    + device.stiffness for s in speeds])
    matrix = np.diag(own) - w * w * coupling.added_mass - 1j * w * coupling.damping
    try:
        return np.linalg.solve(matrix, coupling.excitation)
    except np.linalg.LinAlgError as exc:
        raise SolverError("singular reduced park system") from exc


@dataclass(frozen=True)
class ParkTimeSeries:
    t: np.ndarray
    zeta: np.ndarray
    power: np.ndarray
    window_start: float

    def mean_power(self) -> np.ndarray:
        w = self.t >= self.window_start - 1e-9
        w[-1] = False
        return self.power[:, w].mean(axis=1)


def timedomain_verify(coupling: EffectiveCoupling, device: OWCDevice, omega_t, periods=8,
                      average_periods=4, samples_per_period=128, rtol=1e-8,
                      atol=1e-10) -> ParkTimeSeries:
    """Integrate the coupled nonlinear column equations of every device.

    All devices share the geometry and turbine of `device`; `omega_t` is a
    scalar or one speed per device.
    """
    n = len(coupling.devices)
    speeds = np.broadcast_to(np.asarray(omega_t, dtype=float), (n,))
    if not 0 < average_periods <= periods:
        raise DomainError("averaging window must lie inside the run")
    models = [ColumnModel(device.geometry, 0.0, 0.0, 0j, coupling.omega, device.turbine,
                          device.curves, float(s), device.cavitation, device.const)
              for s in speeds]
    added = coupling.added_mass
    damping = coupling.damping
    excitation = coupling.excitation
    omega = coupling.omega

    def rhs(t, y):
        zeta, zetadot = y[:n], y[n:]
        mass = added.copy()
        load = damping @ zetadot - (excitation * np.exp(-1j * omega * t)).real
        for i, model in enumerate(models):
            inertia, terms = model.column_terms(t, zeta[i], zetadot[i])
            mass[i, i] += inertia
            load[i] += terms
        try:
            acc = np.linalg.solve(mass, -load)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular park mass matrix at t={t:.4g}") from exc
        return np.concatenate([zetadot, acc])

    period = 2.0 * math.pi / omega
    t = np.linspace(0.0, periods * period, periods * samples_per_period + 1)
    sol = solve_ivp(rhs, (0.0, t[-1]), np.zeros(2 * n), method="DOP853", t_eval=t,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise SolverError(f"park time integration failed: {sol.message}")
    zeta, zetadot = sol.y[:n], sol.y[n:]
    power = np.empty_like(zeta)
    for i, model in enumerate(models):
        v_t = np.array([model.turbine_velocity(z, v) for z, v in zip(zeta[i], zetadot[i])])
        power[i] = torque(v_t, model.omega_t, device.turbine, device.curves, warn=False) * model.omega_t
    return ParkTimeSeries(t, zeta, power, t[-1] - average_periods * period)


@dataclass(frozen=True)
class ParkBuilder:
    """Problem factory for movable devices around fixed piles.

    Devices come first in the body order, piles after them.
    """
    device: BodyHydro
    wave: MonochromaticWave
    pile: BodyHydro | None = None
    pile_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    const: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __call__(self, positions) -> ParkProblem:
        devices = np.asarray(positions, dtype=float).reshape(-1, 2)
        piles = np.asarray(self.pile_positions, dtype=float).reshape(-1, 2)
        if len(piles) and self.pile is None:
            raise DomainError("pile positions given without a pile description")
        bodies = (self.device,) * len(devices) + (self.pile,) * len(piles)
        return ParkProblem(np.vstack([devices, piles]), bodies, self.wave, self.const)

    def isolated(self) -> ParkProblem:
        return ParkProblem(np.zeros((1, 2)), (self.device,), self.wave, self.const)
