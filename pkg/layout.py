# layout.py
"""Adjoint gradient of park power and the projected-gradient layout optimizer."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_solve

from errors import DomainError, LayoutInfeasibleError, SolverError
from park import ParkState, device_series, park_power, solve_park

log = logging.getLogger(__name__)

INSIDE_TOL = 1e-12
OVERLAP_SLACK = 1e-12
# densest packing of equal discs in the plane
PACKING_DENSITY = math.pi / (2.0 * math.sqrt(3.0))


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


@dataclass(frozen=True)
class LayoutDomain:
    """Convex polygon available to device centres, counter-clockwise vertices."""
    vertices: np.ndarray
    d_min: float
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if len(v) < 3:
            raise DomainError("a layout domain needs at least three vertices")
        if not self.d_min > 0:
            raise DomainError("minimum distance must be positive")
        signed = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if abs(signed) <= 1e-12 * max(1.0, np.ptp(v) ** 2):
            raise DomainError("degenerate layout polygon")
        if signed < 0:
            v = v[::-1].copy()
        n = len(v)
        for i in range(n):
            if _cross(v[i], v[(i + 1) % n], v[(i + 2) % n]) < 0:
                raise DomainError("layout polygon is not convex")
        object.__setattr__(self, "vertices", v)

    @property
    def area(self) -> float:
        v = self.vertices
        return 0.5 * float(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1]))

    @property
    def perimeter(self) -> float:
        return float(np.sum(np.hypot(*(np.roll(self.vertices, -1, axis=0) - self.vertices).T)))

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        c = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        return np.array([np.sum((v[:, 0] + w[:, 0]) * c), np.sum((v[:, 1] + w[:, 1]) * c)]) / (6.0 * self.area)

    @property
    def scale(self) -> float:
        return float(np.ptp(self.vertices))

    def contains(self, points, tol=None) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        tol = INSIDE_TOL * max(1.0, self.scale) if tol is None else tol
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        edge = w - v
        length = np.hypot(edge[:, 0], edge[:, 1])
        # signed distance of every point to every edge line, positive inside
        dist = (edge[None, :, 0] * (pts[:, None, 1] - v[None, :, 1])
                - edge[None, :, 1] * (pts[:, None, 0] - v[None, :, 0])) / length[None, :]
        return np.all(dist >= -tol, axis=1)


def _project_point(p, domain: LayoutDomain):
    v = domain.vertices
    best, best_d2 = None, np.inf
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        edge = b - a
        t = float(np.dot(p - a, edge) / np.dot(edge, edge))
        # t outside [0, 1] means the nearest point of this edge is a vertex
        foot = a + min(max(t, 0.0), 1.0) * edge
        d2 = float(np.dot(p - foot, p - foot))
        if d2 < best_d2:
            best, best_d2 = foot, d2
    return best


def project(points, domain: LayoutDomain) -> np.ndarray:
    """Euclidean projection of every point onto the polygon."""
    pts = np.array(points, dtype=float).reshape(-1, 2)
    inside = domain.contains(pts)
    for i in np.flatnonzero(~inside):
        pts[i] = _project_point(pts[i], domain)
    return pts


def pairwise_distances(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)
    return dist


def overlapping_pairs(points, d_min):
    dist = pairwise_distances(points)
    i, j = np.nonzero(np.triu(dist < d_min - OVERLAP_SLACK, 1))
    return list(zip(i.tolist(), j.tolist()))


def is_admissible(points, domain: LayoutDomain, tol=1e-9) -> bool:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if not np.all(domain.contains(pts, tol)):
        return False
    return len(pts) < 2 or float(pairwise_distances(pts).min()) >= domain.d_min - tol


def _uniform_in_polygon(rng, domain: LayoutDomain):
    lo = domain.vertices.min(axis=0)
    hi = domain.vertices.max(axis=0)
    while True:
        p = rng.uniform(lo, hi)
        if domain.contains(p, 0.0)[0]:
            return p


def _check_packing(domain: LayoutDomain, count):
    # discs of radius d_min/2 centred in the polygon fit in its d_min/2 offset
    r = 0.5 * domain.d_min
    room = domain.area + domain.perimeter * r + math.pi * r * r
    if count * math.pi * r * r > PACKING_DENSITY * room:
        raise LayoutInfeasibleError(f"{count} devices with d_min={domain.d_min} cannot fit the domain")


def sample_random_layout(domain: LayoutDomain, count, seed, max_attempts=2000,
                         restarts=50) -> np.ndarray:
    """Uniform rejection sampling respecting the minimum distance."""
    if count < 1:
        raise DomainError("need at least one device")
    _check_packing(domain, count)
    rng = np.random.default_rng(seed)
    for restart in range(restarts):
        points = []
        for _ in range(count):
            for _ in range(max_attempts):
                p = _uniform_in_polygon(rng, domain)
                if all(math.hypot(*(p - q)) >= domain.d_min for q in points):
                    points.append(p)
                    break
            else:
                break
        if len(points) == count:
            return np.array(points)
        log.debug("random layout seed %s: restart %d after placing %d devices", seed, restart, len(points))
    raise LayoutInfeasibleError(f"could not place {count} devices after {restarts} restarts")


def symmetric_layout(domain: LayoutDomain, count, seed, max_attempts=2000,
                     restarts=50) -> np.ndarray:
    """Random layout mirror-symmetric about the horizontal line through the centroid.

    The domain itself must be symmetric about that line.
    """
    if count < 1:
        raise DomainError("need at least one device")
    _check_packing(domain, count)
    yc = domain.centroid[1]
    mirror = domain.vertices * (1.0, -1.0) + (0.0, 2.0 * yc)
    if not np.all(domain.contains(mirror, 1e-9 * max(1.0, domain.scale))):
        raise DomainError("domain is not symmetric about its horizontal centroid line")
    rng = np.random.default_rng(seed)
    d_min = domain.d_min
    for restart in range(restarts):
        points = []

        def admissible(q):
            return all(math.hypot(*(q - o)) >= d_min for o in points)

        if count % 2:
            lo, hi = domain.vertices[:, 0].min(), domain.vertices[:, 0].max()
            for _ in range(max_attempts):
                p = np.array([rng.uniform(lo, hi), yc])
                if domain.contains(p, 0.0)[0]:
                    points.append(p)
                    break
        while len(points) < count:
            for _ in range(max_attempts):
                p = _uniform_in_polygon(rng, domain)
                if p[1] - yc < 0.5 * d_min:
                    continue
                q = np.array([p[0], 2.0 * yc - p[1]])
                if admissible(p) and admissible(q):
                    points.extend([p, q])
                    break
            else:
                break
        if len(points) == count:
            return np.array(points)
        log.debug("symmetric layout seed %s: restart %d", seed, restart)
    raise LayoutInfeasibleError(f"could not place {count} devices symmetrically")


@dataclass
class RandomStudy:
    layouts: list
    powers: np.ndarray
    seeds: list

    @property
    def best(self) -> int:
        return int(np.argmax(self.powers))

    @property
    def worst(self) -> int:
        return int(np.argmin(self.powers))

    @property
    def spread(self) -> float:
        return float(np.max(self.powers) - np.min(self.powers))


def best_random_layout(domain: LayoutDomain, count, seeds, evaluate, executor=None) -> RandomStudy:
    """Sample one layout per seed and rank them by `evaluate(positions)` (total power)."""
    seeds = list(seeds)
    if not seeds:
        raise DomainError("need at least one seed")
    layouts = [sample_random_layout(domain, count, s) for s in seeds]
    mapped = executor.map(evaluate, layouts) if executor is not None else map(evaluate, layouts)
    return RandomStudy(layouts, np.array(list(mapped), dtype=float), seeds)


def equilateral_triangle(edge, centre=(0.0, 0.0)) -> np.ndarray:
    """Vertices of an equilateral triangle with one vertex pointing along -x."""
    if not edge > 0:
        raise DomainError("triangle edge must be positive")
    r = edge / math.sqrt(3.0)
    angles = np.pi + np.array([0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0])
    return np.column_stack([centre[0] + r * np.cos(angles), centre[1] + r * np.sin(angles)])


def _line_intersection(p1, d1, p2, d2):
    det = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(det) < 1e-14:
        raise DomainError("parallel boundary lines in domain construction")
    s = ((p2[0] - p1[0]) * d2[1] - (p2[1] - p1[1]) * d2[0]) / det
    return p1 + s * d1


def build_truncated_triangle(piles, pile_radius, device_radius, d_min) -> LayoutDomain:
    """Triangle between three piles, shrunk by the device radius, corners cut by
    the tangents to the pile-clearance circles."""
    piles = np.asarray(piles, dtype=float).reshape(3, 2)
    if pile_radius < 0 or device_radius < 0:
        raise DomainError("radii must be non-negative")
    if _cross(*piles) < 0:
        piles = piles[::-1].copy()
    clearance = pile_radius + device_radius
    lines = []
    for i in range(3):
        v, nxt, prv = piles[i], piles[(i + 1) % 3], piles[(i - 1) % 3]
        bisector = (nxt - v) / np.linalg.norm(nxt - v) + (prv - v) / np.linalg.norm(prv - v)
        bisector /= np.linalg.norm(bisector)
        # corner cut, perpendicular to the bisector, tangent to the clearance circle
        lines.append((v + clearance * bisector, np.array([-bisector[1], bisector[0]]), bisector))
        edge = (nxt - v) / np.linalg.norm(nxt - v)
        inward = np.array([-edge[1], edge[0]])
        lines.append((v + device_radius * inward, edge, inward))
    corners = []
    for a, b in zip(lines, lines[1:] + lines[:1]):
        corners.append(_line_intersection(a[0], a[1], b[0], b[1]))
    vertices = []
    for c in corners:
        if not vertices or np.hypot(*(c - vertices[-1])) > 1e-9 * max(1.0, np.ptp(piles)):
            vertices.append(c)
    if len(vertices) > 1 and np.hypot(*(vertices[0] - vertices[-1])) <= 1e-9 * max(1.0, np.ptp(piles)):
        vertices.pop()
    vertices = np.array(vertices)
    for point, _, normal in lines:
        if np.any((vertices - point) @ normal < -1e-9 * max(1.0, np.ptp(piles))):
            raise DomainError("devices too large for the space between the piles")
    meta = {"piles": piles.tolist(), "pile_radius": pile_radius, "device_radius": device_radius,
            "edge": float(np.linalg.norm(piles[1] - piles[0]))}
    try:
        return LayoutDomain(vertices, d_min, meta)
    except DomainError as exc:
        raise DomainError(f"devices too large for the space between the piles: {exc}") from exc


def triangle_domain(edge, d_min, device_radius=0.0, centre=(0.0, 0.0)) -> LayoutDomain:
    return build_truncated_triangle(equilateral_triangle(edge, centre), 0.0, device_radius, d_min)


@dataclass(frozen=True)
class AdjointState:
    lam: np.ndarray = field(repr=False)
    mu: np.ndarray
    rhs: np.ndarray = field(repr=False)
    residual: float


def adjoint_solve(state: ParkState, series, omega=None) -> AdjointState:
    """Solve M^H [lambda; mu] = [0; h~] for the cost J = -(park power)."""
    system = state.system
    problem = system.problem
    omega = problem.omega if omega is None else omega
    rhs = np.zeros(system.matrix.shape[0], dtype=complex)
    for i, s in device_series(problem, series).items():
        rhs[system.zeta_index(i)] = s.amplitude_gradient(omega, state.zeta[i])
    w = lu_solve(state.factors, rhs, trans=2)
    scale = np.linalg.norm(rhs)
    residual = float(np.linalg.norm(system.matrix.conj().T @ w - rhs))
    if residual > 1e-10 * max(scale, np.finfo(float).tiny):
        raise SolverError(f"adjoint residual {residual:.3g} exceeds 1e-10 |h~|")
    split = system.wave_size
    return AdjointState(w[:split].reshape(problem.count, -1), w[split:], rhs, residual)


def gradient(state: ParkState, adjoint: AdjointState) -> np.ndarray:
    """dJ/dx and dJ/dy of every body, J = -(park power); shape (N, 2)."""
    system = state.system
    problem = system.problem
    k = problem.wavenumber
    theta = problem.wave.direction
    grad = np.zeros((problem.count, 2))
    u = np.array([b.dtm.conj().T @ adjoint.lam[j] + b.excitation.conj() * adjoint.mu[j]
                  for j, b in enumerate(problem.bodies)])
    for (i, j), t in system.translations.items():
        gx = -np.real(np.vdot(u[j], t.d_xj.T @ state.gamma[i]))
        gy = -np.real(np.vdot(u[j], t.d_yj.T @ state.gamma[i]))
        grad[j] += (gx, gy)
        grad[i] -= (gx, gy)
    for j in range(problem.count):
        phase = np.vdot(u[j], system.incident[j])
        grad[j, 0] -= np.real(1j * k * math.cos(theta) * phase)
        grad[j, 1] -= np.real(1j * k * math.sin(theta) * phase)
    return grad


@dataclass(frozen=True)
class OptimizerConfig:
    step: float | None = None
    armijo: float = 1e-4
    backtrack: float = 0.5
    tol: float = 1e-3
    maxit: int = 200
    max_shrinks: int = 60

    def __post_init__(self):
        if self.step is not None and not self.step > 0:
            raise DomainError("step size must be positive")
        if not 0 < self.armijo < 1 or not 0 < self.backtrack < 1:
            raise DomainError("Armijo constant and backtracking factor must lie in (0, 1)")
        if self.maxit < 1 or self.max_shrinks < 1:
            raise DomainError("iteration caps must be at least one")


TRACE_COLUMNS = ("iteration", "cost", "grad_norm", "backtracks", "overlap_shrinks",
                 "max_d", "step_norm", "accepted")


@dataclass
class OptimizerTrace:
    rows: list = field(default_factory=list)
    layouts: list = field(default_factory=list)

    def record(self, layout, **row):
        self.rows.append({c: row[c] for c in TRACE_COLUMNS})
        self.layouts.append(np.array(layout))

    def accepted_costs(self) -> np.ndarray:
        return np.array([r["cost"] for r in self.rows if r["accepted"]])


@dataclass
class LayoutResult:
    positions: np.ndarray
    cost: float
    state: ParkState = field(repr=False)
    trace: OptimizerTrace = field(repr=False)
    status: str
    iterations: int
    step: float


def evaluate_layout(positions, factory, series):
    """Solve the park for device `positions`; returns (state, cost = -power)."""
    state = solve_park(factory(positions))
    return state, -park_power(state, series).total


def optimize_layout(initial, factory, domain: LayoutDomain, series,
                    config: OptimizerConfig = OptimizerConfig()) -> LayoutResult:
    """Projected gradient descent with per-device step scaling.

    `factory(positions)` builds the park problem with the movable devices
    first; extra bodies (piles) stay fixed.
    """
    x = np.array(initial, dtype=float).reshape(-1, 2)
    n = len(x)
    if not is_admissible(x, domain):
        raise DomainError("initial layout is not admissible")
    state, cost = evaluate_layout(x, factory, series)
    trace = OptimizerTrace()
    step = config.step
    status = "maxit"
    it = 0
    for it in range(1, config.maxit + 1):
        adjoint = adjoint_solve(state, series)
        g = gradient(state, adjoint)[:n]
        norms = np.hypot(g[:, 0], g[:, 1])
        if step is None:
            step = 0.1 * domain.d_min / norms.max() if norms.max() > 0 else 1.0
            log.info("step size set to %.4g", step)
        d = np.ones(n)
        backtracks = shrinks = 0
        while True:
            trial = project(x - step * d[:, None] * g, domain)
            pairs = overlapping_pairs(trial, domain.d_min)
            while pairs:
                if shrinks >= config.max_shrinks:
                    break
                for pair in pairs:
                    d[list(pair)] *= config.backtrack
                shrinks += 1
                trial = project(x - step * d[:, None] * g, domain)
                pairs = overlapping_pairs(trial, domain.d_min)
            if pairs:
                status = "stagnation"
                break
            trial_state, trial_cost = evaluate_layout(trial, factory, series)
            move = float(np.sum((trial - x) ** 2))
            if trial_cost - cost <= -config.armijo * move / (d.max() * step):
                break
            d *= config.backtrack
            backtracks += 1
            if backtracks > config.max_shrinks:
                status = "stagnation"
                break
        if status == "stagnation":
            log.warning("layout line search stagnated at iteration %d", it)
            trace.record(x, iteration=it, cost=cost, grad_norm=float(np.linalg.norm(g)),
                         backtracks=backtracks, overlap_shrinks=shrinks, max_d=float(d.max()),
                         step_norm=0.0, accepted=False)
            break
        err = abs(cost - trial_cost)
        step_norm = math.sqrt(move)
        x, state, cost = trial, trial_state, trial_cost
        trace.record(x, iteration=it, cost=cost, grad_norm=float(np.linalg.norm(g)),
                     backtracks=backtracks, overlap_shrinks=shrinks, max_d=float(d.max()),
                     step_norm=step_norm, accepted=True)
        log.info("layout iteration %d: power %.6g W, |g| %.3g, backtracks %d",
                 it, -cost, np.linalg.norm(g), backtracks)
        if err < config.tol:
            status = "converged"
            break
    return LayoutResult(x, cost, state, trace, status, it, step)
