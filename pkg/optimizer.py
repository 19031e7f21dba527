import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from channel import farfield_power_points
from geometry import feasible
from models import HALF_PI, DomainError, Rotation, Scenario, ValidationError
from objective import AreaGrid, FitnessParams, area_values, fitness_area, single_values

logger = logging.getLogger(__name__)

# Ratio above which the closed-form rotation is considered reliable.
DEFAULT_RATIO_THRESHOLD = 10.0
DEFAULT_FIXED_ANGLE = math.radians(10.0)


@dataclass(frozen=True)
class PsoParams:
    """Particle swarm settings.

    Angles (v_clamp, seed_radius) are in radians. ``swap_inertia`` exchanges
    w_ini and w_end; ``per_component_random`` draws the cognitive and social
    factors per dimension instead of one scalar per particle.
    """
    swarm_size: int = 100
    max_iters: int = 30
    c1: float = 2.0
    c2: float = 2.0
    w_ini: float = 0.4
    w_end: float = 0.9
    v_clamp: float = math.radians(5.0)
    seed: int = 0
    seed_fraction: float = 0.5
    seed_radius: float = math.radians(5.0)
    swap_inertia: bool = False
    per_component_random: bool = False
    workers: int = 1

    def __post_init__(self):
        try:
            if int(self.swarm_size) < 1:
                raise ValidationError(f"swarm_size must be >= 1, got {self.swarm_size}")
            if int(self.max_iters) < 1:
                raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
            if self.c1 < 0 or self.c2 < 0:
                raise ValidationError(f"c1 and c2 must be non-negative, got ({self.c1}, {self.c2})")
            if not self.v_clamp > 0:
                raise ValidationError(f"v_clamp must be positive, got {self.v_clamp}")
            if not 0 <= self.seed_fraction <= 1:
                raise ValidationError(f"seed_fraction must lie in [0, 1], got {self.seed_fraction}")
            if self.seed_radius < 0:
                raise ValidationError(f"seed_radius must be non-negative, got {self.seed_radius}")
            if int(self.workers) < 1:
                raise ValidationError(f"workers must be >= 1, got {self.workers}")
        except ValidationError as e:
            raise ValidationError(f"PsoParams validation failed: {str(e)}")
        except (TypeError, ValueError) as e:
            raise ValidationError(f"PsoParams validation failed with unexpected error: {str(e)}")


@dataclass
class Particle:
    """One swarm member: position, velocity and its own best so far."""
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_fitness: float = -math.inf


@dataclass(frozen=True)
class OptimizationReport:
    best_rotation: Rotation
    best_fitness: float
    trace: Tuple[float, ...]
    evaluations: int
    feasible: bool
    method: str
    worst_point: Optional[Tuple[float, float, float]] = None
    irs_center: Optional[Tuple[float, float, float]] = None


@dataclass(frozen=True)
class ClosedFormResult:
    """Closed-form rotation with the large-ratio assumption check."""
    rotation: Rotation
    valid: bool
    ratio: float


def closed_form_rotation(scn: Scenario, p_U: Sequence[float],
                         ratio_threshold: float = DEFAULT_RATIO_THRESHOLD) -> ClosedFormResult:
    """Rotation that points the surface normal at the BS.

    theta = arctan(-(y_B - y_c) / (x_B - x_c))
    phi = arctan(-z_c / sqrt((x_B - x_c)^2 + (y_B - y_c)^2))

    The result is near-optimal when the ratio
    (dx*dy_U - dx_U*dy) * |p_B - p_c| / (z_c (dx^2 + dy^2 - dx*dx_U - dy*dy_U))
    is large; ``valid`` reports whether it exceeds ``ratio_threshold``.

    Raises:
        DomainError: If the BS and the IRS share the same x coordinate.
    """
    x_c, y_c, z_c = scn.p_c
    dx = scn.p_b[0] - x_c
    dy = scn.p_b[1] - y_c
    if dx == 0:
        logger.error("Closed-form rotation undefined: x_B equals x_c")
        raise DomainError("Closed-form rotation requires x_B != x_c")

    theta = math.atan(-dy / dx)
    phi = math.atan(-z_c / math.hypot(dx, dy))

    dx_u = p_U[0] - x_c
    dy_u = p_U[1] - y_c
    denom = z_c * (dx ** 2 + dy ** 2 - dx * dx_u - dy * dy_u)
    numer = (dx * dy_u - dx_u * dy) * math.sqrt(dx ** 2 + dy ** 2 + z_c ** 2)
    ratio = abs(numer / denom) if denom != 0 else math.inf
    valid = ratio > ratio_threshold
    if not valid:
        logger.warning(f"Closed-form large-ratio assumption not met: ratio={ratio:.3f} <= {ratio_threshold}")
    return ClosedFormResult(Rotation(theta, phi), valid, ratio)


def inertia_weight(t: int, params: PsoParams) -> float:
    """Inertia schedule w(t) = w_ini (T - t)/T + w_end t/T.

    Written as a convex combination so that w(0) = w_ini and w(T) = w_end exactly.
    """
    w_ini, w_end = (params.w_end, params.w_ini) if params.swap_inertia else (params.w_ini, params.w_end)
    horizon = params.max_iters
    return (w_ini * (horizon - t) + w_end * t) / horizon


class ParticleSwarm:
    """Box-constrained particle swarm maximizer in one or two dimensions.

    Each particle owns a random stream spawned from the seed by index, so
    results do not depend on evaluation order or thread count. The batch
    fitness callable receives all positions of an iteration, shape (B, D),
    and returns B values.
    """

    def __init__(self, fitness: Callable[[np.ndarray], np.ndarray], lower: np.ndarray, upper: np.ndarray,
                 params: PsoParams, center: Optional[np.ndarray] = None):
        self.fitness = fitness
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.params = params
        self.center = None if center is None else np.clip(np.asarray(center, dtype=float), self.lower, self.upper)
        self.dim = self.lower.shape[0]
        self.rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(params.seed).spawn(params.swarm_size)]
        self.particles: List[Particle] = []
        self.best_position: Optional[np.ndarray] = None
        self.best_fitness = -math.inf
        self.evaluations = 0

    def _initialize(self) -> None:
        p = self.params
        n_seeded = int(round(p.seed_fraction * p.swarm_size)) if self.center is not None else 0
        self.particles = []
        for b, rng in enumerate(self.rngs):
            if b == 0 and n_seeded:
                position = self.center.copy()
            elif b < n_seeded:
                offset = rng.uniform(-p.seed_radius, p.seed_radius, self.dim)
                position = np.clip(self.center + offset, self.lower, self.upper)
            else:
                position = rng.uniform(self.lower, self.upper)
            velocity = rng.uniform(-p.v_clamp, p.v_clamp, self.dim)
            self.particles.append(Particle(position, velocity, position.copy()))

    def _move(self, t: int) -> None:
        p = self.params
        w = inertia_weight(t, p)
        for particle, rng in zip(self.particles, self.rngs):
            size = self.dim if p.per_component_random else 1
            r1 = rng.random(size)
            r2 = rng.random(size)
            velocity = (w * particle.velocity
                        + p.c1 * r1 * (particle.best_position - particle.position)
                        + p.c2 * r2 * (self.best_position - particle.position))
            particle.velocity = np.clip(velocity, -p.v_clamp, p.v_clamp)
            particle.position = np.clip(particle.position + particle.velocity, self.lower, self.upper)

    def _evaluate(self) -> None:
        positions = np.array([particle.position for particle in self.particles])
        values = np.asarray(self.fitness(positions), dtype=float)
        self.evaluations += len(self.particles)
        # index order keeps the first-found best on ties
        for particle, value in zip(self.particles, values):
            if value > particle.best_fitness:
                particle.best_fitness = float(value)
                particle.best_position = particle.position.copy()
            if particle.best_fitness > self.best_fitness:
                self.best_fitness = particle.best_fitness
                self.best_position = particle.best_position.copy()

    def run(self) -> Tuple[np.ndarray, float, List[float]]:
        """Run max_iters iterations; iteration 0 scores the initial swarm.

        Returns:
            Tuple (best_position, best_fitness, trace of global-best fitness).
        """
        self._initialize()
        trace = []
        for t in range(self.params.max_iters):
            if t > 0:
                self._move(t)
            self._evaluate()
            trace.append(self.best_fitness)
            logger.debug(f"PSO iteration {t}: best fitness {self.best_fitness:.6g} at {self.best_position}")
        return self.best_position, self.best_fitness, trace


def _box(pin_theta: Optional[float], pin_phi: Optional[float]) -> List[int]:
    if pin_theta is not None and pin_phi is not None:
        raise ValidationError("At most one rotation angle can be pinned")
    return [d for d, pin in enumerate((pin_theta, pin_phi)) if pin is None]


def _expand(positions: np.ndarray, free: List[int], pin_theta, pin_phi) -> Tuple[np.ndarray, np.ndarray]:
    """Map free-dimension positions (B, D) to full (theta, phi) arrays."""
    full = np.empty((positions.shape[0], 2))
    full[:, 0] = pin_theta if pin_theta is not None else 0.0
    full[:, 1] = pin_phi if pin_phi is not None else 0.0
    full[:, free] = positions
    return full[:, 0], full[:, 1]


def _run_swarm(evaluate_full: Callable[[np.ndarray, np.ndarray], np.ndarray], scn: Scenario,
               target: Sequence[float], params: PsoParams,
               pin_theta: Optional[float], pin_phi: Optional[float]) -> Tuple[Rotation, float, List[float], int]:
    free = _box(pin_theta, pin_phi)
    try:
        seed_rot = closed_form_rotation(scn, target).rotation.as_array()
    except DomainError:
        seed_rot = None
    center = None if seed_rot is None else seed_rot[free]

    def batch(positions: np.ndarray) -> np.ndarray:
        thetas, phis = _expand(positions, free, pin_theta, pin_phi)
        return evaluate_full(thetas, phis)

    bound = np.full(len(free), HALF_PI)
    swarm = ParticleSwarm(batch, -bound, bound, params, center)
    position, fitness, trace = swarm.run()
    thetas, phis = _expand(position[None, :], free, pin_theta, pin_phi)
    return Rotation(thetas[0], phis[0]), fitness, trace, swarm.evaluations


def pso_single(scn: Scenario, p_U: Sequence[float], params: PsoParams, fp: FitnessParams,
               pin_theta: Optional[float] = None, pin_phi: Optional[float] = None) -> OptimizationReport:
    """Maximize the penalized single-target fitness with a particle swarm.

    Half of the swarm (``seed_fraction``) starts around the closed-form
    rotation, the first particle exactly on it. Pinning one angle turns the
    search into a 1-D swarm over the other.

    Args:
        scn: Scenario.
        p_U: Target user position.
        params: Swarm settings.
        fp: Penalty weight.
        pin_theta: Fixed azimuth, or None to optimize it.
        pin_phi: Fixed elevation, or None to optimize it.

    Returns:
        OptimizationReport; evaluations equal swarm_size * max_iters.
    """
    def evaluate(thetas, phis):
        return single_values(scn, thetas, phis, p_U, fp)

    rot, fitness, trace, evaluations = _run_swarm(evaluate, scn, p_U, params, pin_theta, pin_phi)
    ok = feasible(scn, rot, p_U).feasible
    if not ok:
        logger.warning(f"PSO best rotation {rot.to_degrees()} is infeasible")
    logger.info(f"PSO single-target finished: best fitness {fitness:.6f} at {rot.to_degrees()} deg")
    return OptimizationReport(best_rotation=rot, best_fitness=fitness, trace=tuple(trace),
                              evaluations=evaluations, feasible=ok, method='pso_single')


def _grid_feasible(scn: Scenario, rot: Rotation, grid: AreaGrid) -> bool:
    return all(feasible(scn, rot, point).feasible for point in grid.points)


def pso_area(scn: Scenario, grid: AreaGrid, params: PsoParams, fp: FitnessParams,
             pin_theta: Optional[float] = None, pin_phi: Optional[float] = None) -> OptimizationReport:
    """Maximize the worst-case fitness over the grid with the same swarm dynamics.

    Each particle is scored with fitness_area (row scan with early exit on a
    null). With ``params.workers > 1`` the particles of one iteration are
    scored on a thread pool; results are reduced in particle order.
    """
    if grid.size == 0:
        raise DomainError("Area grid is empty")

    def score(angles: Tuple[float, float]) -> float:
        return fitness_area(scn, Rotation(*angles), grid, fp)[0]

    def evaluate(thetas, phis):
        pairs = list(zip(thetas.tolist(), phis.tolist()))
        if params.workers > 1:
            with ThreadPoolExecutor(max_workers=params.workers) as pool:
                return np.array(list(pool.map(score, pairs)))
        return np.array([score(pair) for pair in pairs])

    rot, fitness, trace, evaluations = _run_swarm(evaluate, scn, scn.p_r, params, pin_theta, pin_phi)
    _, worst = fitness_area(scn, rot, grid, fp)
    ok = _grid_feasible(scn, rot, grid)
    if not ok:
        logger.warning(f"PSO area best rotation {rot.to_degrees()} is infeasible for part of the grid")
    logger.info(f"PSO area finished: best fitness {fitness:.6g} at {rot.to_degrees()} deg")
    return OptimizationReport(best_rotation=rot, best_fitness=fitness, trace=tuple(trace),
                              evaluations=evaluations, feasible=ok, method='pso_area',
                              worst_point=tuple(float(v) for v in worst))


def rotation_lattice(step: float) -> np.ndarray:
    """Uniform angles over [-pi/2, pi/2] with both endpoints and spacing <= step."""
    if not step > 0:
        raise ValidationError(f"Exhaustive-search step must be positive, got {step}")
    count = int(math.ceil(math.pi / step - 1e-9)) + 1
    return np.linspace(-HALF_PI, HALF_PI, count)


def exhaustive_search(scn: Scenario, target, step: float, fp: FitnessParams,
                      pin_theta: Optional[float] = None, pin_phi: Optional[float] = None) -> OptimizationReport:
    """Brute-force argmax over a uniform (theta, phi) lattice.

    Args:
        scn: Scenario.
        target: A user position (3-vector) or an AreaGrid.
        step: Lattice spacing in radians.
        fp: Penalty weight.
        pin_theta, pin_phi: Optionally fix one angle.

    Returns:
        OptimizationReport; ties go to the first lattice point in row-major
        (theta outer, phi inner) order and the trace holds the running best
        after each theta row.
    """
    _box(pin_theta, pin_phi)
    lattice = rotation_lattice(step)
    thetas = lattice if pin_theta is None else np.array([pin_theta])
    phis = lattice if pin_phi is None else np.array([pin_phi])
    area_mode = isinstance(target, AreaGrid)

    best_value = -math.inf
    best_index = (0, 0)
    trace = []
    for i, theta in enumerate(thetas):
        if area_mode:
            row, _ = area_values(scn, np.full_like(phis, theta), phis, target, fp)
        else:
            row = single_values(scn, theta, phis, target, fp)
        j = int(np.argmax(row))
        if row[j] > best_value:
            best_value = float(row[j])
            best_index = (i, j)
        trace.append(best_value)

    rot = Rotation(thetas[best_index[0]], phis[best_index[1]])
    if area_mode:
        _, worst = fitness_area(scn, rot, target, fp)
        ok = _grid_feasible(scn, rot, target)
        worst_point = tuple(float(v) for v in worst)
    else:
        ok = feasible(scn, rot, target).feasible
        worst_point = None
    logger.info(f"Exhaustive search over {len(thetas) * len(phis)} rotations: best {best_value:.6g} "
                f"at {rot.to_degrees()} deg")
    return OptimizationReport(best_rotation=rot, best_fitness=best_value, trace=tuple(trace),
                              evaluations=len(thetas) * len(phis), feasible=ok,
                              method='exhaustive', worst_point=worst_point)


def exhaustive_placement(scn: Scenario, target, y_values: Sequence[float],
                         rot: Rotation = Rotation(0.0, 0.0)) -> OptimizationReport:
    """Move the IRS along y at a fixed rotation, maximizing far-field SNR.

    For a user position the score is the SNR there; for an AreaGrid it is
    the minimum SNR over the grid. Placements where the BS or any user is
    behind the surface score -inf.

    Returns:
        OptimizationReport with best_fitness the best linear SNR and
        irs_center the chosen center.
    """
    area_mode = isinstance(target, AreaGrid)
    points = target.points if area_mode else np.asarray(target, dtype=float)[None, :]
    best_value = -math.inf
    best_center = None
    trace = []
    for y_c in y_values:
        moved = scn.with_changes(p_c=(scn.p_c[0], float(y_c), scn.p_c[2]))
        if all(feasible(moved, rot, point).feasible for point in points):
            snr = farfield_power_points(moved, rot, points) / moved.noise
            value = float(np.min(snr))
        else:
            value = -math.inf
        if value > best_value:
            best_value = value
            best_center = moved.p_c
        trace.append(best_value)

    if best_center is None:
        logger.warning("No feasible IRS placement found; keeping the configured center")
        best_center = scn.p_c
    worst_point = None
    if area_mode and math.isfinite(best_value):
        moved = scn.with_changes(p_c=best_center)
        worst = points[int(np.argmin(farfield_power_points(moved, rot, points)))]
        worst_point = tuple(float(v) for v in worst)
    logger.info(f"IRS placement search over {len(trace)} positions: best center {best_center}")
    return OptimizationReport(best_rotation=rot, best_fitness=best_value, trace=tuple(trace),
                              evaluations=len(trace), feasible=math.isfinite(best_value),
                              method='placement', worst_point=worst_point, irs_center=best_center)
