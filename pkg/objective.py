import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from geometry import angles_from_displacements, local_components
from models import DomainError, PathAngles, Rotation, Scenario, ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DeltaPair:
    """Angle-dependent objective terms.

    delta1 = cos^2 ph_i (cos^2 ph_r cos^2(th_i + th_r) + sin^2(th_i + th_r))
    delta2 = sinc^2(pi L big_delta1) sinc^2(pi L big_delta2)

    Fields are scalars or equally-shaped arrays.
    """
    delta1: np.ndarray
    delta2: np.ndarray
    big_delta1: np.ndarray
    big_delta2: np.ndarray

    @property
    def product(self):
        return self.delta1 * self.delta2


@dataclass(frozen=True)
class FitnessParams:
    """Penalty weight tau applied to negative local z slacks."""
    tau: float = 10.0

    def __post_init__(self):
        try:
            tau = float(self.tau)
        except (TypeError, ValueError):
            raise ValidationError(f"FitnessParams validation failed: tau must be numeric, got {self.tau!r}")
        if not (math.isfinite(tau) and tau > 0):
            raise ValidationError(f"FitnessParams validation failed: tau must be positive, got {tau}")
        object.__setattr__(self, 'tau', tau)


@dataclass(frozen=True)
class AreaGrid:
    """Rectangular lattice of user positions on the ground plane.

    Points are ordered row-major: x outer, y inner.
    """
    x_values: np.ndarray
    y_values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x_values, dtype=float).reshape(-1)
        y = np.asarray(self.y_values, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValidationError("AreaGrid validation failed: coordinates must be finite")
        object.__setattr__(self, 'x_values', x)
        object.__setattr__(self, 'y_values', y)

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.x_values), len(self.y_values)

    @property
    def size(self) -> int:
        return len(self.x_values) * len(self.y_values)

    @property
    def x_step(self) -> float:
        return float(self.x_values[1] - self.x_values[0]) if len(self.x_values) > 1 else 0.0

    @property
    def y_step(self) -> float:
        return float(self.y_values[1] - self.y_values[0]) if len(self.y_values) > 1 else 0.0

    def row(self, i: int) -> np.ndarray:
        """Points with x = x_values[i], shape (len(y_values), 3)."""
        y = self.y_values
        return np.column_stack([np.full_like(y, self.x_values[i]), y, np.zeros_like(y)])

    @property
    def points(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.x_values, self.y_values, indexing='ij')
        return np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])


@dataclass(frozen=True)
class NullReport:
    """A rotation whose Delta ranges contain a zero of the sinc pattern."""
    axis: int
    v: int
    threshold: float
    delta1_range: Tuple[float, float]
    delta2_range: Tuple[float, float]
    rows_scanned: int


def _axis_values(center: float, extent: float, step: float) -> np.ndarray:
    if extent == 0:
        return np.array([center])
    intervals = max(int(math.ceil(extent / step - 1e-9)), 1)
    if intervals % 2:
        intervals += 1
    return np.linspace(center - extent / 2, center + extent / 2, intervals + 1)


def area_grid(scn: Scenario, x_step: float = 1.0, y_step: Optional[float] = None) -> AreaGrid:
    """Lattice covering the target area with corners and center included.

    Each axis gets an even number of intervals no wider than the step, so the
    point count is odd and the center lies on the lattice. A zero side length
    collapses that axis to the center line.
    """
    y_step = x_step if y_step is None else y_step
    if not (x_step > 0 and y_step > 0):
        raise ValidationError(f"Grid steps must be positive, got ({x_step}, {y_step})")
    return AreaGrid(_axis_values(scn.p_r[0], scn.area_x, x_step),
                    _axis_values(scn.p_r[1], scn.area_y, y_step))


def _delta_arrays(theta_i, theta_r, phi_i, phi_r, l_norm: float) -> DeltaPair:
    total = theta_i + theta_r
    delta1 = np.cos(phi_i) ** 2 * (np.cos(phi_r) ** 2 * np.cos(total) ** 2 + np.sin(total) ** 2)
    big1 = np.cos(theta_i) * np.sin(phi_i) + np.sin(theta_r) * np.cos(phi_r)
    big2 = np.sin(theta_r) * np.sin(phi_r) - np.sin(theta_i) * np.sin(phi_i)
    delta2 = np.sinc(l_norm * big1) ** 2 * np.sinc(l_norm * big2) ** 2
    return DeltaPair(delta1, delta2, big1, big2)


def deltas(angles: PathAngles, l_norm: float) -> DeltaPair:
    """delta1 and delta2 for the given path angles and normalized element length.

    Example:
        >>> d = deltas(PathAngles(0.0, 0.0, 0.0, 0.0), 0.25)
        >>> (float(d.delta1), float(d.delta2))
        (1.0, 1.0)
    """
    return _delta_arrays(np.asarray(angles.theta_i, dtype=float), np.asarray(angles.theta_r, dtype=float),
                         np.asarray(angles.phi_i, dtype=float), np.asarray(angles.phi_r, dtype=float), l_norm)


def _displacements(scn: Scenario, points) -> Tuple[np.ndarray, np.ndarray]:
    p_c = np.asarray(scn.p_c)
    d_b = np.asarray(scn.p_b) - p_c
    d_u = np.asarray(points, dtype=float) - p_c
    if np.linalg.norm(d_b) < 1e-12 or np.any(np.linalg.norm(d_u, axis=-1) < 1e-12):
        logger.error("Degenerate geometry: BS or user at the IRS center")
        raise DomainError("BS or user coincides with the IRS center")
    return d_b, d_u


def _penalty(z_b, z_u, params: FitnessParams):
    return params.tau * (np.maximum(0.0, -z_b) + np.maximum(0.0, -z_u))


def single_values(scn: Scenario, thetas, phis, p_U: Sequence[float], params: FitnessParams) -> np.ndarray:
    """Penalized single-target fitness for broadcastable arrays of angles."""
    d_b, d_u = _displacements(scn, p_U)
    th_i, th_r, ph_i, ph_r, z_b, z_u = angles_from_displacements(d_b, d_u, thetas, phis)
    pair = _delta_arrays(th_i, th_r, ph_i, ph_r, scn.l_norm)
    return pair.product - _penalty(z_b, z_u, params)


def fitness_single(scn: Scenario, rot: Rotation, p_U: Sequence[float], params: FitnessParams) -> float:
    """delta1 * delta2 minus tau times the sum of negative local z slacks."""
    return float(single_values(scn, rot.theta, rot.phi, p_U, params))


def rotation_deltas(scn: Scenario, thetas, phis, p_U: Sequence[float]) -> Tuple[DeltaPair, np.ndarray]:
    """delta1 and delta2 toward one user for broadcastable arrays of angles.

    Returns:
        Tuple (pair, feasible) where feasible marks the rotations that keep
        both p_B and p_U in front of the surface.
    """
    d_b, d_u = _displacements(scn, p_U)
    th_i, th_r, ph_i, ph_r, z_b, z_u = angles_from_displacements(d_b, d_u, thetas, phis)
    return _delta_arrays(th_i, th_r, ph_i, ph_r, scn.l_norm), (z_b >= 0) & (z_u >= 0)


def grid_deltas(scn: Scenario, rot: Rotation, grid: AreaGrid) -> DeltaPair:
    """delta1 and delta2 at every grid point, in grid order."""
    d_b, d_u = _displacements(scn, grid.points)
    th_i, th_r, ph_i, ph_r, _, _ = angles_from_displacements(d_b, d_u, rot.theta, rot.phi)
    return _delta_arrays(th_i, th_r, ph_i, ph_r, scn.l_norm)


def _first_multiple(lo, hi, l_norm: float):
    """Smallest integer v >= 1 with v / L in [lo, hi], or 0 where none exists."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    v = np.maximum(np.ceil(np.maximum(lo, 0.0) * l_norm), 1.0)
    v = np.where(v / l_norm < lo, v + 1.0, v)
    return np.where(v / l_norm <= hi, v, 0.0)


def _null_multiple(lo, hi, l_norm: float):
    """Signed v (+v or -v) whose threshold v / L lies in [lo, hi], or 0."""
    pos = _first_multiple(lo, hi, l_norm)
    neg = _first_multiple(-np.asarray(hi, dtype=float), -np.asarray(lo, dtype=float), l_norm)
    return np.where(pos > 0, pos, -neg)


def find_null(range1: Tuple[float, float], range2: Tuple[float, float],
              l_norm: float) -> Optional[Tuple[int, int, float]]:
    """Locate an integer v >= 1 with +-v/L inside either Delta interval.

    Args:
        range1: (min, max) of Delta_1 over the scanned points.
        range2: (min, max) of Delta_2 over the scanned points.
        l_norm: Normalized element length L.

    Returns:
        (axis, v, threshold) for the first hit, axis 1 checked before axis 2,
        or None when neither interval contains a sinc zero.

    Example:
        >>> find_null((1.9, 2.0), (0.0, 0.1), 0.5)
        (1, 1, 2.0)
    """
    for axis, (lo, hi) in enumerate((range1, range2), start=1):
        v = int(_null_multiple(lo, hi, l_norm))
        if v:
            return axis, abs(v), v / l_norm
    return None


def null_point_scan(scn: Scenario, rot: Rotation, grid: AreaGrid,
                    l_norm: Optional[float] = None) -> Optional[NullReport]:
    """Scan the grid row by row, stopping at the first row that exposes a null.

    The Delta ranges grow with each scanned row; a null is reported as soon
    as some +-v/L falls inside either accumulated range.
    """
    l_norm = scn.l_norm if l_norm is None else l_norm
    if grid.size == 0:
        return None
    d_b, _ = _displacements(scn, grid.row(0))
    ranges = [[math.inf, -math.inf], [math.inf, -math.inf]]
    for i in range(len(grid.x_values)):
        _, d_u = _displacements(scn, grid.row(i))
        th_i, th_r, ph_i, ph_r, _, _ = angles_from_displacements(d_b, d_u, rot.theta, rot.phi)
        pair = _delta_arrays(th_i, th_r, ph_i, ph_r, l_norm)
        for k, big in enumerate((pair.big_delta1, pair.big_delta2)):
            ranges[k][0] = min(ranges[k][0], float(np.min(big)))
            ranges[k][1] = max(ranges[k][1], float(np.max(big)))
        hit = find_null(tuple(ranges[0]), tuple(ranges[1]), l_norm)
        if hit:
            axis, v, threshold = hit
            logger.debug(f"Null point at rotation ({rot.theta:.4f}, {rot.phi:.4f}): axis {axis}, v={v}")
            return NullReport(axis=axis, v=v, threshold=threshold,
                              delta1_range=tuple(ranges[0]), delta2_range=tuple(ranges[1]),
                              rows_scanned=i + 1)
    return None


def fitness_area(scn: Scenario, rot: Rotation, grid: AreaGrid,
                 params: FitnessParams) -> Tuple[float, np.ndarray]:
    """Worst-case fitness over the grid, min of delta1*delta2/r^2 - penalty.

    Scanning stops at the first null. delta1*delta2 then counts as 0, so the
    value is minus the largest penalty over the whole grid,
    -tau*(max(0, -z_B) + max over points of max(0, -z_U)). The reported worst
    point is then the scanned point with the smallest delta2.

    Args:
        scn: Scenario.
        rot: IRS rotation.
        grid: Non-empty user lattice.
        params: Penalty weight.

    Returns:
        Tuple (value, worst_point).

    Raises:
        DomainError: If the grid is empty.
    """
    if grid.size == 0:
        logger.error("fitness_area called with an empty grid")
        raise DomainError("Area grid is empty")

    l_norm = scn.l_norm
    d_b, _ = _displacements(scn, grid.row(0))
    ranges = [[math.inf, -math.inf], [math.inf, -math.inf]]
    best_value = math.inf
    worst_point = None
    low_delta2 = math.inf
    low_delta2_point = None

    for i in range(len(grid.x_values)):
        points = grid.row(i)
        _, d_u = _displacements(scn, points)
        th_i, th_r, ph_i, ph_r, z_b, z_u = angles_from_displacements(d_b, d_u, rot.theta, rot.phi)
        pair = _delta_arrays(th_i, th_r, ph_i, ph_r, l_norm)
        r2 = np.sum(d_u ** 2, axis=-1)
        values = pair.product / r2 - _penalty(z_b, z_u, params)

        k = int(np.argmin(values))
        if values[k] < best_value:
            best_value = float(values[k])
            worst_point = points[k]
        k2 = int(np.argmin(pair.delta2))
        if pair.delta2[k2] < low_delta2:
            low_delta2 = float(pair.delta2[k2])
            low_delta2_point = points[k2]

        for j, big in enumerate((pair.big_delta1, pair.big_delta2)):
            ranges[j][0] = min(ranges[j][0], float(np.min(big)))
            ranges[j][1] = max(ranges[j][1], float(np.max(big)))
        if find_null(tuple(ranges[0]), tuple(ranges[1]), l_norm):
            logger.debug(f"Null point detected after {i + 1} rows at rotation ({rot.theta:.4f}, {rot.phi:.4f})")
            _, d_all = _displacements(scn, grid.points)
            _, _, z_all = local_components(d_all, rot.theta, rot.phi)
            return -float(np.max(_penalty(z_b, z_all, params))), np.array(low_delta2_point)

    return best_value, np.array(worst_point)


def area_values(scn: Scenario, thetas, phis, grid: AreaGrid,
                params: FitnessParams) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate fitness_area for many rotations at once.

    Args:
        thetas, phis: 1-D arrays of equal length R.

    Returns:
        Tuple (values, worst_index): values has shape (R,); worst_index holds
        the grid index of each rotation's worst point (meaningful when no null
        was found). Rotations with a null score minus their largest penalty.
    """
    if grid.size == 0:
        raise DomainError("Area grid is empty")
    thetas = np.asarray(thetas, dtype=float).reshape(-1, 1)
    phis = np.asarray(phis, dtype=float).reshape(-1, 1)
    d_b, d_u = _displacements(scn, grid.points)
    th_i, th_r, ph_i, ph_r, z_b, z_u = angles_from_displacements(d_b, d_u, thetas, phis)
    pair = _delta_arrays(th_i, th_r, ph_i, ph_r, scn.l_norm)
    r2 = np.sum(d_u ** 2, axis=-1)
    values = pair.product / r2 - _penalty(z_b, z_u, params)

    worst = np.argmin(values, axis=1)
    minima = values[np.arange(values.shape[0]), worst]
    null1 = _null_multiple(pair.big_delta1.min(axis=1), pair.big_delta1.max(axis=1), scn.l_norm) != 0
    null2 = _null_multiple(pair.big_delta2.min(axis=1), pair.big_delta2.max(axis=1), scn.l_norm) != 0
    penalty = np.broadcast_to(_penalty(z_b, z_u, params), values.shape)
    return np.where(null1 | null2, -penalty.max(axis=1), minima), worst
