import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from models import (
    HALF_PI, ArraySpec, DomainError, Feasibility, OrientationFrame, PathAngles, Rotation, Scenario
)

logger = logging.getLogger(__name__)

# Fixed BS base directions: rows advance along +y, columns along -x.
BS_ROW_DIR = np.array([0.0, 1.0, 0.0])
BS_COL_DIR = np.array([-1.0, 0.0, 0.0])

# In-plane magnitude (relative to |d|) below which a direction counts as along the normal.
NORMAL_INCIDENCE_TOL = 1e-12
# Minimum separation between the IRS center and the BS or a user.
DEGENERATE_DIST = 1e-12


def _check_box(theta, phi) -> None:
    theta = np.asarray(theta)
    phi = np.asarray(phi)
    if np.any(np.abs(theta) > HALF_PI) or np.any(np.abs(phi) > HALF_PI) \
            or not (np.all(np.isfinite(theta)) and np.all(np.isfinite(phi))):
        logger.error(f"Rotation outside feasible box: theta={theta}, phi={phi}")
        raise DomainError("Rotation lies outside [-pi/2, pi/2]^2")


def frame_vectors(theta, phi) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Local axes (e_x, e_y, e_z) for broadcastable arrays of angles.

    Each returned array has shape ``broadcast(theta, phi).shape + (3,)``.
    """
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    e_x = np.stack([ct * sp, -st * sp, -cp], axis=-1)
    e_y = np.stack([st, ct, np.zeros_like(theta)], axis=-1)
    e_z = np.stack([ct * cp, -st * cp, sp], axis=-1)
    return e_x, e_y, e_z


def orientation_frame(rot: Rotation) -> OrientationFrame:
    """Build the surface normal, element base directions and local axes.

    Args:
        rot: IRS rotation inside the feasible box.

    Returns:
        OrientationFrame with k = e_z, m_r = e_y, m_c = -e_x and Q = [e_x e_y e_z].

    Raises:
        DomainError: If the rotation lies outside [-pi/2, pi/2]^2.
    """
    _check_box(rot.theta, rot.phi)
    e_x, e_y, e_z = frame_vectors(rot.theta, rot.phi)
    k = e_z.copy()
    m_r = e_y.copy()
    m_c = -e_x
    q = np.column_stack([e_x, e_y, e_z])
    return OrientationFrame(k=k, m_r=m_r, m_c=m_c, e_x=e_x, e_y=e_y, e_z=e_z, q=q)


def index_map(n: int, n_cols: int) -> Tuple[int, int]:
    """Zero-based (row, column) indices of the 1-based element number n.

    Example:
        >>> index_map(5, 3)
        (1, 1)
    """
    row = (n - 1) // n_cols
    col = n - n_cols * row - 1
    return row, col


def _base_directions(rot: Optional[Rotation]) -> Tuple[np.ndarray, np.ndarray]:
    """Directions stepped by (column, row) indices; None selects the BS basis."""
    if rot is None:
        return BS_COL_DIR, BS_ROW_DIR
    frame = orientation_frame(rot)
    return frame.m_r, frame.m_c


def element_positions(spec: ArraySpec, p_1: Sequence[float], rot: Optional[Rotation] = None) -> np.ndarray:
    """Positions of every element of a rectangular array.

    Element n sits at p_1 + N_c(n) * l * u_col + N_r(n) * l * u_row, where the IRS
    steps columns along m_r and rows along m_c, and the BS steps columns along
    (-1, 0, 0) and rows along (0, 1, 0).

    Args:
        spec: Array layout.
        p_1: Position of element n = 1.
        rot: IRS rotation, or None for the BS array.

    Returns:
        Array of shape (spec.count, 3), ordered by element number.
    """
    u_col, u_row = _base_directions(rot)
    n = np.arange(1, spec.count + 1)
    rows = (n - 1) // spec.n_cols
    cols = n - spec.n_cols * rows - 1
    offsets = spec.spacing * (cols[:, None] * u_col + rows[:, None] * u_row)
    return np.asarray(p_1, dtype=float) + offsets


def _half_extent(spec: ArraySpec, rot: Optional[Rotation]) -> np.ndarray:
    u_col, u_row = _base_directions(rot)
    return spec.spacing * ((spec.n_cols - 1) / 2 * u_col + (spec.n_rows - 1) / 2 * u_row)


def array_center(spec: ArraySpec, p_1: Sequence[float], rot: Optional[Rotation] = None) -> np.ndarray:
    """Geometric center of the array given its first element."""
    return np.asarray(p_1, dtype=float) + _half_extent(spec, rot)


def first_element_position(spec: ArraySpec, center: Sequence[float],
                           rot: Optional[Rotation] = None) -> np.ndarray:
    """First element position that puts the array center at ``center``."""
    return np.asarray(center, dtype=float) - _half_extent(spec, rot)


def local_coordinates(p: Sequence[float], p_c: Sequence[float], rot: Rotation) -> np.ndarray:
    """Coordinates of p in the IRS local frame, Q^T (p - p_c).

    ``p`` may carry leading dimensions, e.g. shape (K, 3).
    """
    frame = orientation_frame(rot)
    d = np.asarray(p, dtype=float) - np.asarray(p_c, dtype=float)
    return d @ frame.q


def _components(d: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    d = np.asarray(d, dtype=float)
    return d[..., 0], d[..., 1], d[..., 2]


def local_components(d, theta, phi) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Expanded local coordinates (x_L, y_L, z_L) of displacement(s) d.

    Broadcasts ``d[..., i]`` against the angle arrays, so one displacement can
    be evaluated for many rotations or many displacements for one rotation.
    """
    dx, dy, dz = _components(d)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    x_l = dx * ct * sp - dy * st * sp - dz * cp
    y_l = dx * st + dy * ct
    z_l = dx * ct * cp - dy * st * cp + dz * sp
    return x_l, y_l, z_l


def _along_normal(num: np.ndarray, den: np.ndarray, norm: np.ndarray) -> np.ndarray:
    return np.hypot(num, den) <= NORMAL_INCIDENCE_TOL * norm


def _azimuth(num: np.ndarray, den: np.ndarray, norm: np.ndarray) -> np.ndarray:
    """Reflected azimuth atan2(num, den); 0 when the user lies on the normal."""
    return np.where(_along_normal(num, den, norm), 0.0, np.arctan2(num, den))


def _incident_azimuth(x_b: np.ndarray, y_b: np.ndarray, norm: np.ndarray, theta_r: np.ndarray) -> np.ndarray:
    """Incident azimuth atan2(-y_B, x_B).

    With the BS on the normal the azimuth is undefined and delta1 depends on
    the direction of approach; the limit pi/2 - theta_r is taken, where
    theta_i + theta_r = pi/2 and delta1 reaches 1. The result is wrapped
    into (-pi, pi].
    """
    limit = HALF_PI - np.asarray(theta_r, dtype=float)
    limit = np.where(limit > np.pi, limit - 2 * np.pi, limit)
    return np.where(_along_normal(-y_b, x_b, norm), limit, np.arctan2(-y_b, x_b))


def angles_from_displacements(d_b, d_u, theta, phi):
    """Closed-form path angles for displacements from the IRS center.

    Args:
        d_b: p_B - p_c, shape (..., 3).
        d_u: p_U - p_c, shape (..., 3).
        theta, phi: Rotation angles broadcastable against the displacements.

    Returns:
        Tuple (theta_i, theta_r, phi_i, phi_r, z_b, z_u) of broadcast arrays.
    """
    xb, yb, zb = local_components(d_b, theta, phi)
    xu, yu, zu = local_components(d_u, theta, phi)
    norm_b = np.linalg.norm(np.asarray(d_b, dtype=float), axis=-1)
    norm_u = np.linalg.norm(np.asarray(d_u, dtype=float), axis=-1)

    theta_r = _azimuth(yu, xu, norm_u)
    theta_i = _incident_azimuth(xb, yb, norm_b, theta_r)
    # atan2(in-plane, normal) equals arccos(z / |d|) without its loss of precision near 0 and pi
    phi_i = np.arctan2(np.hypot(xb, yb), zb)
    phi_r = np.arctan2(np.hypot(xu, yu), zu)
    return theta_i, theta_r, phi_i, phi_r, zb, zu


def _check_separation(d: np.ndarray, what: str) -> None:
    if np.any(np.linalg.norm(d, axis=-1) < DEGENERATE_DIST):
        logger.error(f"Degenerate geometry: {what} coincides with the IRS center")
        raise DomainError(f"{what} coincides with the IRS center")


def path_angles(scn: Scenario, rot: Rotation, p_U: Sequence[float]) -> PathAngles:
    """Incident and reflected azimuth/elevation angles at the IRS center.

    Args:
        scn: Scenario geometry.
        rot: IRS rotation.
        p_U: User position, or an array of positions with shape (K, 3).

    Returns:
        PathAngles with scalar fields for one user or arrays for K users.

    Raises:
        DomainError: If p_U or p_B coincides with the IRS center, or the
            rotation is outside the feasible box.
    """
    _check_box(rot.theta, rot.phi)
    p_c = np.asarray(scn.p_c)
    d_b = np.asarray(scn.p_b) - p_c
    d_u = np.asarray(p_U, dtype=float) - p_c
    _check_separation(d_b, "BS")
    _check_separation(d_u, "user")

    theta_i, theta_r, phi_i, phi_r, _, _ = angles_from_displacements(d_b, d_u, rot.theta, rot.phi)
    if np.ndim(theta_r) == 0:
        return PathAngles(float(theta_i), float(theta_r), float(phi_i), float(phi_r))
    theta_i, theta_r, phi_i, phi_r = np.broadcast_arrays(theta_i, theta_r, phi_i, phi_r)
    return PathAngles(theta_i.copy(), theta_r.copy(), phi_i.copy(), phi_r.copy())


def path_angles_local(scn: Scenario, rot: Rotation, p_U: Sequence[float],
                      origin: Optional[Union[Sequence[float], np.ndarray]] = None) -> PathAngles:
    """Path angles from the local coordinates of p_B and p_U around ``origin``.

    This is the direct form: project onto the local axes, then take two-argument
    arctangents for azimuths and clamped arccos for elevations. With an array of
    origins (shape (N, 3)) it yields per-element angles.
    """
    frame = orientation_frame(rot)
    origin = np.asarray(scn.p_c if origin is None else origin, dtype=float)
    d_b = np.asarray(scn.p_b) - origin
    d_u = np.asarray(p_U, dtype=float) - origin
    _check_separation(d_b, "BS")
    _check_separation(d_u, "user")

    local_b = d_b @ frame.q
    local_u = d_u @ frame.q
    norm_b = np.linalg.norm(d_b, axis=-1)
    norm_u = np.linalg.norm(d_u, axis=-1)

    theta_r = _azimuth(local_u[..., 1], local_u[..., 0], norm_u)
    theta_i = _incident_azimuth(local_b[..., 0], local_b[..., 1], norm_b, theta_r)
    phi_i = np.arccos(np.clip(local_b[..., 2] / norm_b, -1.0, 1.0))
    phi_r = np.arccos(np.clip(local_u[..., 2] / norm_u, -1.0, 1.0))
    if np.ndim(theta_i) == 0 and np.ndim(theta_r) == 0:
        return PathAngles(float(theta_i), float(theta_r), float(phi_i), float(phi_r))
    theta_i, theta_r, phi_i, phi_r = np.broadcast_arrays(theta_i, theta_r, phi_i, phi_r)
    return PathAngles(theta_i.copy(), theta_r.copy(), phi_i.copy(), phi_r.copy())


def feasible(scn: Scenario, rot: Rotation, p_U: Sequence[float]) -> Feasibility:
    """Check that both the BS and the user are in front of the surface.

    Returns:
        Feasibility with the local z slacks of p_B and p_U; feasible iff both
        are non-negative.
    """
    _check_box(rot.theta, rot.phi)
    p_c = np.asarray(scn.p_c)
    _, _, z_b = local_components(np.asarray(scn.p_b) - p_c, rot.theta, rot.phi)
    _, _, z_u = local_components(np.asarray(p_U, dtype=float) - p_c, rot.theta, rot.phi)
    z_b, z_u = float(z_b), float(z_u)
    return Feasibility(feasible=bool(z_b >= 0 and z_u >= 0), z_b=z_b, z_u=z_u)


def reflection_vectors(scn: Scenario, p_U: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Unit incident vector (BS to IRS) and reflection vector (IRS to user)."""
    p_c = np.asarray(scn.p_c)
    a_t = p_c - np.asarray(scn.p_b)
    a_r = np.asarray(p_U, dtype=float) - p_c
    _check_separation(a_t, "BS")
    _check_separation(a_r, "user")
    return a_t / np.linalg.norm(a_t), a_r / np.linalg.norm(a_r)


def feasible_by_normal(scn: Scenario, rot: Rotation, p_U: Sequence[float]) -> bool:
    """Front-side test written with the surface normal and the path vectors.

    The incident vector must arrive against the normal and the reflection
    vector must leave along it: a_t . k <= 0 and a_r . k >= 0.
    """
    k = orientation_frame(rot).k
    a_t, a_r = reflection_vectors(scn, p_U)
    return bool(np.dot(a_t, k) <= 0 and np.dot(a_r, k) >= 0)
