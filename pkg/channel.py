import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from geometry import BS_COL_DIR, BS_ROW_DIR, element_positions, orientation_frame, path_angles, path_angles_local
from models import DomainError, PathAngles, Rotation, Scenario, ValidationError, snr_db

logger = logging.getLogger(__name__)

# Minimum element-to-element distance before a channel is considered degenerate.
MIN_DISTANCE = 1e-12


@dataclass(frozen=True)
class BsIrsChannel:
    """N x M line-of-sight channel from the BS antennas to the IRS elements.

    ``rank_one_valid`` is False when the array pair is too close for the
    rank-one (plane-wave) phase model to hold.
    """
    entries: np.ndarray
    rank_one_valid: bool = True

    def __post_init__(self):
        if np.ndim(self.entries) != 2:
            raise ValidationError(f"BsIrsChannel validation failed: entries must be 2-D, got {np.shape(self.entries)}")


@dataclass(frozen=True)
class IrsUserChannel:
    """Length-N line-of-sight channel from the IRS elements to the user."""
    entries: np.ndarray

    def __post_init__(self):
        if np.ndim(self.entries) != 1:
            raise ValidationError(f"IrsUserChannel validation failed: entries must be 1-D, got {np.shape(self.entries)}")


@dataclass(frozen=True)
class ReflectionFactors:
    """Angle-dependent reception and reflection factors of an element.

    Fields may be scalars or arrays (one entry per element). ``scale`` is the
    aperture term sqrt(4*pi*l_bar^4/lambda^2), so the reflection coefficient
    magnitude is ``scale * alpha * |gamma|``.
    """
    alpha: np.ndarray
    gamma: np.ndarray
    x_arg: np.ndarray
    y_arg: np.ndarray
    z_term: np.ndarray
    l_norm: float
    scale: float

    @property
    def magnitude(self):
        return self.scale * self.alpha * np.abs(self.gamma)


@dataclass(frozen=True)
class BeamformingConfig:
    """BS transmit weights w (length M) and IRS phase shifts psi (length N)."""
    weights: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        if np.any(phases < 0) or np.any(phases >= 2 * math.pi):
            raise ValidationError("BeamformingConfig validation failed: phases must lie in [0, 2*pi)")


def sinc(s):
    """Unnormalized sinc, sin(s)/s with sinc(0) = 1."""
    return np.sinc(np.asarray(s, dtype=float) / np.pi)


def _los(distance: np.ndarray, scn: Scenario) -> np.ndarray:
    return np.sqrt(scn.beta) / distance * np.exp(-2j * np.pi * distance / scn.wavelength)


def _array_positions(scn: Scenario, rot: Rotation) -> Tuple[np.ndarray, np.ndarray]:
    irs = element_positions(scn.irs, scn.p_1(rot), rot)
    bs = element_positions(scn.bs, scn.p_b1, None)
    return irs, bs


def exact_channels(scn: Scenario, rot: Rotation, p_U: Sequence[float]) -> Tuple[BsIrsChannel, IrsUserChannel]:
    """Exact spherical-wave channels G (N x M) and f (N).

    Args:
        scn: Scenario geometry and link constants.
        rot: IRS rotation.
        p_U: User position.

    Returns:
        Tuple of (BsIrsChannel, IrsUserChannel).

    Raises:
        DomainError: If any element coincides with a BS antenna or the user.
    """
    irs, bs = _array_positions(scn, rot)
    t = np.linalg.norm(irs[:, None, :] - bs[None, :, :], axis=-1)
    r = np.linalg.norm(irs - np.asarray(p_U, dtype=float), axis=-1)
    if np.any(t < MIN_DISTANCE) or np.any(r < MIN_DISTANCE):
        logger.error("Coincident points while building exact channels")
        raise DomainError("An IRS element coincides with a BS antenna or the user")
    return BsIrsChannel(_los(t, scn)), IrsUserChannel(_los(r, scn))


def rank_one_condition(scn: Scenario, rot: Rotation) -> Tuple[float, float, bool]:
    """Distance between the first antenna and first element against sqrt(N) l^2 / lambda.

    Returns:
        Tuple (t_11, threshold, holds).
    """
    t11 = float(np.linalg.norm(scn.p_b1 - scn.p_1(rot)))
    threshold = math.sqrt(scn.irs.count) * scn.irs.spacing ** 2 / scn.wavelength
    return t11, threshold, t11 >= threshold


def _phase_offsets(scn: Scenario, rot: Rotation) -> Tuple[np.ndarray, np.ndarray, float]:
    """Index-dependent path-length offsets g_bar (BS, length M) and g_tilde (IRS, length N).

    Returns:
        Tuple (g_bar, g_tilde, t_11).
    """
    frame = orientation_frame(rot)
    d11 = scn.p_b1 - scn.p_1(rot)
    t11 = float(np.linalg.norm(d11))
    if t11 < MIN_DISTANCE:
        raise DomainError("First BS antenna coincides with the first IRS element")
    unit = d11 / t11

    # cos of the angles between p_B1 - p_1 and each base direction
    cos_bc = float(np.dot(unit, BS_COL_DIR))
    cos_br = float(np.dot(unit, BS_ROW_DIR))
    cos_mr = float(np.dot(unit, frame.m_r))
    cos_mc = float(np.dot(unit, frame.m_c))

    m = np.arange(1, scn.bs.count + 1)
    bs_rows = (m - 1) // scn.bs.n_cols
    bs_cols = m - scn.bs.n_cols * bs_rows - 1
    g_bar = bs_cols * scn.bs.spacing * cos_bc + bs_rows * scn.bs.spacing * cos_br

    n = np.arange(1, scn.irs.count + 1)
    irs_rows = (n - 1) // scn.irs.n_cols
    irs_cols = n - scn.irs.n_cols * irs_rows - 1
    # IRS columns step along m_r and rows along m_c
    g_tilde = -irs_cols * scn.irs.spacing * cos_mr - irs_rows * scn.irs.spacing * cos_mc
    return g_bar, g_tilde, t11


def approx_bs_irs_channel(scn: Scenario, rot: Rotation) -> BsIrsChannel:
    """Rank-one BS-IRS channel with exact amplitudes and linearized phases.

    Entry (n, m) is sqrt(beta)/t_nm * exp(-j 2 pi/lambda (t_11 + g_bar_m + g_tilde_n)).
    The result is flagged when the rank-one validity condition fails.
    """
    irs, bs = _array_positions(scn, rot)
    t = np.linalg.norm(irs[:, None, :] - bs[None, :, :], axis=-1)
    if np.any(t < MIN_DISTANCE):
        raise DomainError("An IRS element coincides with a BS antenna")
    g_bar, g_tilde, t11 = _phase_offsets(scn, rot)

    t11_check, threshold, ok = rank_one_condition(scn, rot)
    if not ok:
        logger.warning(f"Rank-one condition violated: t_11={t11_check:.3f} m < {threshold:.3f} m")

    path = t11 + g_bar[None, :] + g_tilde[:, None]
    entries = np.sqrt(scn.beta) / t * np.exp(-2j * np.pi * path / scn.wavelength)
    return BsIrsChannel(entries, rank_one_valid=ok)


def max_phase_error(approx: BsIrsChannel, exact: BsIrsChannel) -> float:
    """Largest wrapped phase discrepancy between two channels, in radians."""
    return float(np.max(np.abs(np.angle(approx.entries * np.conj(exact.entries)))))


def reflection_factors(angles: PathAngles, l_bar: float, wavelength: float,
                       mixed: bool = False) -> ReflectionFactors:
    """Reception factor alpha and reflection factor gamma of a square element.

    alpha = cos(phi_i), clamped at 0 beyond grazing incidence.
    gamma = Z sinc(X) sinc(Y) with
        X = (pi l_bar/lambda)(cos th_i sin ph_i + sin th_r cos ph_r)
        Y = (pi l_bar/lambda)(sin th_r sin ph_r - sin th_i sin ph_i)
        Z = sqrt(cos^2 ph_r cos^2(th_i + th_r) + sin^2(th_i + th_r))

    Args:
        angles: Path angles (scalars or arrays).
        l_bar: Element side length in meters.
        wavelength: Carrier wavelength in meters.
        mixed: Use the alternative index arrangement
            X = (pi l_bar/lambda)(sin th_i cos ph_i + cos th_r sin ph_r),
            Z = sqrt(cos^2 ph_r sin^2(ph_i + th_r) + cos^2(ph_i + th_r)).

    Returns:
        ReflectionFactors with the same shape as the angle fields.
    """
    th_i = np.asarray(angles.theta_i, dtype=float)
    th_r = np.asarray(angles.theta_r, dtype=float)
    ph_i = np.asarray(angles.phi_i, dtype=float)
    ph_r = np.asarray(angles.phi_r, dtype=float)
    l_norm = l_bar / wavelength

    alpha = np.maximum(np.cos(ph_i), 0.0)
    y_arg = np.pi * l_norm * (np.sin(th_r) * np.sin(ph_r) - np.sin(th_i) * np.sin(ph_i))
    if mixed:
        x_arg = np.pi * l_norm * (np.sin(th_i) * np.cos(ph_i) + np.cos(th_r) * np.sin(ph_r))
        mixed = ph_i + th_r
        z_term = np.sqrt(np.cos(ph_r) ** 2 * np.sin(mixed) ** 2 + np.cos(mixed) ** 2)
    else:
        x_arg = np.pi * l_norm * (np.cos(th_i) * np.sin(ph_i) + np.sin(th_r) * np.cos(ph_r))
        total = th_i + th_r
        z_term = np.sqrt(np.cos(ph_r) ** 2 * np.cos(total) ** 2 + np.sin(total) ** 2)
    gamma = z_term * sinc(x_arg) * sinc(y_arg)
    scale = math.sqrt(4 * math.pi * l_bar ** 4 / wavelength ** 2)
    return ReflectionFactors(alpha=alpha, gamma=gamma, x_arg=x_arg, y_arg=y_arg,
                             z_term=z_term, l_norm=l_norm, scale=scale)


def optimal_beamforming(scn: Scenario, rot: Rotation, p_U: Sequence[float]) -> BeamformingConfig:
    """Phase-aligning BS weights and IRS phase shifts for one user.

    w_m = sqrt(P_t/M) exp(j 2 pi g_bar_m / lambda)
    psi_n = mod(2 pi (g_tilde_n + r_n) / lambda, 2 pi)
    """
    g_bar, g_tilde, _ = _phase_offsets(scn, rot)
    irs = element_positions(scn.irs, scn.p_1(rot), rot)
    r = np.linalg.norm(irs - np.asarray(p_U, dtype=float), axis=-1)

    weights = math.sqrt(scn.p_t / scn.bs.count) * np.exp(2j * np.pi * g_bar / scn.wavelength)
    phases = np.mod(2 * np.pi * (g_tilde + r) / scn.wavelength, 2 * np.pi)
    # mod can return 2*pi itself when the argument is a tiny negative number
    phases = np.where(phases >= 2 * np.pi, 0.0, phases)
    return BeamformingConfig(weights=weights, phases=phases)


def cascade_terms(scn: Scenario, rot: Rotation, p_U: Sequence[float],
                  bs_irs: Optional[BsIrsChannel] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Per-element cascade gains and the BS-IRS matrix.

    Returns:
        Tuple (a, G) where a_n = f_n * scale * alpha_n * gamma_n, with alpha_n and
        gamma_n evaluated from element n's own angles, and G is the N x M channel.
        The received amplitude for a configuration is sum_n a_n e^{j psi_n} (G w)_n.
    """
    irs = element_positions(scn.irs, scn.p_1(rot), rot)
    exact_g, f = exact_channels(scn, rot, p_U)
    g = exact_g if bs_irs is None else bs_irs
    angles = path_angles_local(scn, rot, p_U, origin=irs)
    factors = reflection_factors(angles, scn.l_bar, scn.wavelength,
                                 mixed=scn.reflection_model == 'mixed')
    a = f.entries * factors.scale * factors.alpha * factors.gamma
    return a, g.entries


def received_power_exact(scn: Scenario, rot: Rotation, p_U: Sequence[float], cfg: BeamformingConfig,
                         bs_irs: Optional[BsIrsChannel] = None) -> float:
    """Received power from the full per-element double sum.

    Args:
        scn: Scenario.
        rot: IRS rotation.
        p_U: User position.
        cfg: BS weights and IRS phases.
        bs_irs: BS-IRS channel to use; the exact channel when omitted.

    Returns:
        Received power in watts.
    """
    a, g = cascade_terms(scn, rot, p_U, bs_irs)
    amplitude = np.sum(a * np.exp(1j * np.asarray(cfg.phases)) * (g @ np.asarray(cfg.weights)))
    return float(np.abs(amplitude) ** 2)


def farfield_gain(scn: Scenario) -> float:
    """Rotation-independent factor 4 pi l_bar^4 beta^2 P_t M N^2 / lambda^2."""
    return (4 * math.pi * scn.l_bar ** 4 * scn.beta ** 2 * scn.p_t
            * scn.bs.count * scn.irs.count ** 2 / scn.wavelength ** 2)


def farfield_power_points(scn: Scenario, rot: Rotation, points: np.ndarray) -> np.ndarray:
    """Far-field received power at each of K user positions (shape (K, 3))."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    angles = path_angles(scn, rot, points)
    factors = reflection_factors(angles, scn.l_bar, scn.wavelength,
                                 mixed=scn.reflection_model == 'mixed')
    p_c = np.asarray(scn.p_c)
    t2 = float(np.sum((np.asarray(scn.p_b) - p_c) ** 2))
    r2 = np.sum((points - p_c) ** 2, axis=-1)
    return farfield_gain(scn) * factors.alpha ** 2 * factors.gamma ** 2 / (t2 * r2)


def received_power_farfield(scn: Scenario, rot: Rotation, p_U: Sequence[float]) -> float:
    """Far-field received power with all elements sharing the center's distances and angles.

    P_r = 4 pi l_bar^4 beta^2 P_t M N^2 alpha^2 gamma^2 / (lambda^2 t^2 r^2)
    """
    return float(farfield_power_points(scn, rot, np.asarray(p_U, dtype=float)[None, :])[0])


def snr_db_at(scn: Scenario, rot: Rotation, p_U: Sequence[float]) -> float:
    """Far-field SNR at one user position, in dB."""
    return float(snr_db(received_power_farfield(scn, rot, p_U), scn.noise))
