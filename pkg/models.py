import math
import re
from dataclasses import dataclass, asdict, replace
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

HALF_PI = math.pi / 2

Vector3 = Tuple[float, float, float]


class ValidationError(Exception):
    """Custom exception for data validation errors."""
    pass


class DomainError(Exception):
    """Raised when an operation receives inputs outside its mathematical domain."""
    pass


# Unit suffixes accepted by parse_quantity, mapped to converters into SI.
_POWER_UNITS = {
    'w': lambda v: v,
    'mw': lambda v: v * 1e-3,
    'dbm': lambda v: dbm_to_watts(v),
    'dbw': lambda v: db_to_linear(v),
}
_GAIN_UNITS = {
    'db': lambda v: db_to_linear(v),
}
_LENGTH_UNITS = {
    'm': lambda v: v,
    'cm': lambda v: v * 1e-2,
    'mm': lambda v: v * 1e-3,
}
_ANGLE_UNITS = {
    'deg': lambda v: math.radians(v),
    'rad': lambda v: v,
}
_UNIT_TABLES = {
    'power': _POWER_UNITS,
    'gain': _GAIN_UNITS,
    'length': _LENGTH_UNITS,
    'angle': _ANGLE_UNITS,
}
_QUANTITY_RE = re.compile(r'^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-z]*)\s*$')


def dbm_to_watts(dbm: float) -> float:
    """Convert dBm to watts: P[W] = 10^((dBm - 30)/10).

    Examples:
        >>> dbm_to_watts(30.0)
        1.0
        >>> dbm_to_watts(-90.0)
        1e-12
    """
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    """Convert watts to dBm."""
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    """Convert a power ratio in dB to a linear factor."""
    return 10.0 ** (db / 10.0)


def linear_to_db(value: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Convert a linear power ratio to dB; zero maps to -inf."""
    with np.errstate(divide='ignore'):
        result = 10.0 * np.log10(value)
    if np.ndim(result) == 0:
        return float(result)
    return result


def snr_db(power: Union[float, np.ndarray], noise: float) -> Union[float, np.ndarray]:
    """Received SNR in dB, 10*log10(P_r / sigma_0^2)."""
    return linear_to_db(np.asarray(power, dtype=float) / noise)


def parse_quantity(value: Union[str, float, int], kind: str, default_unit: str = '') -> float:
    """Normalize a physical quantity to SI units.

    Raw numbers are interpreted in ``default_unit`` (SI when empty). Strings carry
    their own unit suffix.

    Examples:
        >>> parse_quantity("30 dBm", "power")
        1.0
        >>> parse_quantity("-40 dB", "gain")
        0.0001
        >>> parse_quantity(0.1, "length")
        0.1
        >>> parse_quantity("10 deg", "angle")
        0.17453292519943295
    """
    table = _UNIT_TABLES.get(kind)
    if table is None:
        raise ValidationError(f"Unknown quantity kind: {kind}")

    if isinstance(value, bool):
        raise ValidationError(f"Invalid {kind} value: {value}")
    if isinstance(value, (int, float)):
        number, unit = float(value), default_unit
    elif isinstance(value, str):
        match = _QUANTITY_RE.match(value)
        if not match:
            raise ValidationError(f"Invalid {kind} value: {value!r}")
        number = float(match.group(1))
        unit = match.group(2) or default_unit
    else:
        raise ValidationError(f"Invalid {kind} value: {value!r}")

    converter = (lambda v: v) if unit == '' else table.get(unit.lower())
    if converter is None:
        raise ValidationError(f"Unsupported unit {unit!r} for {kind} value {value!r}")
    result = converter(number)
    if not math.isfinite(result):
        raise ValidationError(f"Non-finite {kind} value: {value!r}")
    return result


def normalize_vector(value: Sequence[float], name: str) -> Vector3:
    """Normalize a 3-vector to a tuple of floats.

    Examples:
        >>> normalize_vector([50, 20, 0], "p_b")
        (50.0, 20.0, 0.0)
    """
    try:
        arr = np.asarray(value, dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be a numeric 3-vector, got {value!r}")
    if arr.shape != (3,):
        raise ValidationError(f"{name} must have exactly 3 components, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return (float(arr[0]), float(arr[1]), float(arr[2]))


def squarest_shape(count: int) -> Tuple[int, int]:
    """Squarest (rows, cols) factorization of an element count, rows >= cols.

    Examples:
        >>> squarest_shape(128)
        (16, 8)
        >>> squarest_shape(256)
        (16, 16)
        >>> squarest_shape(300)
        (20, 15)
    """
    if count < 1:
        raise ValidationError(f"Element count must be >= 1, got {count}")
    cols = int(math.isqrt(count))
    while count % cols:
        cols -= 1
    return count // cols, cols


def in_feasible_box(theta: float, phi: float) -> bool:
    """True iff (theta, phi) lies in S = [-pi/2, pi/2]^2."""
    return -HALF_PI <= theta <= HALF_PI and -HALF_PI <= phi <= HALF_PI


@dataclass(frozen=True)
class Rotation:
    """IRS rotation angles Omega = (theta, phi) in radians.

    theta is the azimuth and phi the elevation; both live in [-pi/2, pi/2].

    Example:
        >>> Rotation.from_degrees(30.0, -10.0).to_degrees()
        (30.0, -10.0)
    """
    theta: float
    phi: float

    def __post_init__(self):
        """Coerce to float and enforce the feasible box S."""
        try:
            theta = float(self.theta)
            phi = float(self.phi)
        except (TypeError, ValueError):
            raise DomainError(f"Rotation angles must be numeric, got ({self.theta!r}, {self.phi!r})")
        if not (math.isfinite(theta) and math.isfinite(phi)):
            raise DomainError(f"Rotation angles must be finite, got ({theta}, {phi})")
        if not in_feasible_box(theta, phi):
            raise DomainError(f"Rotation ({theta}, {phi}) lies outside [-pi/2, pi/2]^2")
        object.__setattr__(self, 'theta', theta)
        object.__setattr__(self, 'phi', phi)

    @classmethod
    def from_degrees(cls, theta_deg: float, phi_deg: float) -> 'Rotation':
        return cls(math.radians(theta_deg), math.radians(phi_deg))

    def to_degrees(self) -> Tuple[float, float]:
        return (math.degrees(self.theta), math.degrees(self.phi))

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.phi])


@dataclass(frozen=True)
class ArraySpec:
    """Rectangular array layout: rows x cols elements with a common pitch.

    Required fields:
    - n_rows, n_cols: counts >= 1
    - spacing: inter-element pitch in meters (> 0)

    Optional fields:
    - element_len: square element side in meters, 0 < element_len <= spacing
      (IRS only; BS antennas leave it unset)
    """
    n_rows: int
    n_cols: int
    spacing: float
    element_len: Optional[float] = None

    def __post_init__(self):
        """Validate counts and lengths."""
        try:
            for name in ('n_rows', 'n_cols'):
                value = getattr(self, name)
                if isinstance(value, bool) or int(value) != value or int(value) < 1:
                    raise ValidationError(f"{name} must be an integer >= 1, got {value!r}")
                object.__setattr__(self, name, int(value))

            spacing = float(self.spacing)
            if not spacing > 0:
                raise ValidationError(f"spacing must be positive, got {spacing}")
            object.__setattr__(self, 'spacing', spacing)

            if self.element_len is not None:
                element_len = float(self.element_len)
                if not 0 < element_len <= spacing:
                    raise ValidationError(
                        f"element_len must satisfy 0 < element_len <= spacing ({spacing}), got {element_len}")
                object.__setattr__(self, 'element_len', element_len)
        except ValidationError as e:
            raise ValidationError(f"ArraySpec validation failed: {str(e)}")
        except (TypeError, ValueError) as e:
            raise ValidationError(f"ArraySpec validation failed with unexpected error: {str(e)}")

    @property
    def count(self) -> int:
        return self.n_rows * self.n_cols

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class Scenario:
    """All fixed geometry and link-budget constants of one BS-IRS-area setup.

    Positions are stored as tuples so scenarios compare and hash by value.
    The first-element positions are derived from the centers (the centers are
    authoritative), see ``p_b1`` and ``geometry.first_element_position``.

    Required fields:
    - p_b: BS center on the x-y plane (z = 0)
    - p_c: IRS center
    - p_r: target-area center on the x-y plane (z = 0)
    - area_x, area_y: area side lengths in meters (>= 0)
    - irs: ArraySpec with element_len set
    - bs: ArraySpec
    - beta: channel power gain at 1 m (> 0)
    - wavelength: carrier wavelength lambda in meters (> 0)
    - p_t: transmit power in watts (> 0)
    - noise: noise power sigma_0^2 in watts (> 0)

    Optional fields:
    - reflection_model: "standard" (default) or "mixed" reflection-factor variant
    """
    p_b: Vector3
    p_c: Vector3
    p_r: Vector3
    area_x: float
    area_y: float
    irs: ArraySpec
    bs: ArraySpec
    beta: float
    wavelength: float
    p_t: float
    noise: float
    reflection_model: str = 'standard'

    def __post_init__(self):
        """Validate and normalize data after initialization."""
        try:
            for name in ('p_b', 'p_c', 'p_r'):
                object.__setattr__(self, name, normalize_vector(getattr(self, name), name))
            if self.p_b[2] != 0.0:
                raise ValidationError(f"p_b must lie on the x-y plane, got z={self.p_b[2]}")
            if self.p_r[2] != 0.0:
                raise ValidationError(f"p_r must lie on the x-y plane, got z={self.p_r[2]}")

            for name in ('beta', 'wavelength', 'p_t', 'noise'):
                value = float(getattr(self, name))
                if not (math.isfinite(value) and value > 0):
                    raise ValidationError(f"{name} must be positive, got {value}")
                object.__setattr__(self, name, value)

            for name in ('area_x', 'area_y'):
                value = float(getattr(self, name))
                if not (math.isfinite(value) and value >= 0):
                    raise ValidationError(f"{name} must be non-negative, got {value}")
                object.__setattr__(self, name, value)

            if not isinstance(self.irs, ArraySpec) or not isinstance(self.bs, ArraySpec):
                raise ValidationError("irs and bs must be ArraySpec instances")
            if self.irs.element_len is None:
                raise ValidationError("irs.element_len must be set")
            if self.reflection_model not in ('standard', 'mixed'):
                raise ValidationError(
                    f"reflection_model must be 'standard' or 'mixed', got {self.reflection_model!r}")
        except ValidationError as e:
            raise ValidationError(f"Scenario validation failed: {str(e)}")
        except (TypeError, ValueError) as e:
            raise ValidationError(f"Scenario validation failed with unexpected error: {str(e)}")

    @property
    def l_bar(self) -> float:
        """Element side length in meters."""
        return self.irs.element_len

    @property
    def l_norm(self) -> float:
        """Wavelength-normalized element length L = l_bar / lambda."""
        return self.irs.element_len / self.wavelength

    @property
    def p_b1(self) -> np.ndarray:
        """First BS antenna, placed so that p_b is the array center."""
        from geometry import first_element_position
        return first_element_position(self.bs, np.asarray(self.p_b), None)

    def p_1(self, rot: Rotation) -> np.ndarray:
        """First IRS element for a rotation about the IRS center."""
        from geometry import first_element_position
        return first_element_position(self.irs, np.asarray(self.p_c), rot)

    def with_changes(self, **changes) -> 'Scenario':
        """Return a validated copy with some fields replaced."""
        return replace(self, **changes)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class OrientationFrame:
    """Surface normal, element base directions and local axes for one rotation.

    Q has columns (e_x, e_y, e_z) and maps local coordinates to global ones.
    """
    k: np.ndarray
    m_r: np.ndarray
    m_c: np.ndarray
    e_x: np.ndarray
    e_y: np.ndarray
    e_z: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        for name in ('k', 'm_r', 'm_c', 'e_x', 'e_y', 'e_z'):
            norm = float(np.linalg.norm(getattr(self, name)))
            if abs(norm - 1.0) > 1e-12:
                raise ValidationError(f"OrientationFrame validation failed: |{name}| = {norm}")


@dataclass(frozen=True)
class PathAngles:
    """Incident/reflected azimuth and elevation angles at one IRS point.

    Fields may be scalars or equally-shaped arrays (one entry per user or per
    element). Azimuths are signed in (-pi, pi]; elevations lie in [0, pi].
    """
    theta_i: Union[float, np.ndarray]
    theta_r: Union[float, np.ndarray]
    phi_i: Union[float, np.ndarray]
    phi_r: Union[float, np.ndarray]

    def __post_init__(self):
        for name in ('phi_i', 'phi_r'):
            value = np.asarray(getattr(self, name))
            if np.any(value < 0) or np.any(value > math.pi):
                raise ValidationError(f"PathAngles validation failed: {name} outside [0, pi]")


@dataclass(frozen=True)
class Feasibility:
    """Outcome of the in-front-of-surface check with both local z slacks."""
    feasible: bool
    z_b: float
    z_u: float

    def __bool__(self) -> bool:
        return self.feasible
