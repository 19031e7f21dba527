import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

from models import (
    ArraySpec, Scenario, ValidationError, normalize_vector, parse_quantity, squarest_shape
)
from objective import FitnessParams
from optimizer import DEFAULT_RATIO_THRESHOLD, PsoParams

logger = logging.getLogger(__name__)


class ConfigError(Exception):
    """Custom exception for malformed scenario configuration files."""
    pass


class ConfigReadError(ConfigError):
    """Raised when a scenario configuration file cannot be read."""
    pass


# Reference setup; lambda is not part of it and defaults to 0.1 m.
SCENARIO_DEFAULTS: Dict[str, Any] = {
    'bs_center': [50.0, 20.0, 0.0],
    'irs_center': [0.0, 50.0, 10.0],
    'area_center': [30.0, 80.0, 0.0],
    'area_x': 10.0,
    'area_y': 10.0,
    'wavelength': 0.1,
    'beta': '-40 dB',
    'p_t': '30 dBm',
    'noise': '-90 dBm',
    'l_norm': 0.25,
    'irs_spacing': 0.5,
    'bs_spacing': 0.5,
    'n_elements': 256,
    'm_antennas': 128,
    'reflection_model': 'standard',
}

OPTIMIZER_DEFAULTS: Dict[str, Any] = {
    'swarm_size': 100,
    'max_iters': 30,
    'c1': 2.0,
    'c2': 2.0,
    'w_ini': 0.4,
    'w_end': 0.9,
    'v_clamp_deg': 5.0,
    'seed': 0,
    'seed_fraction': 0.5,
    'seed_radius_deg': 5.0,
    'swap_inertia': False,
    'per_component_random': False,
    'tau': 10.0,
    'grid_step': 1.0,
    'es_step_deg': 0.5,
    'movable_range': [0.0, 100.0],
    'movable_step': 1.0,
    'fixed_angle_deg': 10.0,
    'ratio_threshold': DEFAULT_RATIO_THRESHOLD,
    'workers': 1,
}

SCENARIO_KEYS = set(SCENARIO_DEFAULTS) | {'element_len', 'irs_shape', 'bs_shape', 'optimizer'}


@dataclass(frozen=True)
class RunSettings:
    """Optimizer, grid and scheme settings shared by every run of a session."""
    pso: PsoParams = field(default_factory=PsoParams)
    fitness: FitnessParams = field(default_factory=FitnessParams)
    grid_step: float = 1.0
    es_step: float = math.radians(0.5)
    movable_range: Tuple[float, float] = (0.0, 100.0)
    movable_step: float = 1.0
    fixed_angle: float = math.radians(10.0)
    ratio_threshold: float = DEFAULT_RATIO_THRESHOLD
    workers: int = 1

    def __post_init__(self):
        if not self.grid_step > 0:
            raise ValidationError(f"RunSettings validation failed: grid_step must be positive, got {self.grid_step}")
        if not self.es_step > 0:
            raise ValidationError(f"RunSettings validation failed: es_step must be positive, got {self.es_step}")
        if not self.movable_step > 0:
            raise ValidationError(
                f"RunSettings validation failed: movable_step must be positive, got {self.movable_step}")
        lo, hi = self.movable_range
        if lo > hi:
            raise ValidationError(f"RunSettings validation failed: movable_range must be ordered, got {self.movable_range}")
        if int(self.workers) < 1:
            raise ValidationError(f"RunSettings validation failed: workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class LoadedConfig:
    scenario: Scenario
    settings: RunSettings
    defaulted: List[str]


def _shape(data: Dict, count_key: str, shape_key: str) -> Tuple[int, int]:
    count = data[count_key]
    if isinstance(count, bool) or not isinstance(count, int) or count < 1:
        raise ValidationError(f"{count_key} must be a positive integer, got {count!r}")
    shape = data.get(shape_key)
    if shape is None:
        return squarest_shape(count)
    if not (isinstance(shape, (list, tuple)) and len(shape) == 2):
        raise ValidationError(f"{shape_key} must be [rows, cols], got {shape!r}")
    rows, cols = shape
    if rows * cols != count:
        raise ValidationError(f"{shape_key} {rows}x{cols} does not match {count_key}={count}")
    return int(rows), int(cols)


def _spacing(value: Any, wavelength: float, name: str) -> float:
    """Raw numbers are in wavelengths; unit strings are absolute lengths."""
    if isinstance(value, str):
        return parse_quantity(value, 'length')
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{name} must be a number of wavelengths or a length string, got {value!r}")
    return float(value) * wavelength


def scenario_from_config(config: Dict) -> Tuple[Scenario, List[str]]:
    """Build a Scenario from a config mapping, filling absent keys with defaults.

    Args:
        config: Parsed configuration mapping.

    Returns:
        Tuple (scenario, names of keys that took their default).

    Raises:
        ValidationError: If a value is malformed or violates an invariant;
            the message names the offending key.
    """
    if not isinstance(config, dict):
        raise ValidationError(f"Scenario config must be a mapping, got {type(config).__name__}")
    unknown = sorted(set(config) - SCENARIO_KEYS)
    if unknown:
        raise ValidationError(f"Unknown scenario keys: {', '.join(unknown)}")

    defaulted = sorted(key for key in SCENARIO_DEFAULTS if key not in config)
    data = {**SCENARIO_DEFAULTS, **config}
    key = None
    try:
        key = 'wavelength'
        wavelength = parse_quantity(data['wavelength'], 'length')
        if not wavelength > 0:
            raise ValidationError(f"must be positive, got {wavelength}")

        key = 'irs_shape'
        irs_rows, irs_cols = _shape(data, 'n_elements', 'irs_shape')
        key = 'bs_shape'
        bs_rows, bs_cols = _shape(data, 'm_antennas', 'bs_shape')

        key = 'irs_spacing'
        irs_spacing = _spacing(data['irs_spacing'], wavelength, key)
        key = 'bs_spacing'
        bs_spacing = _spacing(data['bs_spacing'], wavelength, key)
        key = 'element_len'
        if 'element_len' in data:
            element_len = parse_quantity(data['element_len'], 'length')
        else:
            key = 'l_norm'
            element_len = float(data['l_norm']) * wavelength

        key = 'irs'
        irs = ArraySpec(irs_rows, irs_cols, irs_spacing, element_len)
        key = 'bs'
        bs = ArraySpec(bs_rows, bs_cols, bs_spacing)

        values = {}
        for key, target, kind in (('beta', 'beta', 'gain'), ('p_t', 'p_t', 'power'), ('noise', 'noise', 'power'),
                                  ('area_x', 'area_x', 'length'), ('area_y', 'area_y', 'length')):
            values[target] = parse_quantity(data[key], kind)
        for key, target in (('bs_center', 'p_b'), ('irs_center', 'p_c'), ('area_center', 'p_r')):
            values[target] = normalize_vector(data[key], key)

        key = 'scenario'
        scenario = Scenario(irs=irs, bs=bs, wavelength=wavelength,
                            reflection_model=data['reflection_model'], **values)
    except ValidationError as e:
        logger.error(f"Invalid scenario field {key}: {str(e)}")
        raise ValidationError(f"Invalid scenario field {key}: {str(e)}")
    except (TypeError, ValueError) as e:
        logger.error(f"Invalid scenario field {key}: {str(e)}")
        raise ValidationError(f"Invalid scenario field {key}: {str(e)}")
    return scenario, defaulted


def settings_from_config(config: Dict) -> RunSettings:
    """Build RunSettings from the optional "optimizer" section."""
    section = config.get('optimizer', {}) if isinstance(config, dict) else {}
    if not isinstance(section, dict):
        raise ValidationError("optimizer section must be a mapping")
    unknown = sorted(set(section) - set(OPTIMIZER_DEFAULTS))
    if unknown:
        raise ValidationError(f"Unknown optimizer keys: {', '.join(unknown)}")
    opt = {**OPTIMIZER_DEFAULTS, **section}
    try:
        pso = PsoParams(
            swarm_size=int(opt['swarm_size']),
            max_iters=int(opt['max_iters']),
            c1=float(opt['c1']),
            c2=float(opt['c2']),
            w_ini=float(opt['w_ini']),
            w_end=float(opt['w_end']),
            v_clamp=math.radians(float(opt['v_clamp_deg'])),
            seed=int(opt['seed']),
            seed_fraction=float(opt['seed_fraction']),
            seed_radius=math.radians(float(opt['seed_radius_deg'])),
            swap_inertia=bool(opt['swap_inertia']),
            per_component_random=bool(opt['per_component_random']),
            workers=int(opt['workers']),
        )
        lo, hi = opt['movable_range']
        return RunSettings(
            pso=pso,
            fitness=FitnessParams(float(opt['tau'])),
            grid_step=parse_quantity(opt['grid_step'], 'length'),
            es_step=math.radians(float(opt['es_step_deg'])),
            movable_range=(float(lo), float(hi)),
            movable_step=float(opt['movable_step']),
            fixed_angle=math.radians(float(opt['fixed_angle_deg'])),
            ratio_threshold=float(opt['ratio_threshold']),
            workers=int(opt['workers']),
        )
    except ValidationError as e:
        logger.error(f"Invalid optimizer settings: {str(e)}")
        raise ValidationError(f"Invalid optimizer settings: {str(e)}")
    except (TypeError, ValueError) as e:
        logger.error(f"Invalid optimizer settings: {str(e)}")
        raise ValidationError(f"Invalid optimizer settings: {str(e)}")


def load_config(path: str) -> LoadedConfig:
    """Read a JSON scenario file into a Scenario and its run settings.

    Raises:
        ConfigReadError: If the file cannot be read.
        ConfigError: If the file is not valid JSON (message carries the line).
        ValidationError: If a value violates an invariant.
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        logger.error(f"Failed to read scenario file: {str(e)}")
        raise ConfigReadError(f"Failed to read scenario file {path}: {str(e)}")

    try:
        config = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        logger.error(f"Malformed scenario file {path} at line {e.lineno}: {e.msg}")
        raise ConfigError(f"Malformed scenario file {path} at line {e.lineno}, column {e.colno}: {e.msg}")

    scenario, defaulted = scenario_from_config(config)
    settings = settings_from_config(config)
    logger.info(f"Loaded scenario from {path}; {len(defaulted)} keys took defaults")
    if defaulted:
        logger.debug(f"Defaulted keys: {', '.join(defaulted)}")
    return LoadedConfig(scenario, settings, defaulted)


def load_scenario(path: str) -> Tuple[Scenario, List[str]]:
    """Scenario and defaulted keys from a JSON file."""
    loaded = load_config(path)
    return loaded.scenario, loaded.defaulted


def scenario_to_config(scn: Scenario) -> Dict[str, Any]:
    """Canonical config echo: every key, SI numbers, lengths as meter strings.

    Loading the result reproduces an identical Scenario.
    """
    return {
        'bs_center': list(scn.p_b),
        'irs_center': list(scn.p_c),
        'area_center': list(scn.p_r),
        'area_x': scn.area_x,
        'area_y': scn.area_y,
        'wavelength': scn.wavelength,
        'beta': scn.beta,
        'p_t': scn.p_t,
        'noise': scn.noise,
        'element_len': f"{scn.irs.element_len!r} m",
        'irs_spacing': f"{scn.irs.spacing!r} m",
        'bs_spacing': f"{scn.bs.spacing!r} m",
        'n_elements': scn.irs.count,
        'irs_shape': [scn.irs.n_rows, scn.irs.n_cols],
        'm_antennas': scn.bs.count,
        'bs_shape': [scn.bs.n_rows, scn.bs.n_cols],
        'reflection_model': scn.reflection_model,
    }


def scenario_hash(scn: Scenario) -> str:
    """SHA-256 of the canonical config serialized with sorted keys."""
    payload = json.dumps(scenario_to_config(scn), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()

