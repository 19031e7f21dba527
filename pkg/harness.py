import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from channel import farfield_power_points
from geometry import feasible, path_angles
from models import ArraySpec, Rotation, Scenario, ValidationError, dbm_to_watts, snr_db, squarest_shape
from objective import (
    AreaGrid, FitnessParams, area_grid, deltas, fitness_single, grid_deltas, rotation_deltas, single_values
)
from optimizer import (
    OptimizationReport, closed_form_rotation, exhaustive_placement, exhaustive_search, pso_area, pso_single,
    rotation_lattice
)
from scenario_config import RunSettings, scenario_hash, scenario_to_config

logger = logging.getLogger(__name__)

SCHEME_KINDS = ('proposed', 'fixed_phi', 'fixed_theta', 'fixed_rotation', 'movable_irs', 'closed_form', 'exhaustive')
MODES = ('point', 'area')
SWEEP_VARIABLES = ('p_t', 'm_antennas', 'n_elements', 'area_y', 'irs_altitude')

# CSV float format: 17 significant digits round-trip a double exactly.
FLOAT_FORMAT = '%.17g'
AREA_Y_NOTE = 'D_y is treated as the target-area side length A_y'


class UsageError(Exception):
    """Raised when a scheme, mode or sweep request is not supported."""
    pass


class OutputError(Exception):
    """Exception raised when report artifacts cannot be written."""
    pass


@dataclass(frozen=True)
class SchemeSpec:
    """One benchmark scheme.

    fixed_angle is the pinned angle of fixed_phi/fixed_theta; movable_range and
    movable_step bound the y_c search of movable_irs.
    """
    kind: str
    fixed_angle: float = math.radians(10.0)
    movable_range: Tuple[float, float] = (0.0, 100.0)
    movable_step: float = 1.0

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise UsageError(f"Unknown scheme {self.kind!r}; expected one of {', '.join(SCHEME_KINDS)}")

    @classmethod
    def from_settings(cls, kind: str, settings: RunSettings) -> 'SchemeSpec':
        return cls(kind, settings.fixed_angle, settings.movable_range, settings.movable_step)

    def placement_values(self) -> np.ndarray:
        lo, hi = self.movable_range
        count = int(round((hi - lo) / self.movable_step)) + 1
        return np.linspace(lo, hi, count)


@dataclass(frozen=True)
class SweepSpec:
    """Swept variable and its strictly increasing values.

    Units: p_t in dBm, counts as integers, area_y and irs_altitude in meters.
    """
    variable: str
    values: Tuple[float, ...]

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise UsageError(f"Unknown sweep variable {self.variable!r}; expected one of {', '.join(SWEEP_VARIABLES)}")
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ValidationError("SweepSpec validation failed: values must not be empty")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValidationError(f"SweepSpec validation failed: values must be strictly increasing, got {values}")
        if self.variable in ('m_antennas', 'n_elements') and any(v != int(v) or v < 1 for v in values):
            raise ValidationError(f"SweepSpec validation failed: {self.variable} values must be positive integers")
        object.__setattr__(self, 'values', values)


@dataclass
class RunReport:
    """Outcome of one scheme run, with everything needed to recompute its SNR."""
    scheme: str
    mode: str
    rotation: Rotation
    snr_db: float
    delta_product: float
    min_delta_product: float
    worst_point: Tuple[float, float, float]
    irs_center: Tuple[float, float, float]
    feasible: bool
    best_fitness: float
    trace: Tuple[float, ...]
    evaluations: int
    wall_clock: float
    config: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['rotation'] = {
            'theta': self.rotation.theta,
            'phi': self.rotation.phi,
            'theta_deg': self.rotation.to_degrees()[0],
            'phi_deg': self.rotation.to_degrees()[1],
        }
        data['trace'] = list(self.trace)
        return data


def report_to_row(report: RunReport) -> Dict[str, Any]:
    """Flatten a RunReport into one CSV row."""
    theta_deg, phi_deg = report.rotation.to_degrees()
    return {
        'scheme': report.scheme,
        'mode': report.mode,
        'theta': report.rotation.theta,
        'phi': report.rotation.phi,
        'theta_deg': theta_deg,
        'phi_deg': phi_deg,
        'snr_db': report.snr_db,
        'delta_product': report.delta_product,
        'min_delta_product': report.min_delta_product,
        'worst_x': report.worst_point[0],
        'worst_y': report.worst_point[1],
        'irs_x': report.irs_center[0],
        'irs_y': report.irs_center[1],
        'irs_z': report.irs_center[2],
        'feasible': report.feasible,
        'best_fitness': report.best_fitness,
        'evaluations': report.evaluations,
        'iterations': len(report.trace),
        'wall_clock': report.wall_clock,
    }


def evaluate_rotation(scn: Scenario, rot: Rotation, mode: str,
                      grid: Optional[AreaGrid] = None) -> Tuple[float, float, float, Tuple[float, float, float]]:
    """Far-field SNR and delta1*delta2 of a rotation.

    In point mode the target is the area center. In area mode the SNR is the
    minimum over the grid and delta_product is taken at that worst point.

    Returns:
        Tuple (snr_db, delta_product, min_delta_product, worst_point).
    """
    if mode == 'point':
        power = farfield_power_points(scn, rot, np.asarray(scn.p_r)[None, :])[0]
        product = float(deltas(path_angles(scn, rot, scn.p_r), scn.l_norm).product)
        return float(snr_db(power, scn.noise)), product, product, scn.p_r
    powers = farfield_power_points(scn, rot, grid.points)
    products = grid_deltas(scn, rot, grid).product
    k = int(np.argmin(powers))
    worst = tuple(float(v) for v in grid.points[k])
    return float(snr_db(powers[k], scn.noise)), float(products[k]), float(np.min(products)), worst


def _optimize(scn: Scenario, scheme: SchemeSpec, mode: str, target, settings: RunSettings) -> OptimizationReport:
    kind = scheme.kind
    if kind == 'proposed':
        if mode == 'point':
            return pso_single(scn, target, settings.pso, settings.fitness)
        return pso_area(scn, target, settings.pso, settings.fitness)
    if kind in ('fixed_phi', 'fixed_theta'):
        pins = {'pin_phi': scheme.fixed_angle} if kind == 'fixed_phi' else {'pin_theta': scheme.fixed_angle}
        if mode == 'point':
            return pso_single(scn, target, settings.pso, settings.fitness, **pins)
        return pso_area(scn, target, settings.pso, settings.fitness, **pins)
    if kind == 'fixed_rotation':
        rot = Rotation(0.0, 0.0)
        return OptimizationReport(best_rotation=rot, best_fitness=math.nan, trace=(), evaluations=0,
                                  feasible=True, method='fixed')
    if kind == 'movable_irs':
        return exhaustive_placement(scn, target, scheme.placement_values())
    if kind == 'closed_form':
        result = closed_form_rotation(scn, target, settings.ratio_threshold)
        return OptimizationReport(best_rotation=result.rotation, best_fitness=math.nan, trace=(), evaluations=0,
                                  feasible=True, method='closed_form')
    return exhaustive_search(scn, target, settings.es_step, settings.fitness)


def run_scheme(scn: Scenario, scheme: SchemeSpec, mode: str, settings: Optional[RunSettings] = None) -> RunReport:
    """Optimize (or evaluate) one scheme and report its far-field SNR.

    Args:
        scn: Scenario.
        scheme: Scheme to run.
        mode: "point" (target = area center) or "area" (target = area grid).
        settings: Optimizer settings; defaults when omitted.

    Returns:
        RunReport whose SNR is recomputable from its rotation and config echo.

    Raises:
        UsageError: If the mode is unknown or the scheme does not support it.
    """
    settings = settings or RunSettings()
    if mode not in MODES:
        raise UsageError(f"Unknown mode {mode!r}; expected 'point' or 'area'")
    if scheme.kind == 'closed_form' and mode == 'area':
        logger.error("closed_form scheme requested in area mode")
        raise UsageError("The closed_form scheme only supports point mode")

    grid = area_grid(scn, settings.grid_step) if mode == 'area' else None
    target = grid if mode == 'area' else scn.p_r

    start = time.perf_counter()
    result = _optimize(scn, scheme, mode, target, settings)
    elapsed = time.perf_counter() - start

    evaluated = scn
    if result.irs_center is not None:
        evaluated = scn.with_changes(p_c=result.irs_center)
    rot = result.best_rotation
    snr, product, min_product, worst = evaluate_rotation(evaluated, rot, mode, grid)
    points = grid.points if mode == 'area' else [scn.p_r]
    ok = all(feasible(evaluated, rot, point).feasible for point in points)

    logger.info(f"Scheme {scheme.kind} ({mode}): SNR {snr:.4f} dB at {rot.to_degrees()} deg in {elapsed:.2f} s")
    return RunReport(scheme=scheme.kind, mode=mode, rotation=rot, snr_db=snr, delta_product=product,
                     min_delta_product=min_product, worst_point=tuple(worst), irs_center=evaluated.p_c,
                     feasible=ok, best_fitness=result.best_fitness, trace=result.trace,
                     evaluations=result.evaluations, wall_clock=elapsed, config=scenario_to_config(evaluated))


def apply_sweep_value(scn: Scenario, variable: str, value: float) -> Scenario:
    """Scenario with one swept parameter replaced.

    Counts get the squarest rectangular shape; p_t is given in dBm.
    """
    if variable == 'p_t':
        return scn.with_changes(p_t=dbm_to_watts(value))
    if variable == 'm_antennas':
        rows, cols = squarest_shape(int(value))
        return scn.with_changes(bs=ArraySpec(rows, cols, scn.bs.spacing))
    if variable == 'n_elements':
        rows, cols = squarest_shape(int(value))
        return scn.with_changes(irs=ArraySpec(rows, cols, scn.irs.spacing, scn.irs.element_len))
    if variable == 'area_y':
        return scn.with_changes(area_y=value)
    if variable == 'irs_altitude':
        return scn.with_changes(p_c=(scn.p_c[0], scn.p_c[1], value))
    raise UsageError(f"Unknown sweep variable {variable!r}")


def reports_frame(reports: Sequence[RunReport]) -> pd.DataFrame:
    return pd.DataFrame([report_to_row(report) for report in reports])


def run_sweep(scn: Scenario, schemes: Sequence[SchemeSpec], sweep: SweepSpec, mode: str,
              settings: Optional[RunSettings] = None, workers: Optional[int] = None) -> pd.DataFrame:
    """Run every (scheme, value) cell of a sweep.

    Cells run on a thread pool; rows come back in (scheme, value) order
    regardless of completion order.

    Returns:
        Long-format DataFrame keyed by (scheme, variable, value).
    """
    settings = settings or RunSettings()
    workers = workers or settings.workers
    cells = [(i, j, scheme, value) for i, scheme in enumerate(schemes) for j, value in enumerate(sweep.values)]

    def run_cell(cell) -> RunReport:
        _, _, scheme, value = cell
        return run_scheme(apply_sweep_value(scn, sweep.variable, value), scheme, mode, settings)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        reports = list(pool.map(run_cell, cells))

    rows = []
    for (_, _, scheme, value), report in zip(cells, reports):
        rows.append({'scheme': scheme.kind, 'variable': sweep.variable, 'value': value, **report_to_row(report)})
    frame = pd.DataFrame(rows)
    if sweep.variable == 'area_y':
        frame.attrs['note'] = AREA_Y_NOTE
    logger.info(f"Sweep over {sweep.variable} finished: {len(rows)} runs")
    return frame


def run_benchmark(scn: Scenario, mode: str, settings: Optional[RunSettings] = None) -> List[RunReport]:
    """Run every scheme supported by the mode, in SCHEME_KINDS order."""
    settings = settings or RunSettings()
    kinds = [kind for kind in SCHEME_KINDS if not (mode == 'area' and kind == 'closed_form')]
    return [run_scheme(scn, SchemeSpec.from_settings(kind, settings), mode, settings) for kind in kinds]


def field_frame(scn: Scenario, rot: Rotation, grid: AreaGrid) -> pd.DataFrame:
    """Per-point delta1, delta2, their product and far-field SNR."""
    points = grid.points
    pair = grid_deltas(scn, rot, grid)
    powers = farfield_power_points(scn, rot, points)
    return pd.DataFrame({
        'x': points[:, 0],
        'y': points[:, 1],
        'delta1': pair.delta1,
        'delta2': pair.delta2,
        'delta_product': pair.product,
        'snr_db': snr_db(powers, scn.noise),
    })


def write_table(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write a DataFrame as UTF-8 CSV with 17-significant-digit floats.

    Raises:
        OutputError: If the file cannot be written.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding='utf-8')
        logger.info(f"Wrote {len(frame)} rows to {path}")
        return path
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise OutputError(f"Failed to write {path}: {e}")


def write_json(data: Dict[str, Any], path: Union[str, Path]) -> Path:
    """Write a JSON metadata document.

    Raises:
        OutputError: If the file cannot be written.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2)
        logger.info(f"Wrote metadata to {path}")
        return path
    except OSError as e:
        logger.error(f"Failed to write {path}: {e}")
        raise OutputError(f"Failed to write {path}: {e}")


def emit_field(scn: Scenario, rot: Rotation, grid: AreaGrid, path: Union[str, Path]) -> Tuple[Path, Path]:
    """Write the per-point field CSV plus a JSON sidecar next to it.

    The sidecar holds the rotation, the scenario hash, the minimum delta1*delta2
    with its location, the minimum SNR and a UTC creation timestamp.

    Returns:
        Tuple (csv_path, sidecar_path).

    Raises:
        OutputError: If either file cannot be written.
    """
    frame = field_frame(scn, rot, grid)
    csv_path = write_table(frame, path)
    k = int(frame['delta_product'].idxmin())
    theta_deg, phi_deg = rot.to_degrees()
    sidecar = {
        'rotation': {'theta': rot.theta, 'phi': rot.phi, 'theta_deg': theta_deg, 'phi_deg': phi_deg},
        'scenario_hash': scenario_hash(scn),
        'points': len(frame),
        'min_delta_product': float(frame['delta_product'].iloc[k]),
        'argmin': {'x': float(frame['x'].iloc[k]), 'y': float(frame['y'].iloc[k])},
        'min_snr_db': float(frame['snr_db'].min()),
        'created_at': datetime.now(timezone.utc).isoformat(),
    }
    sidecar_path = write_json(sidecar, csv_path.with_suffix('.json'))
    return csv_path, sidecar_path


def landscape_frame(scn: Scenario, step: float, fp: FitnessParams,
                    p_U: Optional[Sequence[float]] = None) -> pd.DataFrame:
    """delta1, delta2, their product and fitness over the (theta, phi) lattice.

    Rows run theta outer, phi inner, the order exhaustive_search visits.
    """
    target = scn.p_r if p_U is None else p_U
    lattice = rotation_lattice(step)
    thetas, phis = (axis.ravel() for axis in np.meshgrid(lattice, lattice, indexing='ij'))
    pair, ok = rotation_deltas(scn, thetas, phis, target)
    return pd.DataFrame({
        'theta': thetas,
        'phi': phis,
        'theta_deg': np.degrees(thetas),
        'phi_deg': np.degrees(phis),
        'delta1': pair.delta1,
        'delta2': pair.delta2,
        'delta_product': pair.product,
        'fitness': single_values(scn, thetas, phis, target, fp),
        'feasible': ok,
    })


def _marker(scn: Scenario, rot: Rotation, target, fp: FitnessParams) -> Dict[str, Any]:
    pair = deltas(path_angles(scn, rot, target), scn.l_norm)
    theta_deg, phi_deg = rot.to_degrees()
    return {
        'theta': float(rot.theta), 'phi': float(rot.phi), 'theta_deg': theta_deg, 'phi_deg': phi_deg,
        'delta1': float(pair.delta1), 'delta2': float(pair.delta2), 'delta_product': float(pair.product),
        'fitness': fitness_single(scn, rot, target, fp),
    }


def landscape_markers(scn: Scenario, settings: RunSettings,
                      p_U: Optional[Sequence[float]] = None) -> Dict[str, Dict[str, Any]]:
    """Exhaustive, swarm and closed-form optima to overlay on the landscape."""
    target = scn.p_r if p_U is None else p_U
    closed = closed_form_rotation(scn, target, settings.ratio_threshold)
    optima = {
        'exhaustive': exhaustive_search(scn, target, settings.es_step, settings.fitness).best_rotation,
        'proposed': pso_single(scn, target, settings.pso, settings.fitness).best_rotation,
        'closed_form': closed.rotation,
    }
    markers = {name: _marker(scn, rot, target, settings.fitness) for name, rot in optima.items()}
    markers['closed_form']['valid'] = bool(closed.valid)
    return markers


def emit_landscape(scn: Scenario, settings: RunSettings, path: Union[str, Path], step: Optional[float] = None,
                   p_U: Optional[Sequence[float]] = None) -> Tuple[Path, Path]:
    """Write the rotation landscape CSV plus a JSON sidecar with the optima.

    Args:
        step: Lattice spacing in radians; defaults to the exhaustive-search step.

    Returns:
        Tuple (csv_path, sidecar_path).

    Raises:
        OutputError: If either file cannot be written.
    """
    step = settings.es_step if step is None else step
    target = scn.p_r if p_U is None else p_U
    frame = landscape_frame(scn, step, settings.fitness, target)
    csv_path = write_table(frame, path)
    k = int(frame['fitness'].idxmax())
    best = frame.iloc[k]
    sidecar = {
        'target': [float(v) for v in target],
        'step_deg': math.degrees(step),
        'scenario_hash': scenario_hash(scn),
        'points': len(frame),
        'lattice_best': {name: float(best[name]) for name in
                         ('theta', 'phi', 'theta_deg', 'phi_deg', 'delta_product', 'fitness')},
        'optima': landscape_markers(scn, settings, target),
        'created_at': datetime.now(timezone.utc).isoformat(),
    }
    sidecar_path = write_json(sidecar, csv_path.with_suffix('.json'))
    return csv_path, sidecar_path


def default_output_dir() -> Path:
    """Output directory from IRS_ROTATION_OUT_DIR, else ./outputs."""
    return Path(os.environ.get('IRS_ROTATION_OUT_DIR', 'outputs'))
