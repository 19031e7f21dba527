import math

import numpy as np
import pytest

from channel import farfield_power_points
from geometry import path_angles
from models import DomainError, Rotation, ValidationError
from objective import AreaGrid, area_grid, deltas, fitness_area, fitness_single
from optimizer import (
    DEFAULT_FIXED_ANGLE, ParticleSwarm, PsoParams, closed_form_rotation, exhaustive_placement, exhaustive_search,
    inertia_weight, pso_area, pso_single, rotation_lattice
)

def test_closed_form_reference(reference_scenario, user):
    """Test the closed-form angles and validity ratio on the reference geometry."""
    result = closed_form_rotation(reference_scenario, user)
    assert result.rotation.theta == pytest.approx(math.atan(0.6))
    assert result.rotation.theta == pytest.approx(0.5404, abs=1e-4)
    assert result.rotation.phi == pytest.approx(-0.1698, abs=1e-4)
    assert result.ratio == pytest.approx(2400 * math.sqrt(3500) / 28000)
    assert not result.valid
    assert closed_form_rotation(reference_scenario, user, ratio_threshold=5.0).valid

def test_closed_form_surface_on_ground(reference_scenario, user):
    """Test that an IRS at zero height needs no elevation rotation."""
    result = closed_form_rotation(reference_scenario.with_changes(p_c=(0.0, 50.0, 0.0)), user)
    assert result.rotation.phi == 0.0

def test_closed_form_high_surface(reference_scenario, user):
    """Test that a very high IRS tilts towards facing straight down."""
    result = closed_form_rotation(reference_scenario.with_changes(p_c=(0.0, 50.0, 1e6)), user)
    assert result.rotation.phi == pytest.approx(-math.pi / 2, abs=1e-3)

def test_closed_form_distant_bs(reference_scenario, user):
    """Test that a BS far along x drives both angles to zero."""
    result = closed_form_rotation(reference_scenario.with_changes(p_b=(1e6, 20.0, 0.0)), user)
    assert abs(result.rotation.theta) < 1e-4
    assert abs(result.rotation.phi) < 1e-4

def test_closed_form_rejects_aligned_x(reference_scenario, user):
    """Test that x_B = x_c is a domain error."""
    with pytest.raises(DomainError):
        closed_form_rotation(reference_scenario.with_changes(p_b=(0.0, 20.0, 0.0)), user)

def test_closed_form_normal_points_at_bs(reference_scenario, user):
    """Test that the closed form gives normal incidence from the BS."""
    rot = closed_form_rotation(reference_scenario, user).rotation
    angles = path_angles(reference_scenario, rot, user)
    assert angles.phi_i == pytest.approx(0.0, abs=1e-7)

def test_pso_params_validation():
    """Test that bad swarm settings are rejected."""
    for bad in (dict(swarm_size=0), dict(max_iters=0), dict(c1=-1.0), dict(v_clamp=0.0),
                dict(seed_fraction=1.5), dict(seed_radius=-0.1), dict(workers=0)):
        with pytest.raises(ValidationError):
            PsoParams(**bad)

def test_inertia_weight_endpoints():
    """Test w(0) = w_ini and w(T) = w_end, and the swapped schedule."""
    params = PsoParams()
    assert inertia_weight(0, params) == 0.4
    assert inertia_weight(params.max_iters, params) == 0.9
    assert inertia_weight(15, params) == pytest.approx(0.65)
    swapped = PsoParams(swap_inertia=True)
    assert inertia_weight(0, swapped) == 0.9
    assert inertia_weight(swapped.max_iters, swapped) == 0.4

def test_particle_swarm_quadratic():
    """Test that the engine finds the peak of a concave bowl inside the box."""
    def bowl(positions):
        return -np.sum((positions - np.array([0.3, -0.2])) ** 2, axis=1)

    params = PsoParams(swarm_size=30, max_iters=40, seed=3, v_clamp=0.2)
    swarm = ParticleSwarm(bowl, np.array([-1.0, -1.0]), np.array([1.0, 1.0]), params)
    position, value, trace = swarm.run()
    assert np.allclose(position, [0.3, -0.2], atol=0.05)
    assert value == trace[-1]
    assert swarm.evaluations == 30 * 40

def test_particle_swarm_stays_in_box():
    """Test that the global best of an unbounded objective sits on the clamp."""
    params = PsoParams(swarm_size=10, max_iters=20, seed=4)
    swarm = ParticleSwarm(lambda positions: positions[:, 0], np.array([-0.5]), np.array([0.5]), params)
    position, value, _ = swarm.run()
    assert -0.5 <= position[0] <= 0.5
    assert value <= 0.5

def test_pso_single_report(reference_scenario, user, small_pso, fitness_params):
    """Test trace monotonicity, evaluation count, feasibility and seeding."""
    report = pso_single(reference_scenario, user, small_pso, fitness_params)
    assert report.method == 'pso_single'
    assert len(report.trace) == small_pso.max_iters
    assert all(b >= a for a, b in zip(report.trace, report.trace[1:]))
    assert report.evaluations == small_pso.swarm_size * small_pso.max_iters
    assert report.feasible
    seed = closed_form_rotation(reference_scenario, user).rotation
    assert report.best_fitness >= fitness_single(reference_scenario, seed, user, fitness_params) - 1e-9
    assert report.best_fitness == pytest.approx(
        fitness_single(reference_scenario, report.best_rotation, user, fitness_params), rel=1e-12)

def test_pso_single_deterministic(reference_scenario, user, small_pso, fitness_params):
    """Test bit-identical reports for the same seed."""
    first = pso_single(reference_scenario, user, small_pso, fitness_params)
    second = pso_single(reference_scenario, user, small_pso, fitness_params)
    assert first == second

def test_pso_single_pinned(reference_scenario, user, small_pso, fitness_params):
    """Test that a pinned angle is reported unchanged."""
    report = pso_single(reference_scenario, user, small_pso, fitness_params, pin_phi=DEFAULT_FIXED_ANGLE)
    assert report.best_rotation.phi == DEFAULT_FIXED_ANGLE
    report = pso_single(reference_scenario, user, small_pso, fitness_params, pin_theta=0.0)
    assert report.best_rotation.theta == 0.0
    with pytest.raises(ValidationError):
        pso_single(reference_scenario, user, small_pso, fitness_params, pin_theta=0.0, pin_phi=0.0)

def test_pso_area_single_point_matches_pso_single(reference_scenario, user, small_pso, fitness_params):
    """Test that a one-point grid reproduces the single-target optimum."""
    point_scn = reference_scenario.with_changes(area_x=0.0, area_y=0.0)
    grid = area_grid(point_scn, 1.0)
    area = pso_area(point_scn, grid, small_pso, fitness_params)
    single = pso_single(point_scn, user, small_pso, fitness_params)
    assert area.feasible and single.feasible
    assert area.worst_point == user
    area_product = deltas(path_angles(point_scn, area.best_rotation, user), point_scn.l_norm).product
    single_product = deltas(path_angles(point_scn, single.best_rotation, user), point_scn.l_norm).product
    seed = closed_form_rotation(point_scn, user).rotation
    seed_product = deltas(path_angles(point_scn, seed, user), point_scn.l_norm).product
    assert area_product >= seed_product - 1e-9
    assert single_product >= seed_product - 1e-9
    assert area_product == pytest.approx(single_product, rel=0.05)

def test_pso_area_workers_parity(reference_scenario, fitness_params):
    """Test that threaded scoring gives the same report as serial scoring."""
    grid = area_grid(reference_scenario, 5.0)
    serial = pso_area(reference_scenario, grid, PsoParams(swarm_size=8, max_iters=4, seed=9), fitness_params)
    threaded = pso_area(reference_scenario, grid, PsoParams(swarm_size=8, max_iters=4, seed=9, workers=3), fitness_params)
    assert serial == threaded
    assert serial.evaluations == 32
    assert serial.best_fitness == pytest.approx(
        fitness_area(reference_scenario, serial.best_rotation, grid, fitness_params)[0], rel=1e-12)

def test_pso_area_empty_grid(reference_scenario, small_pso, fitness_params):
    with pytest.raises(DomainError):
        pso_area(reference_scenario, AreaGrid(np.array([]), np.array([])), small_pso, fitness_params)

def test_rotation_lattice():
    """Test endpoints and spacing of the search lattice."""
    lattice = rotation_lattice(math.pi / 2)
    assert lattice.tolist() == [-math.pi / 2, 0.0, math.pi / 2]
    fine = rotation_lattice(math.radians(0.5))
    assert len(fine) == 361
    assert np.max(np.diff(fine)) <= math.radians(0.5) + 1e-12
    with pytest.raises(ValidationError):
        rotation_lattice(0.0)

def test_exhaustive_search_matches_enumeration(reference_scenario, user, fitness_params):
    """Test the 3x3 lattice against a hand enumeration of the nine candidates."""
    report = exhaustive_search(reference_scenario, user, math.pi / 2, fitness_params)
    candidates = [-math.pi / 2, 0.0, math.pi / 2]
    best, best_rot = -math.inf, None
    for theta in candidates:
        for phi in candidates:
            value = fitness_single(reference_scenario, Rotation(theta, phi), user, fitness_params)
            if value > best:
                best, best_rot = value, Rotation(theta, phi)
    assert report.best_rotation == best_rot
    assert report.best_fitness == pytest.approx(best, rel=1e-12)
    assert report.evaluations == 9
    assert len(report.trace) == 3

def test_exhaustive_search_refinement(reference_scenario, user, fitness_params):
    """Test that halving the step never lowers the best value."""
    coarse = exhaustive_search(reference_scenario, user, math.pi / 8, fitness_params)
    fine = exhaustive_search(reference_scenario, user, math.pi / 16, fitness_params)
    assert fine.best_fitness >= coarse.best_fitness - 1e-12

def test_exhaustive_search_pinned(reference_scenario, user, fitness_params):
    """Test the one-dimensional search with a pinned elevation."""
    report = exhaustive_search(reference_scenario, user, math.radians(5.0), fitness_params, pin_phi=0.0)
    assert report.best_rotation.phi == 0.0
    assert report.evaluations == len(rotation_lattice(math.radians(5.0)))

def test_exhaustive_search_area(reference_scenario, fitness_params):
    """Test area mode: worst point on the grid and value equal to fitness_area."""
    grid = area_grid(reference_scenario, 5.0)
    report = exhaustive_search(reference_scenario, grid, math.radians(10.0), fitness_params)
    value, worst = fitness_area(reference_scenario, report.best_rotation, grid, fitness_params)
    assert report.best_fitness == pytest.approx(value, rel=1e-12)
    assert report.worst_point == tuple(worst)
    assert report.feasible

def test_exhaustive_placement_point(reference_scenario, user):
    """Test that the chosen IRS center maximizes SNR over the candidates."""
    y_values = np.arange(0.0, 101.0, 5.0)
    report = exhaustive_placement(reference_scenario, user, y_values)
    assert report.method == 'placement'
    assert report.best_rotation == Rotation(0.0, 0.0)
    assert report.irs_center[1] in y_values
    snrs = [float(farfield_power_points(reference_scenario.with_changes(p_c=(0.0, y, 10.0)), Rotation(0.0, 0.0),
                                        np.array([user]))[0] / reference_scenario.noise) for y in y_values]
    assert report.best_fitness == pytest.approx(max(snrs), rel=1e-12)
    assert report.irs_center[1] == y_values[int(np.argmax(snrs))]
    assert report.evaluations == len(y_values)

def test_exhaustive_placement_all_infeasible(reference_scenario, user):
    """Test that a BS behind every placement keeps the configured center."""
    behind = reference_scenario.with_changes(p_b=(-50.0, 20.0, 0.0))
    report = exhaustive_placement(behind, user, [40.0, 50.0, 60.0])
    assert report.best_fitness == -math.inf
    assert not report.feasible
    assert report.irs_center == behind.p_c

def test_exhaustive_placement_area(reference_scenario):
    """Test that area mode reports the worst grid point at the chosen center."""
    grid = area_grid(reference_scenario, 5.0)
    report = exhaustive_placement(reference_scenario, grid, np.arange(0.0, 101.0, 10.0))
    assert report.feasible
    assert np.any(np.all(grid.points == np.asarray(report.worst_point), axis=1))
