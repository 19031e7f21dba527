import pytest
import os
import sys
import math

# Add project root to Python path for imports
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from models import ArraySpec, Scenario
from objective import FitnessParams
from optimizer import PsoParams
from scenario_config import RunSettings, scenario_from_config

# Configure pytest
def pytest_configure(config):
    """Configure pytest."""
    config.addinivalue_line(
        "markers",
        "unit: mark test as a unit test"
    )
    config.addinivalue_line(
        "markers",
        "integration: mark test as an integration test"
    )
    config.addinivalue_line(
        "markers",
        "slow: mark test as slow to run"
    )

@pytest.fixture(autouse=True)
def setup_logging():
    """Configure logging for tests."""
    import logging
    logging.basicConfig(level=logging.INFO)
    return logging.getLogger(__name__)

@pytest.fixture
def reference_scenario():
    """Reference scenario: 256-element IRS, 128-antenna BS, lambda = 0.1 m."""
    scenario, _ = scenario_from_config({})
    return scenario

@pytest.fixture
def toy_scenario():
    """Small 4x4 IRS with a 2x2 BS at the reference positions."""
    return Scenario(
        p_b=(50.0, 20.0, 0.0),
        p_c=(0.0, 50.0, 10.0),
        p_r=(30.0, 80.0, 0.0),
        area_x=4.0,
        area_y=4.0,
        irs=ArraySpec(4, 4, 0.05, 0.025),
        bs=ArraySpec(2, 2, 0.05),
        beta=1e-4,
        wavelength=0.1,
        p_t=1.0,
        noise=1e-12,
    )

@pytest.fixture
def user():
    """Single-target user at the area center."""
    return (30.0, 80.0, 0.0)

@pytest.fixture
def fitness_params():
    return FitnessParams(tau=10.0)

@pytest.fixture
def small_pso():
    """Seeded swarm small enough for fast unit tests."""
    return PsoParams(swarm_size=20, max_iters=10, seed=7)

@pytest.fixture
def fast_settings(small_pso):
    """Run settings with a small swarm, coarse grids and a coarse exhaustive search."""
    return RunSettings(pso=small_pso, grid_step=2.0, es_step=math.radians(2.0), movable_step=5.0)
