import json
import math
import os

import pytest

from models import ArraySpec, ValidationError
from scenario_config import (
    SCENARIO_DEFAULTS, ConfigError, ConfigReadError, RunSettings, load_config, load_scenario, scenario_from_config,
    scenario_hash, scenario_to_config, settings_from_config
)

REFERENCE_CONFIG = os.path.join(os.path.dirname(__file__), '..', 'scenario_reference.json')

def _write(tmp_path, text, name='scenario.json'):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return str(path)

def test_empty_config_uses_reference_defaults():
    """Test that every key defaults to the reference setup."""
    scenario, defaulted = scenario_from_config({})
    assert defaulted == sorted(SCENARIO_DEFAULTS)
    assert scenario.p_b == (50.0, 20.0, 0.0)
    assert scenario.p_c == (0.0, 50.0, 10.0)
    assert scenario.p_r == (30.0, 80.0, 0.0)
    assert scenario.area_x == 10.0 and scenario.area_y == 10.0
    assert scenario.irs == ArraySpec(16, 16, 0.05, 0.025)
    assert scenario.bs == ArraySpec(16, 8, 0.05)
    assert scenario.beta == pytest.approx(1e-4)
    assert scenario.p_t == pytest.approx(1.0)
    assert scenario.noise == pytest.approx(1e-12)
    assert scenario.l_norm == pytest.approx(0.25)

def test_partial_config_reports_defaulted_keys():
    """Test that supplied keys are not listed as defaulted."""
    _, defaulted = scenario_from_config({'p_t': '20 dBm', 'area_y': 20})
    assert 'p_t' not in defaulted and 'area_y' not in defaulted
    assert 'beta' in defaulted

def test_unit_strings():
    """Test unit-string parsing of physical quantities."""
    scenario, _ = scenario_from_config({'p_t': '30 dBm', 'noise': '1e-12 W', 'beta': '-30 dB',
                                        'area_x': '500 cm', 'irs_spacing': '4 cm', 'element_len': '2 cm'})
    assert scenario.p_t == pytest.approx(1.0)
    assert scenario.noise == pytest.approx(1e-12)
    assert scenario.beta == pytest.approx(1e-3)
    assert scenario.area_x == pytest.approx(5.0)
    assert scenario.irs.spacing == pytest.approx(0.04)
    assert scenario.irs.element_len == pytest.approx(0.02)

def test_explicit_shape():
    """Test that a matching shape is used and a mismatched one names the key."""
    scenario, _ = scenario_from_config({'n_elements': 300, 'irs_shape': [15, 20]})
    assert (scenario.irs.n_rows, scenario.irs.n_cols) == (15, 20)
    with pytest.raises(ValidationError) as exc_info:
        scenario_from_config({'n_elements': 300, 'irs_shape': [16, 16]})
    assert 'irs_shape' in str(exc_info.value)

def test_invalid_values_name_the_key():
    """Test that malformed fields are reported by name."""
    cases = [({'p_t': 'loud'}, 'p_t'), ({'bs_center': [1, 2]}, 'bs_center'), ({'wavelength': -0.1}, 'wavelength'),
             ({'m_antennas': 0}, 'bs_shape'), ({'l_norm': 0.8}, 'irs')]
    for config, key in cases:
        with pytest.raises(ValidationError) as exc_info:
            scenario_from_config(config)
        assert key in str(exc_info.value)

def test_bs_off_ground_rejected():
    """Test that a BS above the ground plane is rejected."""
    with pytest.raises(ValidationError):
        scenario_from_config({'bs_center': [50, 20, 5]})

def test_unknown_keys_rejected():
    with pytest.raises(ValidationError) as exc_info:
        scenario_from_config({'bs_centre': [50, 20, 0]})
    assert 'bs_centre' in str(exc_info.value)
    with pytest.raises(ValidationError):
        settings_from_config({'optimizer': {'swarm': 10}})

def test_optimizer_section():
    """Test that the optimizer section overrides run settings."""
    settings = settings_from_config({'optimizer': {'swarm_size': 20, 'es_step_deg': 1.0, 'movable_range': [10, 90],
                                                   'tau': 5.0, 'seed': 3, 'workers': 2}})
    assert settings.pso.swarm_size == 20
    assert settings.pso.seed == 3
    assert settings.pso.workers == 2 and settings.workers == 2
    assert settings.es_step == pytest.approx(math.radians(1.0))
    assert settings.movable_range == (10.0, 90.0)
    assert settings.fitness.tau == 5.0
    assert settings_from_config({}) == RunSettings()

def test_run_settings_validation():
    """Test rejection of non-positive steps and unordered ranges."""
    for bad in (dict(grid_step=0.0), dict(es_step=-1.0), dict(movable_step=0.0), dict(movable_range=(5.0, 1.0)),
                dict(workers=0)):
        with pytest.raises(ValidationError):
            RunSettings(**bad)

def test_load_reference_file():
    """Test that the shipped config reproduces the defaults."""
    loaded = load_config(REFERENCE_CONFIG)
    assert loaded.defaulted == []
    assert loaded.scenario == scenario_from_config({})[0]
    assert loaded.settings == RunSettings()

def test_load_empty_file(tmp_path):
    """Test that an empty file means all defaults."""
    scenario, defaulted = load_scenario(_write(tmp_path, ''))
    assert scenario == scenario_from_config({})[0]
    assert defaulted == sorted(SCENARIO_DEFAULTS)

def test_load_malformed_json(tmp_path):
    """Test that a syntax error reports its line number."""
    path = _write(tmp_path, '{\n  "area_x": 10,\n  oops\n}\n')
    with pytest.raises(ConfigError) as exc_info:
        load_config(path)
    assert 'line 3' in str(exc_info.value)
    assert not isinstance(exc_info.value, ConfigReadError)

def test_load_missing_file(tmp_path):
    """Test that an unreadable file raises the read error."""
    with pytest.raises(ConfigReadError):
        load_config(str(tmp_path / 'missing.json'))

def test_canonical_round_trip(tmp_path, reference_scenario, toy_scenario):
    """Test that loading the canonical echo reproduces the scenario."""
    for scenario in (reference_scenario, toy_scenario, reference_scenario.with_changes(reflection_model='mixed')):
        echo = scenario_to_config(scenario)
        assert scenario_from_config(echo)[0] == scenario
        path = _write(tmp_path, json.dumps(echo))
        assert load_scenario(path)[0] == scenario

def test_scenario_hash(reference_scenario):
    """Test that the hash is stable and sensitive to every field."""
    digest = scenario_hash(reference_scenario)
    assert len(digest) == 64
    assert digest == scenario_hash(scenario_from_config({})[0])
    assert digest != scenario_hash(reference_scenario.with_changes(p_t=2.0))
    assert digest != scenario_hash(reference_scenario.with_changes(p_c=(0.0, 50.0, 11.0)))
