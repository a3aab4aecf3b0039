import math

import pytest

from slipbench.config import (ConfigError, config_from_text, default_config,
                              load_config)


def test_default_config_is_consistent():
    cfg = default_config()
    assert cfg.cost.horizon == 1450
    assert cfg.cost.p_weight == cfg.cost.q_weight == 250.0
    assert cfg.cost.r_weight == 1.0
    assert cfg.vehicle.sample_time == 0.005
    assert cfg.esc.perturbation_amplitude == pytest.approx(0.005)
    assert cfg.esc.perturbation_frequency == pytest.approx(2.0 * math.pi)
    assert cfg.torque_limit == 500.0


def test_partial_file_keeps_defaults(tmp_path):
    path = tmp_path / "partial.cfg"
    path.write_text("[mpc]\nhorizon = 99\n")
    cfg = load_config(path)
    assert cfg.cost.horizon == 99
    assert cfg.cost.p_weight == 250.0       # untouched default
    assert cfg.vehicle.mass == 750.0


def test_unknown_key_named_in_error():
    with pytest.raises(ConfigError, match="unknown key .mpc. horizons"):
        config_from_text("[mpc]\nhorizons = 10\n")


def test_unknown_section_named_in_error():
    with pytest.raises(ConfigError, match=r"unknown section \[rockets\]"):
        config_from_text("[rockets]\nthrust = 10\n")


def test_type_error_reports_key():
    with pytest.raises(ConfigError, match="horizon"):
        config_from_text("[mpc]\nhorizon = soon\n")


def test_parse_error_carries_line_number():
    with pytest.raises(ConfigError, match="line"):
        config_from_text("[tire]\npeak_slip 0.05\n")


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/path.cfg")


def test_tire_calibration_from_peak():
    cfg = config_from_text("[tire]\npeak_slip = 0.06\n")
    from slipbench.tire import optimal_slip
    assert optimal_slip(cfg.tire) == pytest.approx(0.06, abs=1e-3)


def test_tire_explicit_stiffness_bypasses_calibration():
    cfg = config_from_text("[tire]\nstiffness_b = 30.0\n")
    assert cfg.tire.stiffness_b == 30.0


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        config_from_text("[vehicle]\nmass = -10\n")
    with pytest.raises(ConfigError):
        config_from_text("[esc]\nkappa_min = 0.2\nkappa_max = 0.1\n")


def test_boolean_coercion():
    cfg = config_from_text("[esc]\ndeactivate_on_brake = off\n")
    assert cfg.esc.deactivate_on_brake is False
    with pytest.raises(ConfigError):
        config_from_text("[esc]\ndeactivate_on_brake = perhaps\n")


def test_pid_limits_follow_torque_limit():
    cfg = config_from_text("[limits]\nmotor_torque_max = 321.0\n")
    assert cfg.pid.output_limit == 321.0
    assert cfg.torque_limit == 321.0


def test_sliding_bounds_default_to_esc_bounds():
    cfg = config_from_text("[esc]\nkappa_min = 0.01\nkappa_max = 0.12\n")
    assert cfg.sliding.kappa_min == 0.01
    assert cfg.sliding.kappa_max == 0.12
