import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipbench.tire import (FlatCurveError, TireModel, calibrate_stiffness,
                            force_curve, optimal_slip, reference_tire,
                            tire_with_peak)


def grid_argmax(tire, fz=4000.0, mu=1.0):
    """Independent brute-force peak search at 1e-4 resolution."""
    kappas = np.arange(0.0, 0.2 + 5e-5, 1e-4)
    forces = np.array([tire.force(float(k), fz, mu) for k in kappas])
    return float(kappas[np.argmax(forces)])


def test_zero_slip_zero_force():
    tire = reference_tire()
    for fz in (0.0, 1000.0, 5000.0):
        assert tire.force(0.0, fz) == 0.0


def test_odd_symmetry_sampled():
    tire = reference_tire()
    for kappa in (0.01, 0.05, 0.1, 0.15, 0.2):
        assert tire.force(kappa, 3000.0) + tire.force(-kappa, 3000.0) == pytest.approx(0.0, abs=1e-9)


@given(kappa=st.floats(-1.0, 1.0), fz=st.floats(0.0, 8000.0))
@settings(max_examples=200)
def test_odd_symmetry_property(kappa, fz):
    tire = reference_tire()
    assert tire.force(-kappa, fz) == pytest.approx(-tire.force(kappa, fz), abs=1e-9)


def test_reference_tire_peak_at_calibration_target():
    assert grid_argmax(reference_tire()) == pytest.approx(0.044, abs=1e-3)


def test_recalibration_moves_peak():
    assert grid_argmax(tire_with_peak(0.06)) == pytest.approx(0.06, abs=1e-3)
    assert grid_argmax(tire_with_peak(0.10)) == pytest.approx(0.10, abs=1e-3)


def test_friction_scaling_preserves_peak_location_for_zero_curvature():
    tire = tire_with_peak(0.044, curvature_e=0.0)
    assert grid_argmax(tire, mu=1.0) == pytest.approx(grid_argmax(tire, mu=0.5), abs=1e-4)
    assert optimal_slip(tire, mu=0.5) == pytest.approx(optimal_slip(tire, mu=1.0), abs=1e-4)


def test_degenerate_tire_flagged():
    flat = TireModel(stiffness_b=40.0, shape_c=1.6, peak_d=0.0, curvature_e=0.5)
    with pytest.raises(FlatCurveError):
        optimal_slip(flat)


def test_single_interior_peak():
    tire = reference_tire()
    kappas = np.arange(1e-4, 0.2, 1e-4)
    forces = force_curve(tire, kappas, fz=1.0)
    diffs = np.sign(np.diff(forces))
    # exactly one sign change of the derivative: rise then fall
    changes = np.sum(np.abs(np.diff(diffs)) > 0)
    assert changes == 1


def test_calibrated_stiffness_is_monotone_in_peak():
    b_tight = calibrate_stiffness(1.6, 0.6, 0.03)
    b_loose = calibrate_stiffness(1.6, 0.6, 0.08)
    assert b_tight > b_loose


def test_force_curve_matches_scalar_path():
    tire = reference_tire()
    kappas = np.linspace(-0.2, 0.2, 41)
    vec = force_curve(tire, kappas, fz=2500.0, mu=0.7)
    scalar = [tire.force(float(k), 2500.0, 0.7) for k in kappas]
    np.testing.assert_allclose(vec, scalar, rtol=1e-13, atol=1e-10)


def test_invalid_shapes_rejected():
    with pytest.raises(ValueError):
        TireModel(stiffness_b=40.0, shape_c=2.5, peak_d=1.0, curvature_e=0.5)
    with pytest.raises(ValueError):
        TireModel(stiffness_b=-1.0, shape_c=1.5, peak_d=1.0, curvature_e=0.5)
    with pytest.raises(ValueError):
        calibrate_stiffness(1.6, 0.6, 0.5)
