import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipbench.esc import (EscConfig, EscEstimator, HighPassFilter,
                           LateralScaling, Supervisor, demodulate, hpf_step,
                           integrate_saturating, lateral_scale, perturb,
                           sign_for_mode)

TS = 0.005
WP = 2.0 * math.pi


# -- perturbation -------------------------------------------------------------

def test_zero_amplitude_is_identity():
    cfg = EscConfig(perturbation_amplitude=1e-300)
    assert perturb(0.03, 0.37, cfg) == pytest.approx(0.03)


def test_zero_time_is_identity():
    assert perturb(0.03, 0.0, EscConfig()) == 0.03


def test_peak_over_one_period():
    cfg = EscConfig(perturbation_amplitude=0.005)
    ts = np.linspace(0.0, 1.0, 2001)
    values = [perturb(0.03, float(t), cfg) for t in ts]
    assert max(values) == pytest.approx(0.035, abs=1e-6)
    assert min(values) == pytest.approx(0.025, abs=1e-6)


# -- high-pass filter ----------------------------------------------------------

def test_dc_rejection():
    f = HighPassFilter.design(WP, TS)
    n = int(round(10.0 / WP / TS))
    out = [f.step(5.0) for _ in range(2 * n)]
    assert max(abs(v) for v in out[n:]) < 1e-3 * 5.0


def test_zero_input_zero_output():
    f = HighPassFilter.design(WP, TS)
    assert all(f.step(0.0) == 0.0 for _ in range(100))


def test_steady_state_response_matches_designed_transfer_function():
    f = HighPassFilter.design(WP, TS)
    response = f.response_at(WP, TS)
    gain, phase = abs(response), cmath.phase(response)
    # drive with a unit sine at the cutoff and measure the settled cycle
    n_period = int(round(2 * math.pi / WP / TS))
    out = []
    for k in range(12 * n_period):
        out.append(f.step(math.sin(WP * k * TS)))
    tail = np.array(out[-2 * n_period:])
    measured_gain = (tail.max() - tail.min()) / 2.0
    assert measured_gain == pytest.approx(gain, rel=0.02)
    # phase: locate the zero upcrossing of the output vs the input
    t_tail = (np.arange(len(out)) * TS)[-2 * n_period:]
    crossings = np.flatnonzero((tail[:-1] < 0) & (tail[1:] >= 0))
    t_cross = t_tail[crossings[0]]
    expected_cross = (-phase / WP) % (2 * math.pi / WP)
    measured_shift = t_cross % (2 * math.pi / WP)
    assert measured_shift == pytest.approx(expected_cross, abs=0.02 * 2 * math.pi / WP)


def test_analytic_gain_at_cutoff_matches_continuous_prototype():
    # |H(j wc)| of s^2/(s^2 + 2 z wc s + wc^2) is 1/(2 z)
    f = HighPassFilter.design(WP, TS, damping=0.707)
    assert abs(f.response_at(WP, TS)) == pytest.approx(1.0 / (2 * 0.707), rel=1e-3)


def test_settle_kills_constant_transient():
    f = HighPassFilter.design(WP, TS)
    f.settle(42.0)
    out = [f.step(42.0) for _ in range(200)]
    assert max(abs(v) for v in out) < 1e-12


# -- demodulation ----------------------------------------------------------------

def test_demodulate_zero_inputs():
    assert demodulate(0.0, 1.23) == 0.0
    assert demodulate(1.23, 0.0) == 0.0


def test_demodulate_scaled_signal_recovers_gain_sign():
    ts = np.arange(0.0, 4.0, TS)
    for gain in (2.5, -2.5):
        f1 = HighPassFilter.design(WP, TS)
        f2 = HighPassFilter.design(WP, TS)
        xs, ys = [], []
        for t in ts:
            s = math.sin(WP * t) + 0.3
            xs.append(f1.step(s))
            ys.append(f2.step(gain * s))
        xi = np.array([demodulate(a, b) for a, b in zip(xs, ys)])
        settled = xi[len(xi) // 2:]
        s_sq = np.array(xs[len(xs) // 2:]) ** 2
        assert np.mean(settled) == pytest.approx(gain * np.mean(s_sq), rel=1e-6)
        assert math.copysign(1.0, np.mean(settled)) == math.copysign(1.0, gain)


@pytest.mark.parametrize("kappa0,expected_sign", [(0.030, 1.0), (0.058, -1.0)])
def test_static_quadratic_map_gradient_sign(kappa0, expected_sign):
    """One perturbation period on g(k) = -(k - k*)^2 resolves the side."""
    kappa_star = 0.044
    cfg = EscConfig()
    f_k = HighPassFilter.design(WP, TS)
    f_a = HighPassFilter.design(WP, TS)
    f_k.settle(kappa0)
    f_a.settle(-(kappa0 - kappa_star) ** 2)
    n_period = int(round(2 * math.pi / WP / TS))
    xis = []
    for k in range(n_period):
        kappa = perturb(kappa0, k * TS, cfg)
        ax = -(kappa - kappa_star) ** 2
        xis.append(demodulate(f_k.step(kappa), f_a.step(ax)))
    assert math.copysign(1.0, float(np.mean(xis))) == expected_sign


# -- integrator --------------------------------------------------------------------

def test_integrator_zero_gradient():
    assert integrate_saturating(0.03, 0.0, 100.0, TS, (0.005, 0.15)) == 0.03


def test_integrator_saturates_at_bounds():
    assert integrate_saturating(0.15, 10.0, 100.0, TS, (0.005, 0.15)) == 0.15
    assert integrate_saturating(0.005, -10.0, 100.0, TS, (0.005, 0.15)) == 0.005


def test_integrator_linear_rate():
    kappa = 0.02
    for _ in range(100):
        kappa = integrate_saturating(kappa, 0.001, 100.0, TS, (0.0, 1.0))
    assert kappa == pytest.approx(0.02 + 100 * 0.001 * 100.0 * TS, rel=1e-9)


@given(st.floats(0.005, 0.15), st.floats(-100.0, 100.0))
@settings(max_examples=300)
def test_integrator_stays_in_bounds(kappa, xi):
    out = integrate_saturating(kappa, xi, 100.0, TS, (0.005, 0.15))
    assert 0.005 <= out <= 0.15


# -- lateral scaling -----------------------------------------------------------------

SCALING = LateralScaling(zero_slip_accel=8.0, onset_accel=2.0)


def test_scaling_below_onset():
    assert lateral_scale(0.05, 0.0, SCALING) == 0.05
    assert lateral_scale(0.05, 1.99, SCALING) == 0.05


def test_scaling_above_cutoff():
    assert lateral_scale(0.05, 8.0001, SCALING) == 0.0
    assert lateral_scale(0.05, -11.0, SCALING) == 0.0


def test_scaling_midpoint():
    mid = (8.0 + 2.0) / 2.0
    assert lateral_scale(0.05, mid, SCALING) == pytest.approx(0.025)


@given(st.floats(0.0, 0.15), st.floats(-15.0, 15.0))
@settings(max_examples=300)
def test_scaling_monotone_and_bounded(kappa, a_y):
    out = lateral_scale(kappa, a_y, SCALING)
    assert 0.0 <= out <= kappa + 1e-15
    # monotone non-increasing in |a_y|
    further = lateral_scale(kappa, abs(a_y) + 0.5, SCALING)
    assert further <= out + 1e-12


def test_scaling_continuous_at_breakpoints():
    for edge in (SCALING.onset_accel, SCALING.zero_slip_accel):
        below = lateral_scale(0.08, edge - 1e-9, SCALING)
        above = lateral_scale(0.08, edge + 1e-9, SCALING)
        assert below == pytest.approx(above, abs=1e-8)


# -- mode sign -----------------------------------------------------------------------

def test_sign_for_mode():
    assert sign_for_mode(0.044, braking=False) == 0.044
    assert sign_for_mode(0.044, braking=True) == -0.044
    assert sign_for_mode(0.0, braking=True) == 0.0
    assert sign_for_mode(0.0, braking=False) == 0.0


# -- supervisor -------------------------------------------------------------------------

def make_supervisor(**kw):
    return Supervisor(EscConfig(**kw))


def test_supervisor_idle_when_slip_below_reference():
    sup = make_supervisor()
    mpc, esc = sup.step(kappa_l=0.01, kappa_r=0.01, kappa_ref=0.044,
                        driver_torque=50.0, controller_torque=0.0, a_y=0.0,
                        brakes_applied=False, t=0.0)
    assert not mpc and not esc


def test_supervisor_engages_on_slip_excess_and_holds_before_esc():
    sup = make_supervisor()
    t = 0.0
    mpc, esc = sup.step(0.06, 0.02, 0.044, 400.0, 0.0, 0.0, False, t)
    assert mpc and not esc
    # 1.2 s later with mpc still engaged the estimator joins
    for k in range(int(1.2 / TS)):
        t += TS
        mpc, esc = sup.step(0.05, 0.05, 0.044, 400.0, 300.0, 0.0, False, t)
    assert mpc and esc


def test_supervisor_lateral_acceleration_pauses_esc():
    sup = make_supervisor()
    t = 0.0
    sup.step(0.06, 0.06, 0.044, 400.0, 0.0, 0.0, False, t)
    for k in range(300):
        t += TS
        mpc, esc = sup.step(0.05, 0.05, 0.044, 400.0, 300.0, 0.0, False, t)
    assert esc
    mpc, esc = sup.step(0.05, 0.05, 0.044, 400.0, 300.0, 1.5, False, t + TS)
    assert mpc and not esc
    # and resumes immediately once the car straightens (hold already served)
    mpc, esc = sup.step(0.05, 0.05, 0.044, 400.0, 300.0, 0.5, False, t + 2 * TS)
    assert mpc and esc


def test_supervisor_brakes_pause_esc_by_default():
    sup = make_supervisor()
    t = 0.0
    sup.step(0.06, 0.06, 0.044, 400.0, 0.0, 0.0, False, t)
    for k in range(300):
        t += TS
        sup.step(0.05, 0.05, 0.044, 400.0, 300.0, 0.0, False, t)
    mpc, esc = sup.step(-0.05, -0.05, -0.044, -400.0, -300.0, 0.0, True, t + TS)
    assert not esc


def test_supervisor_brake_rule_configurable():
    sup = make_supervisor(deactivate_on_brake=False)
    t = 0.0
    sup.step(-0.06, -0.06, -0.044, -400.0, 0.0, 0.0, True, t)
    for k in range(300):
        t += TS
        mpc, esc = sup.step(-0.05, -0.05, -0.044, -400.0, -300.0, 0.0, True, t)
    assert mpc and esc


def test_supervisor_releases_when_driver_backs_off():
    sup = make_supervisor()
    sup.step(0.06, 0.06, 0.044, 400.0, 0.0, 0.0, False, 0.0)
    mpc, _ = sup.step(0.05, 0.05, 0.044, 400.0, 300.0, 0.0, False, TS)
    assert mpc
    # driver now requests less than the controller output
    mpc, esc = sup.step(0.05, 0.05, 0.044, 100.0, 300.0, 0.0, False, 2 * TS)
    assert not mpc and not esc


def test_supervisor_rearms_on_demand_reversal():
    sup = make_supervisor()
    sup.step(0.06, 0.06, 0.044, 400.0, 0.0, 0.0, False, 0.0)
    assert sup.state.mpc_active
    # driver swaps to regenerative braking: controller hands back
    mpc, _ = sup.step(0.04, 0.04, -0.044, -400.0, 300.0, 0.0, False, TS)
    assert not mpc
    # wheels dive past the braking reference: re-engage in the new mode
    mpc, _ = sup.step(-0.06, -0.02, -0.044, -400.0, -400.0, 0.0, False, 2 * TS)
    assert mpc


def test_supervisor_braking_comparison_uses_mode_sign():
    sup = make_supervisor()
    # braking mode: slip more negative than reference engages
    mpc, _ = sup.step(-0.06, -0.01, -0.044, -400.0, 0.0, 0.0, False, 0.0)
    assert mpc
    sup2 = make_supervisor()
    mpc, _ = sup2.step(-0.03, -0.01, -0.044, -400.0, 0.0, 0.0, False, 0.0)
    assert not mpc


# -- estimator state machine ---------------------------------------------------------

def test_estimate_persists_across_deactivation():
    est = EscEstimator(EscConfig(), TS, kappa0=0.05)
    for k in range(200):
        est.step(0.05, 5.0, active=True)
    frozen = est.kappa_hat
    for k in range(200):
        est.step(0.30, -50.0, active=False)
    assert est.kappa_hat == frozen


def test_estimator_clamps_initial_estimate():
    est = EscEstimator(EscConfig(kappa_min=0.01, kappa_max=0.1), TS, kappa0=0.5)
    assert est.kappa_hat == 0.1


@given(st.lists(st.tuples(st.floats(-0.3, 0.3), st.floats(-20.0, 20.0),
                          st.booleans()), min_size=1, max_size=400))
@settings(max_examples=50, deadline=None)
def test_estimate_always_within_bounds(steps):
    cfg = EscConfig()
    est = EscEstimator(cfg, TS, kappa0=0.03)
    for kappa_meas, ax, active in steps:
        est.step(kappa_meas, ax, active)
        assert cfg.kappa_min <= est.kappa_hat <= cfg.kappa_max


def test_reference_dithers_only_when_active():
    est = EscEstimator(EscConfig(), TS, kappa0=0.03)
    assert est.reference() == 0.03
    for k in range(300):
        est.step(0.03, 5.0, active=True)
    refs = set()
    for k in range(300):
        est.step(0.03, 5.0, active=True)
        refs.add(round(est.reference(), 6))
    assert len(refs) > 10     # the dither sweeps the reference
