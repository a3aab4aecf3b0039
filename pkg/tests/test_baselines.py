import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipbench.baselines import (PidConfig, PidController,
                                 SlidingModeEstimator,
                                 SlidingModeEstimatorConfig, pid_step,
                                 sliding_mode_ref_step)

TS = 0.005


def test_pid_zero_error_zero_output():
    ctrl = PidController(PidConfig())
    assert ctrl.step(0.0, TS) == 0.0


def test_pid_pure_proportional():
    cfg = PidConfig(k_p=12.0, k_i=0.0, k_d=0.0)
    ctrl = PidController(cfg)
    ctrl.step(0.0, TS)      # derivative history
    assert ctrl.step(2.0, TS) == pytest.approx(24.0)


def test_pid_integrator_grows_linearly_until_clamp():
    cfg = PidConfig(k_p=0.0, k_i=10.0, k_d=0.0, output_limit=500.0,
                    integrator_limit=1.0)
    ctrl = PidController(cfg)
    outputs = [ctrl.step(1.0, TS) for _ in range(100)]
    deltas = [b - a for a, b in zip(outputs, outputs[1:])]
    assert deltas[0] == pytest.approx(10.0 * TS)
    assert outputs[-1] == pytest.approx(1.0)    # clamped integral term


@given(st.lists(st.floats(-100.0, 100.0), min_size=1, max_size=300))
@settings(max_examples=100)
def test_pid_respects_output_limits(errors):
    cfg = PidConfig()
    ctrl = PidController(cfg)
    for e in errors:
        assert abs(ctrl.step(e, TS)) <= cfg.output_limit


def test_pid_functional_wrapper():
    cfg = PidConfig(k_p=5.0, k_i=0.0, k_d=0.0)
    ctrl = PidController(cfg)
    ctrl.step(0.0, TS)
    assert pid_step(cfg, ctrl, 1.0, TS) == pytest.approx(5.0)


def test_pid_reset():
    ctrl = PidController(PidConfig())
    for _ in range(50):
        ctrl.step(3.0, TS)
    ctrl.reset()
    assert ctrl.integral == 0.0


# -- sliding-mode estimator ------------------------------------------------------

def test_sliding_zero_sign_keeps_estimate():
    cfg = SlidingModeEstimatorConfig()
    est = SlidingModeEstimator(cfg, TS, kappa0=0.03)
    sliding_mode_ref_step(cfg, est, 0.0, TS)
    assert est.kappa_hat == 0.03


def test_sliding_persistent_positive_rises_to_bound():
    cfg = SlidingModeEstimatorConfig(switching_rate=0.5)
    est = SlidingModeEstimator(cfg, TS, kappa0=0.03)
    for _ in range(2000):
        sliding_mode_ref_step(cfg, est, 1.0, TS)
    assert est.kappa_hat == cfg.kappa_max


def test_sliding_rate_bound_per_step():
    cfg = SlidingModeEstimatorConfig()
    est = SlidingModeEstimator(cfg, TS, kappa0=0.05)
    prev = est.kappa_hat
    for sign in (1.0, -1.0, 0.4, -0.2, 1.0):
        sliding_mode_ref_step(cfg, est, sign, TS)
        assert abs(est.kappa_hat - prev) <= cfg.switching_rate * TS + 1e-15
        prev = est.kappa_hat


def test_sliding_gradient_sign_from_correlation():
    cfg = SlidingModeEstimatorConfig(boundary_layer=1.0)
    est = SlidingModeEstimator(cfg, TS, kappa0=0.03)
    # rising slip with rising acceleration: positive correlation
    for k in range(50):
        est.step(0.03 + 0.001 * k, 5.0 + 0.1 * k, active=False)
    assert est.gradient_sign() == 1.0
    est2 = SlidingModeEstimator(cfg, TS, kappa0=0.03)
    for k in range(50):
        est2.step(0.03 + 0.001 * k, 5.0 - 0.1 * k, active=False)
    assert est2.gradient_sign() == -1.0


def test_sliding_inactive_freezes_estimate():
    cfg = SlidingModeEstimatorConfig()
    est = SlidingModeEstimator(cfg, TS, kappa0=0.04)
    for k in range(100):
        est.step(0.03 + 0.001 * k, 5.0 + 0.5 * k, active=False)
    assert est.kappa_hat == 0.04


@given(st.lists(st.tuples(st.floats(-0.2, 0.2), st.floats(-15.0, 15.0)),
                min_size=1, max_size=300))
@settings(max_examples=50)
def test_sliding_bounds_hold(samples):
    cfg = SlidingModeEstimatorConfig()
    est = SlidingModeEstimator(cfg, TS, kappa0=0.03)
    for kappa, ax in samples:
        est.step(kappa, ax, active=True)
        assert cfg.kappa_min <= est.kappa_hat <= cfg.kappa_max
