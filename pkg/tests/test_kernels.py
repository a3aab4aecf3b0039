"""The compiled kernels and the pure fallback must be interchangeable."""

import numpy as np
import pytest

from slipbench import kernels
from slipbench.kernels import _pure

native = pytest.importorskip("slipbench.kernels._native")

RNG = np.random.default_rng(11)


def test_backend_reports_itself():
    assert kernels.BACKEND in ("native", "pure")


@pytest.mark.parametrize("case", range(200))
def test_magic_formula_parity(case):
    b, c, d, e = RNG.uniform(5, 80), RNG.uniform(1.1, 1.9), RNG.uniform(0.5, 2), RNG.uniform(0, 0.95)
    mu, kappa, fz = RNG.uniform(0.1, 1.5), RNG.uniform(-1, 1), RNG.uniform(0, 6000)
    assert native.magic_formula(b, c, d, e, mu, kappa, fz) == pytest.approx(
        _pure.magic_formula(b, c, d, e, mu, kappa, fz), rel=1e-15, abs=1e-12)


def test_slip_ratio_parity():
    for _ in range(200):
        omega, vx, rw = RNG.uniform(0, 200), RNG.uniform(0, 70), 0.33
        braking = bool(RNG.integers(2))
        got = native.slip_ratio(omega, vx, rw, braking, 0.5)
        want = _pure.slip_ratio(omega, vx, rw, braking, 0.5)
        assert got[0] == pytest.approx(want[0], rel=1e-15, abs=1e-15)
        assert got[1] == want[1]


def test_lsd_parity():
    for _ in range(200):
        args = (RNG.uniform(0, 200), RNG.uniform(0, 200), RNG.uniform(-500, 500),
                3.2, RNG.uniform(0, 50), RNG.uniform(0, 0.2), RNG.uniform(0, 60))
        assert native.lsd_clutch_torque(*args) == pytest.approx(
            _pure.lsd_clutch_torque(*args), rel=1e-15, abs=1e-15)


def test_vertical_load_parity():
    for _ in range(100):
        args = (RNG.uniform(0, 70), RNG.uniform(-60, 10), 2200.0, 40.0, 0.5)
        assert native.vertical_load(*args) == _pure.vertical_load(*args)


def test_wheel_accel_parity():
    for _ in range(100):
        args = (RNG.uniform(-2000, 2000), RNG.uniform(0, 1000),
                RNG.uniform(-5, 200), 0.33, RNG.uniform(-4000, 4000), 2.0)
        assert native.wheel_accel(*args) == pytest.approx(
            _pure.wheel_accel(*args), rel=1e-15)


def test_biquad_parity():
    coeffs = (0.98, -1.96, 0.98, -1.955, 0.956)
    zn = zp = (0.0, 0.0)
    for _ in range(500):
        x = float(RNG.normal())
        yn, *zn = native.biquad_step(x, zn[0], zn[1], *coeffs)
        yp, *zp = _pure.biquad_step(x, zp[0], zp[1], *coeffs)
        assert yn == pytest.approx(yp, rel=1e-14, abs=1e-14)
