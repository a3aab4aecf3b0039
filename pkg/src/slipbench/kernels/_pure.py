"""Pure-Python scalar kernels for the per-step hot path.

``_native.pyx`` mirrors this file function for function; keep the two in
lockstep.  ``slipbench.kernels`` re-exports whichever implementation is
importable.  All functions are plain scalar math with no allocation so a
simulation step stays cheap even without the compiled extension.
"""

import math


def magic_formula(b, c, d, e, mu, kappa, fz):
    """Longitudinal tire force for a reduced four-coefficient curve."""
    bk = b * kappa
    return mu * d * fz * math.sin(c * math.atan(bk - e * (bk - math.atan(bk))))


def slip_ratio(omega, v_x, r_w, braking, eps_speed):
    """Slip ratio and a low-speed flag.

    Braking normalizes by vehicle speed, driving by wheel surface speed.
    Below ``eps_speed`` the singular denominator is replaced by
    ``eps_speed`` itself and the fallback flag is set.
    """
    v_wheel = omega * r_w
    v_slip = v_wheel - v_x
    denom = v_x if braking else v_wheel
    if denom > eps_speed:
        return v_slip / denom, False
    return v_slip / eps_speed, True


def lsd_clutch_torque(omega_l, omega_r, t_motor, gear_ratio, preload, sensitivity, viscous_gain):
    """Clutch torque of the limited-slip differential.

    Torque-sensing magnitude (preload plus a fraction of the input torque)
    capped by the viscous term, signed by the wheel-speed difference.
    """
    d_omega = omega_l - omega_r
    if d_omega == 0.0:
        return 0.0
    mag = preload + sensitivity * abs(gear_ratio * t_motor)
    cap = viscous_gain * abs(d_omega)
    if cap < mag:
        mag = cap
    return mag if d_omega > 0.0 else -mag


def vertical_load(v_x, a_x, static_load, transfer_gain, downforce_gain):
    """Per-wheel vertical load and a wheel-lift flag (load clamped at zero)."""
    fz = static_load + transfer_gain * a_x + 0.5 * downforce_gain * v_x * v_x
    if fz < 0.0:
        return 0.0, True
    return fz, False


def wheel_accel(t_drive, t_brake, omega, r_w, f_x, inertia):
    """Wheel angular acceleration; brake torque opposes rotation."""
    if omega > 0.0:
        tb = t_brake
    elif omega < 0.0:
        tb = -t_brake
    else:
        tb = 0.0
    return (t_drive - tb - r_w * f_x) / inertia


def biquad_step(x, z1, z2, b0, b1, b2, a1, a2):
    """One step of a direct-form-II-transposed biquad: (y, z1', z2')."""
    y = b0 * x + z1
    return y, b1 * x - a1 * y + z2, b2 * x - a2 * y
