# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scalar kernels for the per-step hot path.

Mirror of ``_pure.py``; keep the two in lockstep.
"""

from libc.math cimport atan, fabs, sin


cpdef double magic_formula(double b, double c, double d, double e,
                           double mu, double kappa, double fz):
    """Longitudinal tire force for a reduced four-coefficient curve."""
    cdef double bk = b * kappa
    return mu * d * fz * sin(c * atan(bk - e * (bk - atan(bk))))


cpdef tuple slip_ratio(double omega, double v_x, double r_w,
                       bint braking, double eps_speed):
    """Slip ratio and a low-speed flag (see pure implementation)."""
    cdef double v_wheel = omega * r_w
    cdef double v_slip = v_wheel - v_x
    cdef double denom = v_x if braking else v_wheel
    if denom > eps_speed:
        return v_slip / denom, False
    return v_slip / eps_speed, True


cpdef double lsd_clutch_torque(double omega_l, double omega_r, double t_motor,
                               double gear_ratio, double preload,
                               double sensitivity, double viscous_gain):
    """Clutch torque of the limited-slip differential."""
    cdef double d_omega = omega_l - omega_r
    cdef double mag, cap
    if d_omega == 0.0:
        return 0.0
    mag = preload + sensitivity * fabs(gear_ratio * t_motor)
    cap = viscous_gain * fabs(d_omega)
    if cap < mag:
        mag = cap
    return mag if d_omega > 0.0 else -mag


cpdef tuple vertical_load(double v_x, double a_x, double static_load,
                          double transfer_gain, double downforce_gain):
    """Per-wheel vertical load and a wheel-lift flag (load clamped at zero)."""
    cdef double fz = static_load + transfer_gain * a_x + 0.5 * downforce_gain * v_x * v_x
    if fz < 0.0:
        return 0.0, True
    return fz, False


cpdef double wheel_accel(double t_drive, double t_brake, double omega,
                         double r_w, double f_x, double inertia):
    """Wheel angular acceleration; brake torque opposes rotation."""
    cdef double tb
    if omega > 0.0:
        tb = t_brake
    elif omega < 0.0:
        tb = -t_brake
    else:
        tb = 0.0
    return (t_drive - tb - r_w * f_x) / inertia


cpdef tuple biquad_step(double x, double z1, double z2, double b0, double b1,
                        double b2, double a1, double a2):
    """One step of a direct-form-II-transposed biquad: (y, z1', z2')."""
    cdef double y = b0 * x + z1
    return y, b1 * x - a1 * y + z2, b2 * x - a2 * y
