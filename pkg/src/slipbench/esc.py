"""Extremum seeking for the optimal slip reference.

The current estimate is dithered with a slow sinusoid, the measured
longitudinal acceleration and the measured slip are high-pass filtered and
multiplied, and the product (a gradient estimate scaled by a non-negative
modulation factor) feeds a clamped integrator.  Both demodulation inputs
travel the same measurement path, so transport lag cancels out of the
product's sign.  A supervisor gates the whole thing on the slip controller
being engaged and the car driving straight.
"""

import math
from dataclasses import dataclass

from . import kernels


@dataclass(frozen=True)
class EscConfig:
    perturbation_amplitude: float = 0.005
    perturbation_frequency: float = 2.0 * math.pi     # rad/s (1 Hz)
    integrator_gain: float = 100.0
    kappa_min: float = 0.005
    kappa_max: float = 0.15
    max_rate: float = 0.02              # slew limit on the estimate, slip/s
    hpf_damping: float = 0.707
    activation_hold: float = 1.0        # controller must be engaged this long
    lateral_limit: float = 1.0          # |a_y| above this pauses the search
    deactivate_on_brake: bool = True    # friction brakes pause the search

    def __post_init__(self):
        if self.perturbation_amplitude <= 0.0 or self.perturbation_frequency <= 0.0:
            raise ValueError("perturbation amplitude and frequency must be positive")
        if not 0.0 <= self.kappa_min < self.kappa_max:
            raise ValueError("slip bounds must satisfy 0 <= kappa_min < kappa_max")


@dataclass
class HighPassFilter:
    """Discrete second-order high pass (DC gain exactly zero).

    Bilinear transform of s^2 / (s^2 + 2 zeta wc s + wc^2) with the cutoff
    prewarped.  States use the transposed direct-form-II layout.
    """

    b0: float
    b1: float
    b2: float
    a1: float
    a2: float
    z1: float = 0.0
    z2: float = 0.0

    @classmethod
    def design(cls, cutoff: float, sample_time: float, damping: float = 0.707):
        wa = 2.0 / sample_time * math.tan(cutoff * sample_time / 2.0)
        k = 2.0 / sample_time
        a0 = k * k + 2.0 * damping * wa * k + wa * wa
        return cls(
            b0=k * k / a0, b1=-2.0 * k * k / a0, b2=k * k / a0,
            a1=(2.0 * wa * wa - 2.0 * k * k) / a0,
            a2=(k * k - 2.0 * damping * wa * k + wa * wa) / a0,
        )

    def step(self, sample: float) -> float:
        y, self.z1, self.z2 = kernels.biquad_step(
            sample, self.z1, self.z2, self.b0, self.b1, self.b2, self.a1, self.a2,
        )
        return y

    def settle(self, level: float) -> None:
        """Set states so a constant input at ``level`` produces zero output.

        Valid because the numerator coefficients sum to zero; used to
        restart the filter transient-free when the estimator re-engages.
        """
        self.z1 = -self.b0 * level
        self.z2 = -(self.b0 + self.b1) * level

    def response_at(self, omega: float, sample_time: float) -> complex:
        """Frequency response at ``omega`` rad/s (test oracle)."""
        z = complex(math.cos(omega * sample_time), math.sin(omega * sample_time))
        return (self.b0 * z * z + self.b1 * z + self.b2) / (z * z + self.a1 * z + self.a2)


@dataclass(frozen=True)
class LateralScaling:
    """Piecewise-affine fade of the slip reference with lateral acceleration."""

    zero_slip_accel: float = 8.0    # |a_y| at which the reference reaches zero
    onset_accel: float = 2.0        # |a_y| at which fading starts

    def __post_init__(self):
        if not 0.0 < self.onset_accel < self.zero_slip_accel:
            raise ValueError("require 0 < onset_accel < zero_slip_accel")


def perturb(kappa_hat: float, t: float, cfg: EscConfig) -> float:
    """Dithered slip reference around the current estimate."""
    return kappa_hat + cfg.perturbation_amplitude * math.sin(cfg.perturbation_frequency * t)


def hpf_step(f: HighPassFilter, sample: float) -> float:
    return f.step(sample)


def demodulate(h_kappa: float, h_ax: float) -> float:
    """Gradient estimate: product of the two synchronously filtered signals."""
    return h_kappa * h_ax


def integrate_saturating(kappa_hat: float, xi: float, gain: float, sample_time: float,
                         bounds: tuple[float, float]) -> float:
    lo, hi = bounds
    return min(hi, max(lo, kappa_hat + gain * xi * sample_time))


def lateral_scale(kappa_hat: float, a_y: float, scaling: LateralScaling) -> float:
    ay = abs(a_y)
    if ay > scaling.zero_slip_accel:
        return 0.0
    if ay < scaling.onset_accel:
        return kappa_hat
    return kappa_hat * (scaling.zero_slip_accel - ay) / (
        scaling.zero_slip_accel - scaling.onset_accel)


def sign_for_mode(kappa_ref: float, braking: bool) -> float:
    """Reference sign convention: negative slip targets while braking."""
    return -kappa_ref if braking else kappa_ref


@dataclass
class SupervisorState:
    mpc_active: bool = False
    mpc_active_since: float | None = None
    braking_mode: bool = False


class Supervisor:
    """Activation logic for controller and estimator.

    The slip controller engages when either wheel's slip exceeds the
    reference (in the active mode's sign convention) and disengages when
    the driver demands less than the controller output or reverses the
    demand direction; the estimator additionally needs the controller to
    have been engaged for a hold time, low lateral acceleration and (by
    default) no friction brakes.  The slip estimate itself is owned by the
    estimator and survives any deactivation.
    """

    def __init__(self, cfg: EscConfig):
        self.cfg = cfg
        self.state = SupervisorState()

    def step(self, kappa_l: float, kappa_r: float, kappa_ref: float,
             driver_torque: float, controller_torque: float, a_y: float,
             brakes_applied: bool, t: float) -> tuple[bool, bool]:
        st = self.state
        braking = driver_torque < 0.0 or brakes_applied
        if braking != st.braking_mode:
            # Demand direction reversed: hand control back and re-arm.
            st.braking_mode = braking
            st.mpc_active = False
            st.mpc_active_since = None
        sign = -1.0 if braking else 1.0

        handed_back = False
        if st.mpc_active:
            if sign * driver_torque < sign * controller_torque:
                # Driver demands less than the controller: hand control back
                # and stay out for the rest of this step even if the slip is
                # still past the reference.
                st.mpc_active = False
                st.mpc_active_since = None
                handed_back = True
        if not st.mpc_active and not handed_back:
            if max(sign * kappa_l, sign * kappa_r) > sign * kappa_ref:
                st.mpc_active = True
                st.mpc_active_since = t

        esc_active = (
            st.mpc_active
            and st.mpc_active_since is not None
            and (t - st.mpc_active_since) >= self.cfg.activation_hold
            and abs(a_y) <= self.cfg.lateral_limit
            and not (brakes_applied and self.cfg.deactivate_on_brake)
        )
        return st.mpc_active, esc_active


@dataclass
class EscState:
    kappa_hat: float
    hpf_ax: HighPassFilter
    hpf_kappa: HighPassFilter
    phase: float = 0.0
    zeta: float = 0.0       # last filtered acceleration sample
    xi: float = 0.0         # last gradient estimate
    active: bool = False


class EscEstimator:
    """Per-step extremum-seeking update, gated by the supervisor flag.

    Inputs arrive folded into the positive-slip convention (the tire curve
    is odd, so braking and driving share one estimate).  Filters run only
    while active and restart transient-free on each activation edge.
    """

    def __init__(self, cfg: EscConfig, sample_time: float, kappa0: float = 0.03):
        self.cfg = cfg
        self.ts = sample_time
        self.state = EscState(
            kappa_hat=min(cfg.kappa_max, max(cfg.kappa_min, kappa0)),
            hpf_ax=HighPassFilter.design(cfg.perturbation_frequency, sample_time,
                                         cfg.hpf_damping),
            hpf_kappa=HighPassFilter.design(cfg.perturbation_frequency, sample_time,
                                            cfg.hpf_damping),
        )

    @property
    def kappa_hat(self) -> float:
        return self.state.kappa_hat

    def reference(self) -> float:
        """Positive slip reference for the next step (dithered when active)."""
        st = self.state
        if st.active:
            return perturb(st.kappa_hat, st.phase / self.cfg.perturbation_frequency,
                           self.cfg)
        return st.kappa_hat

    def step(self, kappa_meas: float, a_x_meas: float, active: bool) -> float:
        """Consume folded measurements, return the updated estimate."""
        st = self.state
        if active and not st.active:
            st.hpf_kappa.settle(kappa_meas)
            st.hpf_ax.settle(a_x_meas)
        st.active = active
        if not active:
            st.zeta = 0.0
            st.xi = 0.0
            return st.kappa_hat
        st.phase += self.cfg.perturbation_frequency * self.ts
        h_k = st.hpf_kappa.step(kappa_meas)
        h_a = st.hpf_ax.step(a_x_meas)
        st.zeta = h_a
        st.xi = demodulate(h_k, h_a)
        # Slew limit: large transients (friction steps, re-engagement) produce
        # filter ringing whose product is not a usable gradient; cap how fast
        # they can drag the estimate.
        cap = self.cfg.max_rate / self.cfg.integrator_gain
        xi_eff = min(cap, max(-cap, st.xi))
        st.kappa_hat = integrate_saturating(
            st.kappa_hat, xi_eff, self.cfg.integrator_gain, self.ts,
            (self.cfg.kappa_min, self.cfg.kappa_max),
        )
        return st.kappa_hat
