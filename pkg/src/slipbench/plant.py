"""Fixed-step longitudinal vehicle plant.

Two driven rear wheels fed through a limited-slip differential, tire force
from the reduced magic-formula curve, static load transfer plus quadratic
downforce, and integer-step transport delays on actuation and measurement.
Forward-Euler at the shared sample time; one call advances one step and is
deterministic down to the bit.
"""

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

from . import kernels
from .tire import TireModel

# Slip denominators below this speed fall back to eps itself (slip is
# singular at standstill; controllers are inactive there).
EPS_SPEED = 0.5


class SimulationDiverged(RuntimeError):
    """Raised when a plant state stops being finite."""


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 750.0
    wheel_inertia: float = 2.0          # includes reflected driveline inertia
    wheel_radius: float = 0.33
    gear_ratio: float = 3.2
    sample_time: float = 0.005
    static_rear_load_per_wheel: float = 2200.0
    load_transfer_gain: float = 40.0    # N per m/s^2, rear axle share per wheel
    downforce_gain: float = 0.5         # N per (m/s)^2 per wheel (before the 1/2 factor)
    lsd_preload: float = 15.0
    lsd_torque_sensitivity: float = 0.05
    lsd_viscous_gain: float = 25.0
    delay_actuation_steps: int = 2
    delay_measurement_steps: int = 1

    def __post_init__(self):
        positive = (
            "mass", "wheel_inertia", "wheel_radius", "gear_ratio", "sample_time",
            "static_rear_load_per_wheel",
        )
        for name in positive:
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        non_negative = (
            "load_transfer_gain", "downforce_gain", "lsd_preload",
            "lsd_torque_sensitivity", "lsd_viscous_gain",
        )
        for name in non_negative:
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        if self.delay_actuation_steps < 0 or self.delay_measurement_steps < 0:
            raise ValueError("delays must be >= 0")


@dataclass(frozen=True)
class ExogenousInputs:
    brake_torque_per_wheel: float = 0.0
    lateral_acceleration: float = 0.0
    road_friction: float = 1.0
    road_load_force: float = 0.0

    def __post_init__(self):
        if self.brake_torque_per_wheel < 0.0:
            raise ValueError("brake torque must be >= 0")
        if self.road_friction <= 0.0:
            raise ValueError("road friction must be > 0")


class Measurement(NamedTuple):
    """Sensed wheel/vehicle signals as seen through the measurement delay."""

    omega_l: float
    omega_r: float
    v_x: float
    a_x: float


@dataclass(frozen=True)
class PlantState:
    omega_l: float
    omega_r: float
    v_x: float
    a_x: float
    t: float
    actuation_buffer: tuple        # FIFO of commanded motor torques
    measurement_buffer: tuple      # FIFO of Measurement entries

    def measured(self) -> Measurement:
        return self.measurement_buffer[0]


class StepInfo(NamedTuple):
    """Per-step diagnostics emitted alongside the successor state."""

    applied_torque: float
    kappa_l: float
    kappa_r: float
    force_l: float
    force_r: float
    vertical_load: float
    clutch_torque: float
    low_speed: bool
    wheel_lift: bool


def initial_state(params: VehicleParams, v0: float) -> PlantState:
    """State rolling at ``v0`` with zero slip and settled delay lines."""
    omega = v0 / params.wheel_radius
    meas = Measurement(omega, omega, v0, 0.0)
    return PlantState(
        omega_l=omega, omega_r=omega, v_x=v0, a_x=0.0, t=0.0,
        actuation_buffer=(0.0,) * params.delay_actuation_steps,
        measurement_buffer=(meas,) * (params.delay_measurement_steps + 1),
    )


def slip_ratio(omega: float, v_x: float, r_w: float, braking: bool) -> tuple[float, bool]:
    """Slip ratio in the given mode plus a low-speed fallback flag."""
    return kernels.slip_ratio(omega, v_x, r_w, braking, EPS_SPEED)


def lsd_clutch_torque(omega_l: float, omega_r: float, t_motor: float,
                      params: VehicleParams) -> float:
    return kernels.lsd_clutch_torque(
        omega_l, omega_r, t_motor, params.gear_ratio,
        params.lsd_preload, params.lsd_torque_sensitivity, params.lsd_viscous_gain,
    )


def vertical_loads(v_x: float, a_x: float, params: VehicleParams) -> tuple[float, float, bool]:
    """Per-rear-wheel vertical loads (equal left/right) and a lift flag."""
    fz, lift = kernels.vertical_load(
        v_x, a_x, params.static_rear_load_per_wheel,
        params.load_transfer_gain, params.downforce_gain,
    )
    return fz, fz, lift


def plant_step(state: PlantState, t_motor: float, ex: ExogenousInputs,
               params: VehicleParams, tire: TireModel) -> tuple[PlantState, StepInfo]:
    """Advance the plant one sample.

    The commanded torque enters the actuation FIFO and the torque applied
    this step is whatever left it; sensed outputs go through the
    measurement FIFO the same way.  Wheel speeds and vehicle speed are
    clamped at zero (no reverse motion inside a maneuver).
    """
    ts = params.sample_time
    r_w = params.wheel_radius

    if params.delay_actuation_steps:
        applied = state.actuation_buffer[0]
        act_buf = state.actuation_buffer[1:] + (t_motor,)
    else:
        applied = t_motor
        act_buf = ()

    fz, _, lift = vertical_loads(state.v_x, state.a_x, params)
    mu = ex.road_friction

    kappa_l, low_l = slip_ratio(state.omega_l, state.v_x, r_w,
                                braking=state.v_x > state.omega_l * r_w)
    kappa_r, low_r = slip_ratio(state.omega_r, state.v_x, r_w,
                                braking=state.v_x > state.omega_r * r_w)
    f_l = tire.force(kappa_l, fz, mu)
    f_r = tire.force(kappa_r, fz, mu)

    t_c = lsd_clutch_torque(state.omega_l, state.omega_r, applied, params)
    half_drive = params.gear_ratio * applied / 2.0
    acc_l = kernels.wheel_accel(half_drive + t_c, ex.brake_torque_per_wheel,
                                state.omega_l, r_w, f_l, params.wheel_inertia)
    acc_r = kernels.wheel_accel(half_drive - t_c, ex.brake_torque_per_wheel,
                                state.omega_r, r_w, f_r, params.wheel_inertia)
    a_x = (f_l + f_r - ex.road_load_force) / params.mass

    omega_l = state.omega_l + ts * acc_l
    omega_r = state.omega_r + ts * acc_r
    v_x = state.v_x + ts * a_x
    if not (math.isfinite(omega_l) and math.isfinite(omega_r) and math.isfinite(v_x)):
        raise SimulationDiverged(
            f"non-finite state at t={state.t + ts:.3f}s: "
            f"omega_l={omega_l}, omega_r={omega_r}, v_x={v_x}, torque={applied}"
        )
    omega_l = max(0.0, omega_l)
    omega_r = max(0.0, omega_r)
    v_x = max(0.0, v_x)

    meas_buf = state.measurement_buffer[1:] + (Measurement(omega_l, omega_r, v_x, a_x),)
    new_state = PlantState(
        omega_l=omega_l, omega_r=omega_r, v_x=v_x, a_x=a_x, t=state.t + ts,
        actuation_buffer=act_buf, measurement_buffer=meas_buf,
    )
    info = StepInfo(
        applied_torque=applied, kappa_l=kappa_l, kappa_r=kappa_r,
        force_l=f_l, force_r=f_r, vertical_load=fz, clutch_torque=t_c,
        low_speed=low_l or low_r, wheel_lift=lift,
    )
    return new_state, info
