"""Scripted maneuvers and closed-loop simulation.

A maneuver schedules the exogenous world (driver demand, friction, lateral
acceleration, friction brakes, road load) over a fixed duration; running
one wires the plant, the supervisor, the chosen controller and the chosen
slip-reference estimator together at the shared sample time and records
every signal per step.  Traces round-trip through a versioned CSV schema.
"""

import bisect
import configparser
import io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .baselines import PidController, SlidingModeEstimator
from .config import ConfigError, RunConfig
from .esc import EscEstimator, Supervisor, lateral_scale, sign_for_mode
from .mpc import MpcController, MpcGains, gains_for, reference_from_kappa
from .plant import ExogenousInputs, initial_state, plant_step, slip_ratio

TRACE_SCHEMA = "slipbench/trace/v1"

# Fixed column order; the first eleven are the plant's documented set.
TRACE_COLUMNS = (
    "t", "omega_l", "omega_r", "v_x", "kappa_l", "kappa_r", "fx_l", "fx_r",
    "t_motor", "t_brake", "flags",
    "mu", "a_x", "a_y", "road_load", "driver_torque", "v_slip_ref",
    "kappa_ref", "kappa_hat", "zeta", "xi", "f_z", "t_clutch",
)

FLAG_MPC_ACTIVE = 1
FLAG_ESC_ACTIVE = 2
FLAG_LOW_SPEED = 4
FLAG_WHEEL_LIFT = 8

CONTROLLERS = ("mpc", "pid")
ESTIMATORS = ("esc", "sliding", "fixed")


class Schedule:
    """Time schedule from (time, value) breakpoints.

    Piecewise constant by default (value holds until the next breakpoint);
    with ``interpolate`` the segments ramp linearly instead, which is how
    progressive pedal inputs are scripted.
    """

    def __init__(self, points: list[tuple[float, float]], interpolate: bool = False):
        if not points:
            raise ValueError("schedule needs at least one breakpoint")
        pts = sorted(points)
        if pts[0][0] > 0.0:
            pts.insert(0, (0.0, pts[0][1]))
        self.times = [p[0] for p in pts]
        self.values = [p[1] for p in pts]
        self.interpolate = interpolate

    def at(self, t: float) -> float:
        idx = max(0, bisect.bisect_right(self.times, t) - 1)
        if not self.interpolate or idx == len(self.times) - 1:
            return self.values[idx]
        t0, t1 = self.times[idx], self.times[idx + 1]
        v0, v1 = self.values[idx], self.values[idx + 1]
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0)

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls([(0.0, value)])

    @classmethod
    def parse(cls, text: str, interpolate: bool = False) -> "Schedule":
        """Parse ``t0:v0, t1:v1, ...`` breakpoint lists."""
        points = []
        for chunk in text.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                t_raw, v_raw = chunk.split(":")
                points.append((float(t_raw), float(v_raw)))
            except ValueError:
                raise ConfigError(f"bad schedule entry {chunk!r}, want time:value") from None
        return cls(points, interpolate=interpolate)


class ScheduleDriver:
    """Driver demand directly from a torque schedule."""

    def __init__(self, schedule: Schedule):
        self.schedule = schedule

    def torque(self, t: float, v_x: float) -> float:
        return self.schedule.at(t)


class CycleDriver:
    """Bang-bang driver cycling between two speeds (scripted input, with
    hysteresis on the speedometer reading)."""

    def __init__(self, low: float, high: float, torque: float):
        if not 0.0 <= low < high:
            raise ValueError("cycle speeds must satisfy 0 <= low < high")
        self.low = low
        self.high = high
        self.level = torque
        self._accelerating = True

    def torque(self, t: float, v_x: float) -> float:
        if v_x >= self.high:
            self._accelerating = False
        elif v_x <= self.low:
            self._accelerating = True
        return self.level if self._accelerating else -self.level


@dataclass
class Maneuver:
    name: str
    duration: float
    initial_speed: float
    controller: str = "mpc"
    estimator: str = "esc"
    fixed_kappa_ref: float = 0.044
    seed: int = 0
    driver_schedule: Schedule = field(default_factory=lambda: Schedule.constant(0.0))
    cycle: tuple[float, float, float] | None = None     # (low, high, torque)
    mu: Schedule = field(default_factory=lambda: Schedule.constant(1.0))
    brake_torque: Schedule = field(default_factory=lambda: Schedule.constant(0.0))
    lateral_accel: Schedule = field(default_factory=lambda: Schedule.constant(0.0))
    road_load: Schedule = field(default_factory=lambda: Schedule.constant(0.0))

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")

    def make_driver(self):
        if self.cycle is not None:
            low, high, torque = self.cycle
            return CycleDriver(low, high, torque)
        return ScheduleDriver(self.driver_schedule)


@dataclass
class Trace:
    """Column store for one scenario run."""

    maneuver: str
    seed: int
    wheel_radius: float
    columns: dict

    def __len__(self):
        return len(self.columns["t"])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def flag(self, mask: int) -> np.ndarray:
        return (self.columns["flags"].astype(int) & mask) != 0

    def v_slip(self, side: str) -> np.ndarray:
        return self.columns[f"omega_{side}"] * self.wheel_radius - self.columns["v_x"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(
            f"# schema={TRACE_SCHEMA} maneuver={self.maneuver} seed={self.seed}"
            f" r_w={self.wheel_radius!r}\n"
        )
        buf.write(",".join(TRACE_COLUMNS) + "\n")
        cols = [self.columns[c] for c in TRACE_COLUMNS]
        for i in range(len(self)):
            buf.write(",".join("%.12g" % col[i] for col in cols) + "\n")
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "Trace":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# schema="):
            raise ValueError("missing trace schema line")
        header = lines[0][2:].split()
        meta = dict(kv.split("=", 1) for kv in header)
        if meta.get("schema") != TRACE_SCHEMA:
            raise ValueError(f"unsupported trace schema {meta.get('schema')!r}")
        names = lines[1].split(",")
        if tuple(names) != TRACE_COLUMNS:
            raise ValueError("trace columns do not match the schema")
        data = np.loadtxt(io.StringIO("\n".join(lines[2:])), delimiter=",", ndmin=2)
        columns = {name: data[:, i].copy() for i, name in enumerate(names)}
        return cls(maneuver=meta.get("maneuver", "?"), seed=int(meta.get("seed", 0)),
                   wheel_radius=float(meta.get("r_w", 0.33)), columns=columns)

    @classmethod
    def load(cls, path) -> "Trace":
        return cls.from_csv(Path(path).read_text())


def run_scenario(maneuver: Maneuver, config: RunConfig,
                 gains: MpcGains | None = None) -> Trace:
    """Simulate one maneuver to completion and return the full trace.

    Deterministic: identical (maneuver, config, gains) give bit-identical
    traces.  Plant divergence propagates with the failing step's state
    attached.
    """
    params = config.vehicle
    ts = params.sample_time
    n_steps = int(round(maneuver.duration / ts))

    if maneuver.controller == "mpc":
        if gains is None:
            gains = gains_for(params, config.cost)
        controller = MpcController(gains, params, config.torque_limit)
    else:
        controller = PidController(config.pid)

    esc_est = EscEstimator(config.esc, ts, config.initial_kappa_hat)
    sliding_est = SlidingModeEstimator(config.sliding, ts, config.initial_kappa_hat)
    supervisor = Supervisor(config.esc)
    driver = maneuver.make_driver()

    state = initial_state(params, maneuver.initial_speed)
    data = {name: np.zeros(n_steps) for name in TRACE_COLUMNS}
    u_controller = 0.0
    was_mpc_active = False

    for k in range(n_steps):
        t = k * ts
        ex = ExogenousInputs(
            brake_torque_per_wheel=maneuver.brake_torque.at(t),
            lateral_acceleration=maneuver.lateral_accel.at(t),
            road_friction=maneuver.mu.at(t),
            road_load_force=maneuver.road_load.at(t),
        )
        t_driver = driver.torque(t, state.v_x)
        braking = t_driver < 0.0 or ex.brake_torque_per_wheel > 0.0
        fold = -1.0 if braking else 1.0

        meas = state.measured()
        kappa_l_m, low_l = slip_ratio(meas.omega_l, meas.v_x, params.wheel_radius, braking)
        kappa_r_m, low_r = slip_ratio(meas.omega_r, meas.v_x, params.wheel_radius, braking)

        if maneuver.estimator == "esc":
            kappa_base = esc_est.reference()
        elif maneuver.estimator == "sliding":
            kappa_base = sliding_est.kappa_hat
        else:
            kappa_base = maneuver.fixed_kappa_ref
        kappa_scaled = lateral_scale(kappa_base, ex.lateral_acceleration, config.lateral)
        kappa_ref = sign_for_mode(kappa_scaled, braking)

        mpc_active, esc_active = supervisor.step(
            kappa_l_m, kappa_r_m, kappa_ref, t_driver, u_controller,
            ex.lateral_acceleration, ex.brake_torque_per_wheel > 0.0, t,
        )

        if mpc_active:
            if not was_mpc_active:
                if maneuver.controller == "mpc":
                    controller.reset(u_start=t_driver)
                else:
                    controller.reset()
            omega_mean = 0.5 * (meas.omega_l + meas.omega_r)
            v_slip_ref, _ = reference_from_kappa(
                kappa_ref, meas.v_x, omega_mean, params.wheel_radius, braking)
            if maneuver.controller == "mpc":
                u = controller.step(meas, v_slip_ref)
            else:
                v_slip_mean = 0.5 * (
                    params.wheel_radius * (meas.omega_l + meas.omega_r)) - meas.v_x
                u = controller.step(v_slip_ref - v_slip_mean, ts)
            u_controller = u
        else:
            v_slip_ref = 0.0
            u = max(-config.torque_limit, min(config.torque_limit, t_driver))
            u_controller = u
        was_mpc_active = mpc_active

        kappa_fold = max(fold * kappa_l_m, fold * kappa_r_m)
        ax_fold = fold * meas.a_x
        esc_est.step(kappa_fold, ax_fold,
                     esc_active and maneuver.estimator == "esc")
        sliding_est.step(kappa_fold, ax_fold,
                         esc_active and maneuver.estimator == "sliding")

        state, info = plant_step(state, u, ex, params, config.tire)

        if maneuver.estimator == "sliding":
            kappa_hat = sliding_est.kappa_hat
        elif maneuver.estimator == "esc":
            kappa_hat = esc_est.kappa_hat
        else:
            kappa_hat = maneuver.fixed_kappa_ref
        flags = (
            (FLAG_MPC_ACTIVE if mpc_active else 0)
            | (FLAG_ESC_ACTIVE if esc_active else 0)
            | (FLAG_LOW_SPEED if (low_l or low_r or info.low_speed) else 0)
            | (FLAG_WHEEL_LIFT if info.wheel_lift else 0)
        )
        row = (
            t, state.omega_l, state.omega_r, state.v_x, info.kappa_l, info.kappa_r,
            info.force_l, info.force_r, info.applied_torque,
            ex.brake_torque_per_wheel, flags,
            ex.road_friction, state.a_x, ex.lateral_acceleration,
            ex.road_load_force, t_driver, v_slip_ref, kappa_ref,
            kappa_hat, esc_est.state.zeta, esc_est.state.xi, info.vertical_load,
            info.clutch_torque,
        )
        for name, value in zip(TRACE_COLUMNS, row):
            data[name][k] = value

    return Trace(maneuver=maneuver.name, seed=maneuver.seed,
                 wheel_radius=params.wheel_radius, columns=data)


@dataclass
class Metrics:
    tracking_rms: float
    overshoot_points: float
    settling_time: float | None
    convergence_time: float | None
    dispersion_points: float | None
    braking_distance: float

    def as_dict(self) -> dict:
        return {
            "tracking_rms": self.tracking_rms,
            "overshoot_points": self.overshoot_points,
            "settling_time": self.settling_time,
            "convergence_time": self.convergence_time,
            "dispersion_points": self.dispersion_points,
            "braking_distance": self.braking_distance,
        }


SETTLING_BAND_POINTS = 0.5
CONVERGENCE_BAND_POINTS = 0.25


def _mode_sign(trace: Trace) -> np.ndarray:
    braking = (trace["driver_torque"] < 0.0) | (trace["t_brake"] > 0.0)
    return np.where(braking, -1.0, 1.0)


def compute_metrics(trace: Trace, kappa_star: float | None = None) -> Metrics:
    """Scalar quality measures from a trace.

    Overshoot and the settling band are measured in slip percentage points
    beyond the instantaneous reference on the worse wheel; the estimator
    dispersion is the spread of the folded operating slip around the
    oracle optimum while the controller is engaged.
    """
    active = trace.flag(FLAG_MPC_ACTIVE)
    ts = float(trace["t"][1] - trace["t"][0]) if len(trace) > 1 else 0.0
    sign = _mode_sign(trace)

    worst = np.maximum(sign * trace["kappa_l"], sign * trace["kappa_r"])
    exceed_points = 100.0 * (worst - sign * trace["kappa_ref"])

    if active.any():
        err_l = trace["v_slip_ref"] - trace.v_slip("l")
        err_r = trace["v_slip_ref"] - trace.v_slip("r")
        stacked = np.concatenate([err_l[active], err_r[active]])
        tracking_rms = float(np.sqrt(np.mean(stacked ** 2)))
        overshoot = float(np.clip(exceed_points[active], 0.0, None).max())
        settling = _settling_time(trace, active, exceed_points)
    else:
        tracking_rms = 0.0
        overshoot = 0.0
        settling = None

    convergence = None
    dispersion = None
    if kappa_star is not None:
        err = np.abs(trace["kappa_hat"] - kappa_star)
        inside = err < CONVERGENCE_BAND_POINTS / 100.0
        convergence = _sustained_entry_time(trace["t"], inside)
        if active.any():
            op = np.concatenate([
                (sign * trace["kappa_l"])[active], (sign * trace["kappa_r"])[active]])
            dispersion = float(np.std(op - kappa_star) * 100.0)

    braking = (trace["driver_torque"] < 0.0) | (trace["t_brake"] > 0.0)
    braking_distance = float(np.sum(trace["v_x"][braking]) * ts)

    return Metrics(
        tracking_rms=tracking_rms, overshoot_points=overshoot,
        settling_time=settling, convergence_time=convergence,
        dispersion_points=dispersion, braking_distance=braking_distance,
    )


def _settling_time(trace: Trace, active: np.ndarray, exceed_points: np.ndarray):
    """Time from first engagement until the error last left the band."""
    idx_active = np.flatnonzero(active)
    start = idx_active[0]
    err = np.abs(exceed_points[start:])
    outside = np.flatnonzero(err > SETTLING_BAND_POINTS)
    if outside.size == 0:
        return 0.0
    last = outside[-1]
    if last == len(err) - 1:
        return None     # never settled
    return float(trace["t"][start + last + 1] - trace["t"][start])


def _sustained_entry_time(t: np.ndarray, inside: np.ndarray):
    """First time the condition becomes true and stays true to the end."""
    if not inside[-1]:
        return None
    false_idx = np.flatnonzero(~inside)
    if false_idx.size == 0:
        return float(t[0])
    return float(t[false_idx[-1] + 1])


def oscillation_index(trace: Trace, window: float = 1.0) -> int:
    """Zero crossings of the slip-velocity tracking error in the first
    ``window`` seconds after the controller first engages."""
    active = trace.flag(FLAG_MPC_ACTIVE)
    if not active.any():
        return 0
    start = int(np.flatnonzero(active)[0])
    ts = float(trace["t"][1] - trace["t"][0])
    stop = min(len(trace), start + int(round(window / ts)))
    err = (trace["v_slip_ref"] - 0.5 * (trace.v_slip("l") + trace.v_slip("r")))[start:stop]
    signs = np.sign(err)
    signs = signs[signs != 0]
    return int(np.sum(signs[1:] != signs[:-1]))


# --- maneuver files -------------------------------------------------------

_MANEUVER_SCHEMA = {
    "maneuver": {
        "name": str, "duration": float, "initial_speed": float,
        "controller": str, "estimator": str, "fixed_kappa_ref": float,
        "seed": int,
    },
    "driver": {
        "mode": str, "torque": str, "torque_mode": str,
        "cycle_low": float, "cycle_high": float, "cycle_torque": float,
    },
    "schedules": {
        "mu": str, "brake_torque": str, "lateral_accel": str, "road_load": str,
    },
}


def parse_maneuver(text: str, fallback_name: str = "unnamed") -> Maneuver:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for section in parser.sections():
        if section not in _MANEUVER_SCHEMA:
            raise ConfigError(f"unknown maneuver section [{section}]")
        for key, _ in parser.items(section):
            if key not in _MANEUVER_SCHEMA[section]:
                raise ConfigError(f"unknown maneuver key [{section}] {key}")
    if not parser.has_section("maneuver"):
        raise ConfigError("maneuver file needs a [maneuver] section")

    m = parser["maneuver"]
    kwargs = dict(
        name=m.get("name", fallback_name),
        duration=m.getfloat("duration"),
        initial_speed=m.getfloat("initial_speed"),
        controller=m.get("controller", "mpc"),
        estimator=m.get("estimator", "esc"),
        fixed_kappa_ref=m.getfloat("fixed_kappa_ref", 0.044),
        seed=m.getint("seed", 0),
    )
    if kwargs["duration"] is None or kwargs["initial_speed"] is None:
        raise ConfigError("[maneuver] duration and initial_speed are required")

    if parser.has_section("driver"):
        d = parser["driver"]
        mode = d.get("mode", "schedule")
        if mode == "cycle":
            kwargs["cycle"] = (
                d.getfloat("cycle_low"), d.getfloat("cycle_high"),
                d.getfloat("cycle_torque", 500.0),
            )
        elif mode == "schedule":
            torque_mode = d.get("torque_mode", "step")
            if torque_mode not in ("step", "linear"):
                raise ConfigError(f"torque_mode must be step or linear, got {torque_mode!r}")
            if d.get("torque") is not None:
                kwargs["driver_schedule"] = Schedule.parse(
                    d.get("torque"), interpolate=torque_mode == "linear")
        else:
            raise ConfigError(f"driver mode must be schedule or cycle, got {mode!r}")

    if parser.has_section("schedules"):
        s = parser["schedules"]
        for key, attr in (("mu", "mu"), ("brake_torque", "brake_torque"),
                          ("lateral_accel", "lateral_accel"), ("road_load", "road_load")):
            if s.get(key) is not None:
                kwargs[attr] = Schedule.parse(s.get(key))

    try:
        return Maneuver(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_maneuver(path: str | Path) -> Maneuver:
    path = Path(path)
    return parse_maneuver(path.read_text(), fallback_name=path.stem)


FIXTURES = ("fig5-tuning", "fig6-brake-mu-step", "fig7-cycles")


def fixture(name: str) -> Maneuver:
    """Load one of the shipped maneuvers by id."""
    if name not in FIXTURES:
        raise KeyError(name)
    text = resources.files("slipbench").joinpath(f"data/{name}.cfg").read_text()
    return parse_maneuver(text, fallback_name=name)
