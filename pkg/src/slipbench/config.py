"""Plain-text configuration for the whole stack.

One INI-style file configures the tire, the vehicle, the controller
weights, the estimator and the baselines; maneuvers live in separate files
of the same format (see ``scenario``).  Unknown sections or keys are
rejected by name, parse errors keep their line numbers, and every value
has a shipped default, so a config file only needs the keys it changes.
"""

import configparser
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .baselines import PidConfig, SlidingModeEstimatorConfig
from .esc import EscConfig, LateralScaling
from .mpc import CostConfig
from .plant import VehicleParams
from .tire import TireModel, tire_with_peak


class ConfigError(ValueError):
    """Configuration file problem, with location where available."""


@dataclass(frozen=True)
class RunConfig:
    tire: TireModel
    vehicle: VehicleParams
    cost: CostConfig
    esc: EscConfig
    lateral: LateralScaling
    pid: PidConfig
    sliding: SlidingModeEstimatorConfig
    torque_limit: float = 500.0
    initial_kappa_hat: float = 0.03


_SCHEMA = {
    "tire": {
        "peak_slip": float, "shape_c": float, "peak_d": float,
        "curvature_e": float, "stiffness_b": float,
    },
    "vehicle": {
        "mass": float, "wheel_inertia": float, "wheel_radius": float,
        "gear_ratio": float, "sample_time": float,
        "static_rear_load_per_wheel": float, "load_transfer_gain": float,
        "downforce_gain": float, "lsd_preload": float,
        "lsd_torque_sensitivity": float, "lsd_viscous_gain": float,
        "delay_actuation_steps": int, "delay_measurement_steps": int,
    },
    "mpc": {
        "p_weight": float, "q_weight": float, "r_weight": float, "horizon": int,
    },
    "esc": {
        "perturbation_amplitude": float, "perturbation_frequency_hz": float,
        "integrator_gain": float, "kappa_min": float, "kappa_max": float,
        "max_rate": float, "hpf_damping": float, "activation_hold": float,
        "lateral_limit": float, "deactivate_on_brake": bool,
        "initial_estimate": float,
    },
    "lateral": {"zero_slip_accel": float, "onset_accel": float},
    "pid": {"k_p": float, "k_i": float, "k_d": float},
    "sliding": {"switching_rate": float, "boundary_layer": float, "window": float},
    "limits": {"motor_torque_max": float},
}


def _read_ini(path_or_text, from_text=False) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if from_text:
            parser.read_string(path_or_text)
        else:
            with open(path_or_text) as fh:
                parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path_or_text}") from None
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return parser


def _coerce(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            lowered = raw.strip().lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(
            f"[{section}] {key} = {raw!r}: expected {kind.__name__}"
        ) from None


def _section(parser: configparser.ConfigParser, name: str) -> dict:
    if not parser.has_section(name):
        return {}
    schema = _SCHEMA[name]
    out = {}
    for key, raw in parser.items(name):
        if key not in schema:
            known = ", ".join(sorted(schema))
            raise ConfigError(f"unknown key [{name}] {key}; known keys: {known}")
        out[key] = _coerce(name, key, raw, schema[key])
    return out


def _check_sections(parser: configparser.ConfigParser) -> None:
    for name in parser.sections():
        if name not in _SCHEMA:
            known = ", ".join(sorted(_SCHEMA))
            raise ConfigError(f"unknown section [{name}]; known sections: {known}")


def _build(parser: configparser.ConfigParser) -> RunConfig:
    _check_sections(parser)
    try:
        tire_kv = _section(parser, "tire")
        peak = tire_kv.pop("peak_slip", 0.044)
        explicit_b = tire_kv.pop("stiffness_b", None)
        if explicit_b is not None:
            tire = TireModel(
                stiffness_b=explicit_b,
                shape_c=tire_kv.get("shape_c", 1.6),
                peak_d=tire_kv.get("peak_d", 1.2),
                curvature_e=tire_kv.get("curvature_e", 0.6),
            )
        else:
            tire = tire_with_peak(
                peak,
                shape_c=tire_kv.get("shape_c", 1.6),
                peak_d=tire_kv.get("peak_d", 1.2),
                curvature_e=tire_kv.get("curvature_e", 0.6),
            )

        vehicle = VehicleParams(**_section(parser, "vehicle"))
        cost = CostConfig(**_section(parser, "mpc"))

        esc_kv = _section(parser, "esc")
        kappa0 = esc_kv.pop("initial_estimate", 0.03)
        freq_hz = esc_kv.pop("perturbation_frequency_hz", None)
        if freq_hz is not None:
            esc_kv["perturbation_frequency"] = 2.0 * math.pi * freq_hz
        esc = EscConfig(**esc_kv)

        lateral = LateralScaling(**_section(parser, "lateral"))
        limits = _section(parser, "limits")
        torque_limit = limits.get("motor_torque_max", 500.0)
        pid_kv = _section(parser, "pid")
        pid = PidConfig(output_limit=torque_limit, integrator_limit=torque_limit,
                        **pid_kv)
        sliding_kv = _section(parser, "sliding")
        sliding_kv.setdefault("kappa_min", esc.kappa_min)
        sliding_kv.setdefault("kappa_max", esc.kappa_max)
        sliding = SlidingModeEstimatorConfig(**sliding_kv)

        return RunConfig(
            tire=tire, vehicle=vehicle, cost=cost, esc=esc, lateral=lateral,
            pid=pid, sliding=sliding, torque_limit=torque_limit,
            initial_kappa_hat=kappa0,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> RunConfig:
    """Parse a configuration file; missing keys keep their defaults."""
    return _build(_read_ini(path))


def config_from_text(text: str) -> RunConfig:
    return _build(_read_ini(text, from_text=True))


def default_config() -> RunConfig:
    """The shipped defaults (identical to parsing ``data/default.cfg``)."""
    text = resources.files("slipbench").joinpath("data/default.cfg").read_text()
    return config_from_text(text)
