"""Receding-horizon slip-velocity tracker with a precomputed analytic solution.

The three-state wheel/vehicle model is augmented so the input rate is the
decision variable (which buys integral action), the batch prediction
matrices are assembled once, and the unconstrained quadratic cost is
minimized in closed form.  Only the first-move feedback rows survive into
the runtime object, so one control step is two small dot products and an
add.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .plant import EPS_SPEED, Measurement, VehicleParams

CONDITION_LIMIT = 1e12


class IllConditionedCost(ValueError):
    """Raised when the quadratic-form Hessian is unusable."""


@dataclass(frozen=True)
class PlantModel:
    """Discrete three-state model: wheel speeds and vehicle speed in, slip velocities out."""

    a_p: np.ndarray
    b_p: np.ndarray
    b_d: np.ndarray     # disturbance channel; documented, not used for prediction
    c_p: np.ndarray
    sample_time: float


@dataclass(frozen=True)
class AugmentedModel:
    """Input-rate form: state is [delta x_p; y]."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


@dataclass(frozen=True)
class CostConfig:
    p_weight: float = 250.0
    q_weight: float = 250.0
    r_weight: float = 1.0
    horizon: int = 1450

    def __post_init__(self):
        if self.p_weight < 0.0 or self.q_weight < 0.0:
            raise ValueError("output weights must be >= 0")
        if self.r_weight <= 0.0:
            raise ValueError("input-rate weight must be > 0")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass(frozen=True)
class MpcGains:
    """Feedback rows of the analytic minimizer plus the build products."""

    k_x: np.ndarray          # first row of G^-1 F Phi, shape (5,)
    k_r: np.ndarray          # first row of G^-1 F, shape (2N,)
    k_r_sum: np.ndarray      # per-output sums of k_r, shape (2,) (constant-reference path)
    horizon: int
    condition: float
    phi: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    omega_diag: np.ndarray = field(repr=False)
    psi_diag: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)
    f: np.ndarray = field(repr=False)


def build_plant_model(params: VehicleParams) -> PlantModel:
    ts = params.sample_time
    r_w = params.wheel_radius
    b = ts * params.gear_ratio / (2.0 * params.wheel_inertia)
    a_p = np.eye(3)
    b_p = np.array([[b], [b], [0.0]])
    b_d = np.array([
        [-ts * r_w / params.wheel_inertia, 0.0, ts / params.wheel_inertia],
        [0.0, -ts * r_w / params.wheel_inertia, -ts / params.wheel_inertia],
        [ts / params.mass, ts / params.mass, 0.0],
    ])
    c_p = np.array([[r_w, 0.0, -1.0], [0.0, r_w, -1.0]])
    return PlantModel(a_p=a_p, b_p=b_p, b_d=b_d, c_p=c_p, sample_time=ts)


def augment_delta_u(pm: PlantModel) -> AugmentedModel:
    a = np.block([
        [pm.a_p, np.zeros((3, 2))],
        [pm.c_p @ pm.a_p, np.eye(2)],
    ])
    b = np.vstack([pm.b_p, pm.c_p @ pm.b_p])
    c = np.hstack([np.zeros((2, 3)), np.eye(2)])
    return AugmentedModel(a=a, b=b, c=c)


def build_prediction(am: AugmentedModel, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Batch matrices (Phi, Gamma) stacking N predicted output pairs."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = am.a.shape[0]
    phi = np.empty((2 * horizon, n))
    impulse = np.empty((horizon, 2))    # impulse[m] = C A^m B
    a_pow = np.eye(n)
    for m in range(horizon):
        impulse[m] = (am.c @ a_pow @ am.b).ravel()
        a_pow = a_pow @ am.a
        phi[2 * m:2 * m + 2] = am.c @ a_pow
    gamma = np.zeros((2 * horizon, horizon))
    flat = impulse.ravel()
    for j in range(horizon):
        gamma[2 * j:, j] = flat[:2 * (horizon - j)]
    return phi, gamma


def build_cost(cfg: CostConfig, horizon: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Diagonals of the stacked output and input-rate weights.

    Both matrices are diagonal because the per-stage weights are scalar
    multiples of the identity; returning the diagonals keeps the big-N
    assembly cheap.
    """
    n = cfg.horizon if horizon is None else horizon
    omega = np.full(2 * n, float(cfg.q_weight))
    omega[-2:] = cfg.p_weight
    psi = np.full(n, float(cfg.r_weight))
    return omega, psi


def compute_gains(phi: np.ndarray, gamma: np.ndarray, omega_diag: np.ndarray,
                  psi_diag: np.ndarray) -> MpcGains:
    """Closed-form minimizer of 1/2 dU' G dU + dU' F (Phi x - ref).

    G = 2(Psi + Gamma' Omega Gamma), F = 2 Gamma' Omega.  Only the first
    block row of the solution is ever applied, so the factorization is
    used once to extract it.  Configurations whose Hessian is close to
    singular are rejected.
    """
    n = gamma.shape[1]
    g = 2.0 * (np.diag(psi_diag) + gamma.T @ (gamma * omega_diag[:, None]))
    g = 0.5 * (g + g.T)
    try:
        chol = sla.cholesky(g, lower=True)
    except sla.LinAlgError as exc:
        raise IllConditionedCost(f"Hessian not positive definite: {exc}") from exc
    anorm = np.linalg.norm(g, 1)
    rcond, info = sla.lapack.dpocon(chol, anorm, uplo=b"L")
    condition = np.inf if info != 0 or rcond == 0.0 else 1.0 / rcond
    if condition > CONDITION_LIMIT:
        raise IllConditionedCost(
            f"Hessian condition {condition:.3e} exceeds {CONDITION_LIMIT:.0e}"
        )
    e0 = np.zeros(n)
    e0[0] = 1.0
    z = sla.cho_solve((chol, True), e0)     # z = G^-1 e0; G symmetric
    f = 2.0 * gamma.T * omega_diag[None, :]
    k_r = 2.0 * (gamma @ z) * omega_diag    # z' F
    k_x = k_r @ phi
    return MpcGains(
        k_x=k_x, k_r=k_r, k_r_sum=k_r.reshape(-1, 2).sum(axis=0),
        horizon=n, condition=condition,
        phi=phi, gamma=gamma, omega_diag=omega_diag, psi_diag=psi_diag, g=g, f=f,
    )


def gains_for(params: VehicleParams, cfg: CostConfig) -> MpcGains:
    """Full pipeline: plant model -> augmentation -> prediction -> gains."""
    am = augment_delta_u(build_plant_model(params))
    phi, gamma = build_prediction(am, cfg.horizon)
    omega, psi = build_cost(cfg)
    return compute_gains(phi, gamma, omega, psi)


def delta_u_sequence(gains: MpcGains, x: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Whole optimal input-rate sequence (test/inspection path)."""
    rhs = gains.f @ (gains.phi @ x - ref)
    return -sla.cho_solve((sla.cholesky(gains.g, lower=True), True), rhs)


def first_delta_u(gains: MpcGains, x: np.ndarray, ref: np.ndarray) -> float:
    """First move of the minimizer.

    ``ref`` may be the full stacked reference (2N) or a single output pair
    (2,) held constant over the horizon.
    """
    if ref.shape[0] == 2:
        ref_term = gains.k_r_sum @ ref
    else:
        ref_term = gains.k_r @ ref
    return float(-gains.k_x @ x + ref_term)


def reference_from_kappa(kappa_ref: float, v_x: float, omega_mean: float, r_w: float,
                         braking: bool) -> tuple[float, bool]:
    """Slip-velocity reference implied by a slip-ratio reference.

    Inverts the slip definition of the active mode; below the low-speed
    threshold the fallback denominator is used and flagged, mirroring the
    slip computation itself.
    """
    denom = v_x if braking else omega_mean * r_w
    if denom > EPS_SPEED:
        return kappa_ref * denom, False
    return kappa_ref * EPS_SPEED, True


def config_digest(params: VehicleParams, cfg: CostConfig) -> str:
    """Stable key for the gain cache."""
    payload = (
        f"v1|{params.sample_time!r}|{params.gear_ratio!r}|{params.wheel_inertia!r}"
        f"|{params.wheel_radius!r}|{params.mass!r}"
        f"|{cfg.p_weight!r}|{cfg.q_weight!r}|{cfg.r_weight!r}|{cfg.horizon}"
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_gains(path, gains: MpcGains) -> None:
    """Persist the runtime feedback rows (not the build matrices)."""
    np.savez(path, k_x=gains.k_x, k_r=gains.k_r, horizon=gains.horizon,
             condition=gains.condition)


def load_gains(path) -> MpcGains:
    data = np.load(path)
    k_r = data["k_r"]
    empty = np.empty(0)
    return MpcGains(
        k_x=data["k_x"], k_r=k_r, k_r_sum=k_r.reshape(-1, 2).sum(axis=0),
        horizon=int(data["horizon"]), condition=float(data["condition"]),
        phi=empty, gamma=empty, omega_diag=empty, psi_diag=empty, g=empty, f=empty,
    )


class MpcController:
    """Stateful wrapper: assembles the augmented state from measurements and
    integrates the input rate, saturating against the motor limits.

    The saturated torque is stored as the previous input so the rate
    integration cannot wind up past the actuator.
    """

    def __init__(self, gains: MpcGains, params: VehicleParams, torque_limit: float):
        self.gains = gains
        self.r_w = params.wheel_radius
        self.torque_limit = torque_limit
        self.u_prev = 0.0
        self._x_prev: tuple | None = None
        # scalar copies keep the per-sample step free of array allocation
        self._kx = tuple(float(v) for v in gains.k_x)
        self._kr = (float(gains.k_r_sum[0]), float(gains.k_r_sum[1]))

    def reset(self, u_start: float = 0.0) -> None:
        """Re-arm at ``u_start`` (bumpless hand-over from the driver demand)."""
        self.u_prev = min(self.torque_limit, max(-self.torque_limit, float(u_start)))
        self._x_prev = None

    def step(self, meas: Measurement, v_slip_ref: float) -> float:
        x_p = (meas.omega_l, meas.omega_r, meas.v_x)
        if self._x_prev is None:
            dx = (0.0, 0.0, 0.0)
        else:
            prev = self._x_prev
            dx = (x_p[0] - prev[0], x_p[1] - prev[1], x_p[2] - prev[2])
        self._x_prev = x_p
        y0 = self.r_w * meas.omega_l - meas.v_x
        y1 = self.r_w * meas.omega_r - meas.v_x
        kx = self._kx
        du = (-(kx[0] * dx[0] + kx[1] * dx[1] + kx[2] * dx[2]
                + kx[3] * y0 + kx[4] * y1)
              + (self._kr[0] + self._kr[1]) * v_slip_ref)
        u = self.u_prev + du
        if u > self.torque_limit:
            u = self.torque_limit
        elif u < -self.torque_limit:
            u = -self.torque_limit
        self.u_prev = u
        return u
