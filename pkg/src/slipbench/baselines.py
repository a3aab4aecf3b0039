"""Comparison controllers: a PID slip-velocity tracker and a sliding-mode
optimum-slip estimator.

Both are deliberately conventional.  The PID is the reference-tracking
baseline the receding-horizon controller is judged against; the
sliding-mode estimator drives its slip estimate at a fixed rate in the
direction that recently increased acceleration, which chatters by
construction.
"""

from collections import deque
from dataclasses import dataclass


@dataclass(frozen=True)
class PidConfig:
    k_p: float = 900.0
    k_i: float = 9000.0
    k_d: float = 2.0
    output_limit: float = 500.0     # |u| <= limit
    integrator_limit: float = 500.0  # clamp on the integral term alone

    def __post_init__(self):
        if min(self.k_p, self.k_i, self.k_d) < 0.0:
            raise ValueError("PID gains must be >= 0")
        if self.output_limit <= 0.0:
            raise ValueError("output limit must be positive")


class PidController:
    """Parallel PID with clamped integrator and saturated output."""

    def __init__(self, cfg: PidConfig):
        self.cfg = cfg
        self.integral = 0.0
        self._e_prev: float | None = None

    def reset(self) -> None:
        self.integral = 0.0
        self._e_prev = None

    def step(self, error: float, sample_time: float) -> float:
        cfg = self.cfg
        self.integral += cfg.k_i * error * sample_time
        self.integral = min(cfg.integrator_limit, max(-cfg.integrator_limit, self.integral))
        derivative = 0.0 if self._e_prev is None else (error - self._e_prev) / sample_time
        self._e_prev = error
        u = cfg.k_p * error + self.integral + cfg.k_d * derivative
        return min(cfg.output_limit, max(-cfg.output_limit, u))


def pid_step(cfg: PidConfig, controller: "PidController", error: float,
             sample_time: float) -> float:
    """Functional entry point mirroring the controller method."""
    assert controller.cfg is cfg
    return controller.step(error, sample_time)


@dataclass(frozen=True)
class SlidingModeEstimatorConfig:
    switching_rate: float = 0.02        # slip per second at full switching
    boundary_layer: float = 50.0        # m/s^2 per slip; gradient below this is scaled
    kappa_min: float = 0.005
    kappa_max: float = 0.15
    window: float = 0.2                 # seconds of history for the gradient sign

    def __post_init__(self):
        if self.switching_rate <= 0.0:
            raise ValueError("switching rate must be positive")
        if not 0.0 <= self.kappa_min < self.kappa_max:
            raise ValueError("slip bounds must satisfy 0 <= kappa_min < kappa_max")


class SlidingModeEstimator:
    """Optimum-slip search by signed constant-rate stepping.

    The sign comes from correlating recent changes in measured acceleration
    with changes in measured slip; inside the boundary layer the step is
    scaled down instead of switched, which bounds (but does not remove)
    the chattering.
    """

    def __init__(self, cfg: SlidingModeEstimatorConfig, sample_time: float,
                 kappa0: float = 0.03):
        self.cfg = cfg
        self.ts = sample_time
        self.kappa_hat = min(cfg.kappa_max, max(cfg.kappa_min, kappa0))
        n = max(2, int(round(cfg.window / sample_time)))
        self._kappas: deque = deque(maxlen=n)
        self._axs: deque = deque(maxlen=n)

    def gradient_sign(self) -> float:
        """Saturated sign of the recent d(a_x)/d(kappa) correlation."""
        if len(self._kappas) < 2:
            return 0.0
        num = 0.0
        den = 0.0
        ks = list(self._kappas)
        axs = list(self._axs)
        for i in range(1, len(ks)):
            dk = ks[i] - ks[i - 1]
            da = axs[i] - axs[i - 1]
            num += da * dk
            den += dk * dk
        if den == 0.0:
            return 0.0
        gradient = num / den
        scaled = gradient / self.cfg.boundary_layer
        return min(1.0, max(-1.0, scaled))

    def step(self, kappa_meas: float, a_x_meas: float, active: bool) -> float:
        self._kappas.append(kappa_meas)
        self._axs.append(a_x_meas)
        if not active:
            return self.kappa_hat
        move = self.cfg.switching_rate * self.gradient_sign() * self.ts
        self.kappa_hat = min(self.cfg.kappa_max,
                             max(self.cfg.kappa_min, self.kappa_hat + move))
        return self.kappa_hat


def sliding_mode_ref_step(cfg: SlidingModeEstimatorConfig, est: SlidingModeEstimator,
                          gradient_sign: float, sample_time: float) -> float:
    """Direct-rate update when the sign is supplied externally (test hook)."""
    assert est.cfg is cfg
    move = cfg.switching_rate * min(1.0, max(-1.0, gradient_sign)) * sample_time
    est.kappa_hat = min(cfg.kappa_max, max(cfg.kappa_min, est.kappa_hat + move))
    return est.kappa_hat
