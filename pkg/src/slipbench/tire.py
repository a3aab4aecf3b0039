"""Reduced magic-formula longitudinal tire curve.

Four shape coefficients plus a friction scale.  The curve is odd in slip,
rises to a single peak and decays gently beyond it; the peak location is
what the extremum-seeking estimator hunts for, so the model ships with a
calibration helper that places the peak at a requested slip ratio.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels

KAPPA_MAX = 0.2
GRID_RESOLUTION = 1e-4


class FlatCurveError(ValueError):
    """Raised when a degenerate tire (no force peak) is interrogated."""


@dataclass(frozen=True)
class TireModel:
    stiffness_b: float
    shape_c: float
    peak_d: float        # peak force per unit vertical load (peak mu)
    curvature_e: float
    friction_scale: float = 1.0

    def __post_init__(self):
        if not 1.0 < self.shape_c < 2.0:
            raise ValueError(f"shape_c must lie in (1, 2), got {self.shape_c}")
        if not 0.0 <= self.curvature_e < 1.0:
            raise ValueError(f"curvature_e must lie in [0, 1), got {self.curvature_e}")
        if self.stiffness_b <= 0.0:
            raise ValueError(f"stiffness_b must be positive, got {self.stiffness_b}")

    def force(self, kappa: float, fz: float, mu: float = 1.0) -> float:
        """Longitudinal force at slip ``kappa`` under vertical load ``fz``.

        ``mu`` is the road friction coefficient; the tire's own
        ``friction_scale`` multiplies it.
        """
        return kernels.magic_formula(
            self.stiffness_b, self.shape_c, self.peak_d, self.curvature_e,
            mu * self.friction_scale, kappa, fz,
        )

    def scaled(self, friction_scale: float) -> "TireModel":
        return replace(self, friction_scale=friction_scale)


def calibrate_stiffness(shape_c: float, curvature_e: float, kappa_peak: float) -> float:
    """Stiffness coefficient that puts the force peak at ``kappa_peak``.

    The curve peaks where the sine argument reaches pi/2, i.e. where
    B*k - E*(B*k - atan(B*k)) equals tan(pi/(2C)); that expression is
    monotone in B for E < 1, so bisection suffices.
    """
    if not 0.0 < kappa_peak <= KAPPA_MAX:
        raise ValueError(f"kappa_peak must lie in (0, {KAPPA_MAX}], got {kappa_peak}")
    target = math.tan(math.pi / (2.0 * shape_c))

    def inner(b):
        bk = b * kappa_peak
        return bk - curvature_e * (bk - math.atan(bk))

    lo, hi = 1e-9, 1e6
    if inner(hi) < target:
        raise ValueError("kappa_peak unreachable for the given shape coefficients")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if inner(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def tire_with_peak(kappa_peak: float, shape_c: float = 1.6, peak_d: float = 1.2,
                   curvature_e: float = 0.6) -> TireModel:
    """Tire calibrated so the force maximum sits at ``kappa_peak``."""
    b = calibrate_stiffness(shape_c, curvature_e, kappa_peak)
    return TireModel(stiffness_b=b, shape_c=shape_c, peak_d=peak_d, curvature_e=curvature_e)


def reference_tire() -> TireModel:
    """Default tire with its peak at 4.4% slip."""
    return tire_with_peak(0.044)


def optimal_slip(tire: TireModel, fz: float = 1.0, mu: float = 1.0,
                 kappa_max: float = KAPPA_MAX) -> float:
    """Slip ratio maximizing the force, by dense grid search.

    Brute-force oracle for estimator tests; controllers never see it.
    Raises :class:`FlatCurveError` for a degenerate (flat) curve.
    """
    kappas = np.arange(0.0, kappa_max + GRID_RESOLUTION / 2, GRID_RESOLUTION)
    forces = force_curve(tire, kappas, fz=fz, mu=mu)
    peak = forces.max()
    if peak <= 0.0 or fz <= 0.0:
        raise FlatCurveError("force curve has no positive peak; optimal slip undefined")
    return float(kappas[int(np.argmax(forces))])


def force_curve(tire: TireModel, kappas, fz: float = 1.0, mu: float = 1.0):
    """Vectorized force evaluation (plotting and grid-search helper)."""
    bk = tire.stiffness_b * np.asarray(kappas, dtype=float)
    inner = bk - tire.curvature_e * (bk - np.arctan(bk))
    return mu * tire.friction_scale * tire.peak_d * fz * np.sin(tire.shape_c * np.arctan(inner))
