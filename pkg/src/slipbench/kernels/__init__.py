"""Hot-path kernels with a compiled core and a pure-Python fallback.

The compiled extension is preferred when present; ``SLIPBENCH_PURE_PYTHON=1``
forces the fallback.  ``BACKEND`` names the active implementation so traces
and benchmarks can record it.
"""

import os

from . import _pure

if os.environ.get("SLIPBENCH_PURE_PYTHON"):
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

magic_formula = _impl.magic_formula
slip_ratio = _impl.slip_ratio
lsd_clutch_torque = _impl.lsd_clutch_torque
vertical_load = _impl.vertical_load
wheel_accel = _impl.wheel_accel
biquad_step = _impl.biquad_step

__all__ = [
    "BACKEND",
    "biquad_step",
    "lsd_clutch_torque",
    "magic_formula",
    "slip_ratio",
    "vertical_load",
    "wheel_accel",
]
