#!/usr/bin/env python3
"""Compare the compiled kernel backend against the pure-Python fallback.

Times the raw kernel loop (the plant-side math executed every sample) and
a full closed-loop scenario under each backend.  Run from the repository
root:

    python benchmarks/bench_backends.py [--steps N]

The scenario comparison re-executes this script in a subprocess with
``SLIPBENCH_PURE_PYTHON=1`` so the import-time backend selection is
exercised exactly as a user would hit it.
"""

import argparse
import json
import os
import subprocess
import sys
import time


def time_kernel_loop(impl, steps: int) -> float:
    """One composed plant-math iteration per step, scalar kernels only."""
    omega_l, omega_r, v_x, a_x = 95.0, 94.0, 30.0, 2.0
    t0 = time.perf_counter()
    for i in range(steps):
        fz, _ = impl.vertical_load(v_x, a_x, 2200.0, 40.0, 0.5)
        kappa_l, _ = impl.slip_ratio(omega_l, v_x, 0.33, False, 0.5)
        kappa_r, _ = impl.slip_ratio(omega_r, v_x, 0.33, False, 0.5)
        f_l = impl.magic_formula(46.9, 1.6, 1.2, 0.6, 0.6, kappa_l, fz)
        f_r = impl.magic_formula(46.9, 1.6, 1.2, 0.6, 0.6, kappa_r, fz)
        t_c = impl.lsd_clutch_torque(omega_l, omega_r, 200.0, 3.2, 15.0, 0.05, 25.0)
        acc_l = impl.wheel_accel(320.0 + t_c, 0.0, omega_l, 0.33, f_l, 2.0)
        acc_r = impl.wheel_accel(320.0 - t_c, 0.0, omega_r, 0.33, f_r, 2.0)
        a_x = (f_l + f_r) / 750.0
    return time.perf_counter() - t0


def time_scenario() -> float:
    from slipbench.config import default_config
    from slipbench.mpc import CostConfig, gains_for
    from slipbench.scenario import fixture, run_scenario

    cfg = default_config()
    gains = gains_for(cfg.vehicle, CostConfig(horizon=100))
    run_scenario(fixture("fig7-cycles"), cfg, gains=gains)    # warm-up imports
    t0 = time.perf_counter()
    run_scenario(fixture("fig7-cycles"), cfg, gains=gains)
    return time.perf_counter() - t0


def report_current_backend(steps: int) -> dict:
    from slipbench import kernels
    from slipbench.kernels import _pure

    result = {"backend": kernels.BACKEND}
    result["kernel_loop_s"] = time_kernel_loop(kernels, steps)
    if kernels.BACKEND == "native":
        result["kernel_loop_pure_s"] = time_kernel_loop(_pure, steps)
    result["scenario_s"] = time_scenario()
    return result


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=200_000)
    parser.add_argument("--json", action="store_true",
                        help="machine-readable output (used by the subprocess)")
    args = parser.parse_args()

    current = report_current_backend(args.steps)
    if args.json:
        print(json.dumps(current))
        return 0

    print(f"active backend: {current['backend']}")
    print(f"kernel loop ({args.steps} steps): {current['kernel_loop_s']:.3f} s")
    if "kernel_loop_pure_s" in current:
        ratio = current["kernel_loop_pure_s"] / current["kernel_loop_s"]
        print(f"same loop, pure-Python module:  {current['kernel_loop_pure_s']:.3f} s"
              f"  ({ratio:.1f}x slower)")
    print(f"fig7-cycles scenario (100 s sim): {current['scenario_s']:.3f} s")

    if current["backend"] == "native":
        env = dict(os.environ, SLIPBENCH_PURE_PYTHON="1")
        proc = subprocess.run(
            [sys.executable, __file__, "--steps", str(args.steps), "--json"],
            capture_output=True, text=True, env=env, check=True)
        fallback = json.loads(proc.stdout)
        print(f"\nfallback backend (SLIPBENCH_PURE_PYTHON=1): {fallback['backend']}")
        print(f"kernel loop: {fallback['kernel_loop_s']:.3f} s")
        print(f"fig7-cycles scenario: {fallback['scenario_s']:.3f} s "
              f"({fallback['scenario_s'] / current['scenario_s']:.2f}x the native time)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
