"""Command-line entry point.

Subcommands: ``run`` a maneuver to a trace and metrics, ``plot`` the
figure analogues from a trace, ``gains`` to precompute and cache the
controller feedback rows, ``serve`` the tuning service, ``accept`` to
execute the acceptance suite.  All subcommands are non-interactive.
Exit codes: 0 success, 1 runtime or criterion failure, 2 bad usage.
"""

import argparse
import difflib
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunConfig, default_config, load_config
from .mpc import (IllConditionedCost, config_digest, gains_for, load_gains,
                  save_gains)
from .plant import SimulationDiverged
from .scenario import (FIXTURES, Trace, compute_metrics, fixture,
                       load_maneuver, run_scenario)
from .tire import optimal_slip

DEFAULT_CACHE_DIR = Path(os.environ.get(
    "SLIPBENCH_CACHE_DIR", Path.home() / ".cache" / "slipbench"))


def _load_run_config(path: str | None) -> RunConfig:
    return load_config(path) if path else default_config()


def _resolve_maneuver(name: str):
    if name in FIXTURES:
        return fixture(name)
    path = Path(name)
    if path.exists():
        return load_maneuver(path)
    suggestions = difflib.get_close_matches(name, FIXTURES, n=3, cutoff=0.3)
    hint = f"; did you mean {', '.join(suggestions)}?" if suggestions else ""
    raise ConfigError(f"unknown maneuver {name!r}{hint} "
                      f"(shipped fixtures: {', '.join(FIXTURES)})")


def _gains_with_cache(config: RunConfig, cache_dir: Path, refresh: bool = False):
    cache_dir.mkdir(parents=True, exist_ok=True)
    digest = config_digest(config.vehicle, config.cost)
    path = cache_dir / f"gains-{digest}.npz"
    if path.exists() and not refresh:
        return load_gains(path), path, True
    gains = gains_for(config.vehicle, config.cost)
    save_gains(path, gains)
    return gains, path, False


def cmd_run(args) -> int:
    config = _load_run_config(args.config)
    maneuver = _resolve_maneuver(args.maneuver)
    overrides = {}
    if args.controller:
        overrides["controller"] = args.controller
    if args.estimator:
        overrides["estimator"] = args.estimator
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        maneuver = replace(maneuver, **overrides)

    gains = None
    if maneuver.controller == "mpc":
        gains, _, _ = _gains_with_cache(config, Path(args.cache_dir))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        trace = run_scenario(maneuver, config, gains=gains)
    except SimulationDiverged as exc:
        print(f"simulation diverged: {exc}", file=sys.stderr)
        return 1
    trace_path = out_dir / f"{maneuver.name}.csv"
    trace.save(trace_path)
    metrics = compute_metrics(trace, kappa_star=optimal_slip(config.tire))
    metrics_path = out_dir / f"{maneuver.name}-metrics.json"
    metrics_path.write_text(json.dumps(metrics.as_dict(), indent=2) + "\n")
    sha = hashlib.sha256(trace_path.read_bytes()).hexdigest()[:16]
    print(f"trace:   {trace_path} (sha256 {sha})")
    print(f"metrics: {metrics_path}")
    for key, value in metrics.as_dict().items():
        print(f"  {key}: {value}")
    return 0


def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for trace_file in args.trace:
        trace = Trace.load(trace_file)
        stem = Path(trace_file).stem
        t = trace["t"]

        fig, axes = plt.subplots(4, 1, figsize=(10, 11), sharex=True)
        axes[0].plot(t, 100 * trace["kappa_l"], label="slip left", lw=0.8)
        axes[0].plot(t, 100 * trace["kappa_r"], label="slip right", lw=0.8)
        axes[0].plot(t, 100 * trace["kappa_ref"], "k--", label="reference", lw=1.0)
        axes[0].set_ylabel("slip [%]")
        axes[0].legend(loc="upper right", fontsize=8)
        axes[1].plot(t, 100 * trace["kappa_hat"], label="optimum estimate")
        axes[1].set_ylabel("estimate [%]")
        axes[1].legend(loc="upper right", fontsize=8)
        axes[2].plot(t, trace["t_motor"], label="motor torque", lw=0.8)
        axes[2].plot(t, trace["driver_torque"], ":", label="driver demand", lw=0.8)
        axes[2].set_ylabel("torque [Nm]")
        axes[2].legend(loc="upper right", fontsize=8)
        axes[3].plot(t, trace["v_x"], label="vehicle speed")
        axes[3].set_ylabel("speed [m/s]")
        axes[3].set_xlabel("time [s]")
        axes[3].legend(loc="upper right", fontsize=8)
        fig.suptitle(f"{trace.maneuver} (seed {trace.seed})")
        ts_path = out_dir / f"{stem}-timeseries.png"
        fig.savefig(ts_path, dpi=130)
        plt.close(fig)
        written.append(ts_path)

        fig, ax = plt.subplots(figsize=(7, 5))
        loads = trace["f_z"]
        ok = loads > 1.0
        for side, marker in (("l", "."), ("r", "x")):
            mu_op = trace[f"fx_{side}"][ok] / loads[ok]
            ax.plot(100 * trace[f"kappa_{side}"][ok], mu_op, marker, ms=2, alpha=0.4,
                    label=f"operating points {side.upper()}")
        ax.set_xlabel("slip [%]")
        ax.set_ylabel("normalized longitudinal force [-]")
        ax.legend(loc="lower right", fontsize=8)
        ax.set_title(f"{trace.maneuver}: operating points")
        op_path = out_dir / f"{stem}-operating-points.png"
        fig.savefig(op_path, dpi=130)
        plt.close(fig)
        written.append(op_path)

    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_gains(args) -> int:
    config = _load_run_config(args.config)
    try:
        gains, path, cached = _gains_with_cache(
            config, Path(args.cache_dir), refresh=args.refresh)
    except IllConditionedCost as exc:
        print(f"rejected configuration: {exc}", file=sys.stderr)
        return 1
    state = "cached" if cached else "computed"
    print(f"{state}: {path}")
    print(f"horizon {gains.horizon}, condition {gains.condition:.3e}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    data_dir = Path(args.data_dir or os.environ.get("SLIPBENCH_DATA_DIR", "./sessions"))
    config = _load_run_config(args.config)
    app = create_app(data_dir, config)
    print(f"serving on http://{args.host}:{args.port} (data dir {data_dir})")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_accept(args) -> int:
    from .acceptance import CRITERIA, run_all

    names = args.only.split(",") if args.only else None
    try:
        results = run_all(names)
    except KeyError as exc:
        print(exc.args[0], file=sys.stderr)
        return 2
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        verdict = "PASS" if r.passed else "FAIL"
        failures += 0 if r.passed else 1
        print(f"{verdict}  {r.name:<{width}}  measured: {r.measured}")
        print(f"      {'':<{width}}  threshold: {r.threshold}")
    print(f"{len(results) - failures}/{len(results)} criteria passed")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slipbench",
        description="slip-control workbench: simulation, tuning and acceptance",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a maneuver and write trace + metrics")
    p_run.add_argument("--maneuver", required=True,
                       help=f"fixture id ({', '.join(FIXTURES)}) or a maneuver file")
    p_run.add_argument("--config", help="configuration file (defaults shipped)")
    p_run.add_argument("--controller", choices=("mpc", "pid"))
    p_run.add_argument("--estimator", choices=("esc", "sliding", "fixed"))
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out", default="./out", help="output directory")
    p_run.add_argument("--cache-dir", default=str(DEFAULT_CACHE_DIR))
    p_run.set_defaults(func=cmd_run)

    p_plot = sub.add_parser("plot", help="render figure analogues from trace CSVs")
    p_plot.add_argument("--trace", nargs="+", required=True)
    p_plot.add_argument("--out", default="./out")
    p_plot.set_defaults(func=cmd_plot)

    p_gains = sub.add_parser("gains", help="precompute and cache controller gains")
    p_gains.add_argument("--config")
    p_gains.add_argument("--cache-dir", default=str(DEFAULT_CACHE_DIR))
    p_gains.add_argument("--refresh", action="store_true",
                         help="recompute even if cached")
    p_gains.set_defaults(func=cmd_gains)

    p_serve = sub.add_parser("serve", help="run the tuning session service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8080)
    p_serve.add_argument("--data-dir",
                         help="session directory (or SLIPBENCH_DATA_DIR)")
    p_serve.add_argument("--config")
    p_serve.set_defaults(func=cmd_serve)

    p_accept = sub.add_parser("accept", help="run the acceptance criteria")
    p_accept.add_argument("--only", help="comma-separated criterion names")
    p_accept.set_defaults(func=cmd_accept)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
