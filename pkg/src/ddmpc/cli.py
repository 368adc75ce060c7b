"""Command-line interface.

Subcommands:
    run             execute an experiment config (file or built-in name)
    sweep           grid-sweep one controller parameter
    check-pe        persistence-of-excitation report for a data CSV
    validate-data   test whether one record is a trajectory of another
    demo-lti-nominal, demo-lti-robust, demo-nonlinear
                    run the built-in demonstration experiments

Exit codes: 0 success, 2 configuration error, 3 controller
infeasibility, 4 IO error.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional, Tuple

import numpy as np

from .harness import (ConfigError, demo_config, export_csv,
                      export_sweep_csv, load_config, run_experiment, sweep,
                      SWEEPABLE)
from .hankel import persistence_order_check, validate_trajectory

DEMO_NAMES = ("nonlinear", "nonlinear-setpoint-change", "lti-nominal",
              "lti-robust")


def _resolve_config(ref: str):
    if os.path.exists(ref):
        return load_config(ref)
    if ref in DEMO_NAMES:
        return demo_config(ref)
    raise ConfigError(
        f"config {ref!r} is neither a file nor a built-in name "
        f"(built-ins: {', '.join(DEMO_NAMES)})")


def _read_data_csv(path: str) -> Tuple[np.ndarray, np.ndarray]:
    """Read u*/y* columns from a CSV with a header row."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    u_cols = [i for i, name in enumerate(header)
              if name.startswith("u") and name[1:].isdigit()]
    y_cols = [i for i, name in enumerate(header)
              if name.startswith("y") and name[1:].isdigit()]
    if not u_cols:
        raise ConfigError(f"{path}: no input columns (u1, u2, ...) found")
    u = data[:, u_cols]
    y = data[:, y_cols] if y_cols else np.zeros((data.shape[0], 0))
    return u, y


def _print_summary(log, out_path: str):
    s = log.summary
    w = s.get("cost_window", ["?", "?"])
    print(f"steps simulated: {len(log)}")
    print(f"closed-loop cost J over [{w[0]}, {w[1]}]: {s['J']:.6g}")
    print(f"steady-state error (mean max-norm, last 50 steps): "
          f"{s['steady_error']:.6g}")
    print(f"converged: {'yes' if s['converged'] else 'no'}")
    if s.get("infeasible_at") is not None:
        print(f"controller infeasible at step {s['infeasible_at']}: "
              f"{s.get('infeasible_msg', '')}")
    print(f"log written to {out_path}")


def _run_and_report(cfg, seed: Optional[int], out: str) -> int:
    log = run_experiment(cfg, seed=seed)
    export_csv(log, out)
    _print_summary(log, out)
    return 3 if log.summary.get("infeasible_at") is not None else 0


def _cmd_run(args) -> int:
    cfg = _resolve_config(args.config)
    return _run_and_report(cfg, args.seed, args.out or "run_log.csv")


def _cmd_demo(name: str):
    def handler(args) -> int:
        cfg = demo_config(name)
        out = args.out or f"demo_{name.replace('-', '_')}_log.csv"
        return _run_and_report(cfg, args.seed, out)
    return handler


def _cmd_sweep(args) -> int:
    cfg = _resolve_config(args.config) if args.config \
        else demo_config("nonlinear")
    grid = [float(v) for v in args.grid.split(",") if v]
    seeds = [int(v) for v in args.seeds.split(",") if v]
    result = sweep(cfg, args.param, grid, seeds=seeds, jobs=args.jobs)
    out = args.out or f"sweep_{args.param}.csv"
    export_sweep_csv(result, out)
    print(f"{'value':>12}  {'median J':>12}  converged")
    for agg in result.aggregated:
        print(f"{agg['value']:>12.6g}  {agg['median_J']:>12.6g}  "
              f"{'yes' if agg['all_converged'] else 'no'}")
    good = result.good_values()
    print(f"values with median J <= 1.5e5: "
          f"{', '.join(f'{v:g}' for v in good) if good else 'none'}")
    print(f"rows written to {out}")
    return 0


def _cmd_check_pe(args) -> int:
    u, _ = _read_data_csv(args.data)
    report = persistence_order_check(u, args.order)
    print(f"samples: {u.shape[0]}, input channels: {u.shape[1]}")
    print(f"order checked: {report.order}")
    print(f"rank: {report.computed_rank} of {report.required_rank} "
          f"required")
    print(f"smallest retained singular value: "
          f"{report.smallest_retained_singular_value:.6g}")
    print(f"persistently exciting: {'yes' if report.is_pe else 'no'}")
    if report.reason:
        print(f"note: {report.reason}")
    return 0


def _cmd_validate_data(args) -> int:
    u_data, y_data = _read_data_csv(args.data)
    u_test, y_test = _read_data_csv(args.test)
    if y_data.shape[1] == 0 or y_test.shape[1] == 0:
        raise ConfigError("both files need y columns for validation")
    result = validate_trajectory(u_data, y_data, u_test, y_test,
                                 tolerance=args.tolerance)
    print(f"test length: {u_test.shape[0]} steps")
    print(f"relative residual: {result.residual:.6g}")
    print(f"is a trajectory of the data-generating system: "
          f"{'yes' if result.is_trajectory else 'no'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddmpc",
        description="Data-driven MPC experiments: closed-loop runs, "
                    "parameter sweeps, and data diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config")
    run_p.add_argument("--config", required=True,
                       help="config file path or built-in name")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", default=None, help="log CSV path")
    run_p.set_defaults(func=_cmd_run)

    sweep_p = sub.add_parser("sweep", help="grid-sweep one parameter")
    sweep_p.add_argument("--config", default=None)
    sweep_p.add_argument("--param", required=True, choices=SWEEPABLE)
    sweep_p.add_argument("--grid", required=True,
                         help="comma-separated values")
    sweep_p.add_argument("--seeds", default="0,1,2",
                         help="comma-separated seeds per grid point")
    sweep_p.add_argument("--jobs", type=int, default=1)
    sweep_p.add_argument("--out", default=None, help="results CSV path")
    sweep_p.set_defaults(func=_cmd_sweep)

    pe_p = sub.add_parser("check-pe",
                          help="persistence-of-excitation report")
    pe_p.add_argument("--data", required=True, help="CSV with u* columns")
    pe_p.add_argument("--order", type=int, required=True)
    pe_p.set_defaults(func=_cmd_check_pe)

    val_p = sub.add_parser(
        "validate-data",
        help="check a test record against a data record")
    val_p.add_argument("--data", required=True)
    val_p.add_argument("--test", required=True)
    val_p.add_argument("--tolerance", type=float, default=1e-6)
    val_p.set_defaults(func=_cmd_validate_data)

    for name in ("lti-nominal", "lti-robust", "nonlinear"):
        demo_p = sub.add_parser(f"demo-{name}",
                                help=f"run the built-in {name} experiment")
        demo_p.add_argument("--seed", type=int, default=None)
        demo_p.add_argument("--out", default=None)
        demo_p.set_defaults(func=_cmd_demo(name))

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
