"""Command-line entry point.

Exit codes: 0 success, 1 simulation or acceptance failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .plants import PLANTS
from .scenario import (ParseError, ValidationError, bundled_scenarios, parse_scenario,
                       resolve_seed)
from .sim import run_closed_loop
from .traceio import emit_csv, header_shape, plot_script

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _scenario_path(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    bundled = bundled_scenarios()
    if arg in bundled:
        return bundled[arg]
    raise FileNotFoundError(f"no scenario file or bundled scenario named {arg!r}")


def summarize(trace) -> str:
    modes = "".join(trace.mode)
    lines = [
        f"status: {trace.status}" + (f" ({trace.diagnostic})" if trace.diagnostic else ""),
        f"rows: {len(trace)}, t_end: {trace.t[-1]:.6g}",
        "final y: " + ", ".join(f"{v:.6g}" for v in trace.y[-1]),
        f"max |u|: {np.max(np.abs(trace.u)):.6g}",
        f"max ||H||: {np.max(np.linalg.norm(trace.H, axis=1)):.3e}",
        f"final lambda: {trace.lam[-1]:.6g}",
        f"continuation rows: {modes.count('C')}, saturated rows: {int(trace.sat.sum())}",
    ]
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    try:
        path = _scenario_path(args.scenario)
        sc = parse_scenario(path)
    except (ParseError, ValidationError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sc = sc.with_seed(resolve_seed(sc.sim.rng_seed, args.seed))
    trace = run_closed_loop(sc)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{path.stem}.csv"
    emit_csv(trace, csv_path)
    print(f"trace: {csv_path}")
    print(summarize(trace))
    if not trace.ok:
        print(f"simulation failed: {trace.diagnostic}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_list_plants(args) -> int:
    for plant_id in PLANTS:
        print(plant_id)
    return EXIT_OK


def cmd_check(args) -> int:
    from .acceptance import run_all
    results = run_all(lambda r: print(r.line(), flush=True))
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_plot(args) -> int:
    csv_path = Path(args.trace)
    try:
        n, m = header_shape(csv_path)
    except (OSError, StopIteration) as exc:
        print(f"cannot read {csv_path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    script = plot_script(csv_path, n, m)
    out = Path(args.out) if args.out else csv_path.with_suffix(".gp")
    out.write_text(script)
    print(f"plot script: {out} (run: gnuplot {out.name} in {csv_path.parent})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homcontrol",
                                     description="Homotopy continuation control simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write its trace as CSV")
    p.add_argument("scenario", help="scenario file, or the name of a bundled scenario")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=int, default=None,
                   help="noise seed; overrides HOMOTOPY_FBLIN_SEED and the file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("list-plants", help="list the built-in plants")
    p.set_defaults(func=cmd_list_plants)

    p = sub.add_parser("check", help="run the acceptance suite")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("plot", help="write a gnuplot script for a trace")
    p.add_argument("trace", help="CSV trace written by simulate")
    p.add_argument("--out", default=None, help="script path (default: trace with .gp suffix)")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
