"""CSV serialization of simulation traces and gnuplot scripts for them."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .sim import SimTrace


def trace_header(n: int, m: int) -> list:
    return (["t"] + [f"x{i}" for i in range(1, n + 1)] + [f"y{i}" for i in range(1, m + 1)]
            + [f"u{i}" for i in range(1, m + 1)] + ["lambda", "lambda_dot"]
            + [f"H{i}" for i in range(1, m + 1)] + ["mode", "sat"])


def _num(v: float) -> str:
    return "%.17g" % v


def emit_csv(trace: SimTrace, path) -> None:
    """Write ``trace`` with 17 significant digits; ``sat`` is 0/1, ``mode`` F/C."""
    if len(trace) == 0:
        raise ValueError("cannot emit an empty trace")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_header(trace.n, trace.m))
        for k in range(len(trace)):
            nums = np.concatenate([[trace.t[k]], trace.x[k], trace.y[k], trace.u[k],
                                   [trace.lam[k], trace.lam_dot[k]], trace.H[k]])
            w.writerow([_num(v) for v in nums] + [trace.mode[k], int(trace.sat[k])])


def read_csv(path) -> SimTrace:
    """Inverse of ``emit_csv``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("x"))
    m = sum(1 for h in header if h.startswith("y"))
    if header != trace_header(n, m):
        raise ValueError(f"{path}: unexpected header")
    nums = np.array([[float(v) for v in r[:-2]] for r in body]).reshape(len(body), -1)
    c = 1
    x = nums[:, c:c + n]; c += n
    y = nums[:, c:c + m]; c += m
    u = nums[:, c:c + m]; c += m
    lam, lam_dot = nums[:, c], nums[:, c + 1]; c += 2
    H = nums[:, c:c + m]
    return SimTrace(t=nums[:, 0], x=x, y=y, u=u, lam=lam, lam_dot=lam_dot, H=H,
                    mode=np.array([r[-2] for r in body], dtype="<U1"),
                    sat=np.array([r[-1] == "1" for r in body], dtype=bool))


def plot_script(csv_path, n: int, m: int, output: str = "") -> str:
    """gnuplot script drawing outputs, inputs, lambda and H against time."""
    csv_path = Path(csv_path)
    cols = {name: i + 1 for i, name in enumerate(trace_header(n, m))}
    target = output or csv_path.with_suffix(".png").name
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 1000,1000",
        f"set output '{target}'",
        "set multiplot layout 4,1",
        "set xlabel 't'",
    ]

    def panel(title, names):
        series = ", ".join(f"'{csv_path.name}' using 1:{cols[nm]} with lines" for nm in names)
        return [f"set title '{title}'", f"plot {series}"]

    lines += panel("outputs", [f"y{i}" for i in range(1, m + 1)])
    lines += panel("inputs", [f"u{i}" for i in range(1, m + 1)])
    lines += panel("continuation parameter", ["lambda", "lambda_dot"])
    lines += panel("homotopy", [f"H{i}" for i in range(1, m + 1)])
    lines.append("unset multiplot")
    return "\n".join(lines) + "\n"


def header_shape(csv_path) -> tuple:
    """``(n, m)`` read from the header of a trace file."""
    with open(csv_path, newline="") as fh:
        header = next(csv.reader(fh))
    n = sum(1 for h in header if h.startswith("x"))
    m = sum(1 for h in header if h.startswith("y"))
    return n, m
