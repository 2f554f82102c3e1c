"""Acceptance checks shared by ``homcontrol check`` and the test suite.

Each ``criterion_N`` returns a :class:`CriterionResult`; ``run_all`` runs
them in order.  Simulations of bundled scenarios are cached per process so
criteria that inspect the same run do not repeat it.
"""

from __future__ import annotations

import dataclasses
import filecmp
import math
import tempfile
import time
from functools import lru_cache
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .homotopy import (HSystemMatrices, continuation_control, equivalent_alpha,
                       h_feedback_linearize, tangent_parts)
from .integrators import rk4_step
from .linalg import augmented_tangent, oriented_nullspace_tangent, pseudoinverse
from .plant import lie_derivative
from .plants import PLANTS, build_plant
from .scenario import load_bundled
from .sim import build_loop, integrate_segment, run_closed_loop
from .traceio import emit_csv

SEED = 20240607


class CriterionResult(NamedTuple):
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number:2d}. {self.title}: {self.detail} ({self.seconds:.2f} s)"


def _timed(number: int, title: str, body: Callable[[], tuple]) -> CriterionResult:
    t0 = time.perf_counter()
    passed, detail = body()
    return CriterionResult(number, title, bool(passed), detail, time.perf_counter() - t0)


@lru_cache(maxsize=None)
def bundled_trace(name: str, mode: str = "") -> tuple:
    """``(trace, seconds)`` of a bundled scenario, optionally with another controller mode."""
    sc = load_bundled(name)
    if mode:
        sc = dataclasses.replace(sc, mode=mode)
    t0 = time.perf_counter()
    tr = run_closed_loop(sc)
    return tr, time.perf_counter() - t0


# -- 1 ------------------------------------------------------------------------

def criterion_1(count: int = 1000) -> CriterionResult:
    def body():
        rng = np.random.default_rng(SEED)
        worst = dict(null=0.0, unit=0.0, aug=0.0)
        min_det = np.inf
        t0 = time.perf_counter()
        for _ in range(count):
            m = int(rng.integers(1, 7))
            A = rng.normal(size=(m, m + 1))
            B = rng.normal(size=m)
            tau = oriented_nullspace_tangent(A)
            norm_a = np.linalg.norm(A, 2)
            worst["null"] = max(worst["null"], np.linalg.norm(A @ tau) / norm_a)
            worst["unit"] = max(worst["unit"], abs(np.linalg.norm(tau) - 1.0))
            min_det = min(min_det, np.linalg.det(np.vstack([A, tau])))
            sol = augmented_tangent(A, B, alpha=float(rng.uniform(0.1, 10.0)))
            comb = sol.combined
            scale = norm_a * np.linalg.norm(comb) + np.linalg.norm(B)
            worst["aug"] = max(worst["aug"], np.linalg.norm(A @ comb - B) / scale)
        elapsed = time.perf_counter() - t0
        ok = (worst["null"] <= 1e-8 and worst["unit"] <= 1e-10 and min_det > 0.0
              and worst["aug"] <= 1e-8 and elapsed < 5.0)
        return ok, (f"max |A tau|/|A|={worst['null']:.1e}, max ||tau|-1|={worst['unit']:.1e}, "
                    f"min det={min_det:.1e}, max residual={worst['aug']:.1e}, {elapsed:.2f} s")
    return _timed(1, "oriented tangent on random systems", body)


# -- 2 ------------------------------------------------------------------------

def criterion_2(count: int = 1000) -> CriterionResult:
    def body():
        rng = np.random.default_rng(SEED + 2)
        worst = 0.0
        deficient = 0
        t0 = time.perf_counter()
        for _ in range(count):
            rows, cols = (int(v) for v in rng.integers(1, 8, size=2))
            rank = int(rng.integers(0, min(rows, cols) + 1))
            A = rng.normal(size=(rows, rank)) @ rng.normal(size=(rank, cols))
            deficient += rank < min(rows, cols)
            X = pseudoinverse(A)
            na, nx = max(np.linalg.norm(A), 1e-300), max(np.linalg.norm(X), 1e-300)
            if rank == 0:
                errs = [np.linalg.norm(X)]
            else:
                errs = [np.linalg.norm(A @ X @ A - A) / na,
                        np.linalg.norm(X @ A @ X - X) / nx,
                        np.linalg.norm((A @ X).T - A @ X) / max(np.linalg.norm(A @ X), 1e-300),
                        np.linalg.norm((X @ A).T - X @ A) / max(np.linalg.norm(X @ A), 1e-300)]
            worst = max(worst, *errs)
        elapsed = time.perf_counter() - t0
        return (worst <= 1e-8 and elapsed < 5.0,
                f"max axiom error={worst:.1e} over {count} matrices "
                f"({deficient} rank-deficient), {elapsed:.2f} s")
    return _timed(2, "Moore-Penrose axioms", body)


# -- 3 ------------------------------------------------------------------------

def criterion_3(points: int = 100) -> CriterionResult:
    def body():
        rng = np.random.default_rng(SEED + 3)
        parts = []
        ok = True
        for plant_id in PLANTS:
            sys = build_plant(plant_id)
            worst = 0.0
            for x in sys.box.sample(rng, points):
                for j, r in enumerate(sys.rel_degrees):
                    for order in range(1, r + 1):
                        for which in ["f"] + list(range(sys.m)):
                            a = lie_derivative(sys, which, j, x, order, use_hook=True)
                            b = lie_derivative(sys, which, j, x, order, use_hook=False)
                            scale = max(abs(a), abs(b))
                            if scale > 0.0:
                                worst = max(worst, abs(a - b) / scale)
            ok &= worst <= 1e-5
            parts.append(f"{plant_id} {worst:.1e}")
        return ok, "max relative error: " + ", ".join(parts)
    return _timed(3, "Lie derivatives, analytic vs finite differences", body)


# -- 4 ------------------------------------------------------------------------

def criterion_4() -> CriterionResult:
    def body():
        tr, _ = bundled_trace("scalar_cubic")
        fb, _ = bundled_trace("scalar_cubic", "fblin")
        y = tr.y[:, 0]
        dy = np.diff(y)
        sign = np.sign(dy[np.abs(dy) > 1e-12])
        turns = np.flatnonzero(np.diff(sign) != 0) + 1
        # Turning points of y in trace order, paired with the analytic extrema.
        extrema = [y[np.flatnonzero(np.abs(dy) > 1e-12)[k]] for k in turns]
        h_lo = 1.0 - 2.0 / (3.0 * math.sqrt(3.0))   # h(1/sqrt3)
        h_hi = 1.0 + 2.0 / (3.0 * math.sqrt(3.0))   # h(-1/sqrt3)
        order_ok = (len(extrema) == 2 and abs(extrema[0] - h_lo) < 1e-2
                    and abs(extrema[1] - h_hi) < 1e-2)
        converged = tr.ok and abs(y[-1]) < 1e-2
        demand = float(np.nanmax(fb.extras["u_demand"]))
        fb_fails = demand > load_bundled("scalar_cubic").sim.u_max and abs(fb.y[-1, 0]) >= 1e-2
        detail = (f"hybrid |y(T)|={abs(y[-1]):.1e}, turning points "
                  f"{', '.join(f'{e:.4f}' for e in extrema)} (expected {h_lo:.4f}, {h_hi:.4f}); "
                  f"plain linearization demands |u|={demand:.3g} and stalls at y={fb.y[-1, 0]:.4f}")
        return converged and order_ok and fb_fails, detail
    return _timed(4, "scalar example through both extrema", body)


# -- 5 ------------------------------------------------------------------------

def criterion_5() -> CriterionResult:
    def body():
        sc = load_bundled("mimo_toy")
        tr, _ = bundled_trace("mimo_toy")
        reached = np.all(np.abs(tr.y) < 1e-2, axis=1)
        t_reach = tr.t[np.argmax(reached)] if reached.any() else math.inf
        u_peak = float(np.max(np.abs(tr.u)))
        h_peak = float(np.max(np.linalg.norm(tr.H, axis=1)))
        ok = (tr.ok and bool(reached[-1]) and u_peak <= sc.sim.u_max + 1e-9 and h_peak < 1e-3
              and sc.eta_init == "manifold")
        return ok, (f"|y| < 1e-2 from t={t_reach:.2f} s, final |y|={np.abs(tr.y[-1]).max():.1e}, "
                    f"max|u|={u_peak:.6g}, max||H||={h_peak:.1e}")
    return _timed(5, "MIMO toy under input bound", body)


# -- 6, 7 ---------------------------------------------------------------------

def criterion_6() -> CriterionResult:
    def body():
        sc = load_bundled("motor")
        tr, seconds = bundled_trace("motor")
        window = (tr.t >= 4.0) & (tr.t <= 6.0)
        speed_ref = sc.setpoints[1].values[-1]
        flux_ref = math.sqrt(sc.setpoints[0].values[-1])
        speed = tr.y[window, 1]
        flux = tr.x[window, 1]
        speed_err = float(np.max(np.abs(speed - speed_ref)) / speed_ref)
        flux_err = float(np.max(np.abs(flux - flux_ref)) / flux_ref)
        ok = tr.ok and window.any() and speed_err <= 5e-3 and flux_err <= 2e-2 and seconds < 60.0
        return ok, (f"speed error {100 * speed_err:.3f}% (mean "
                    f"{100 * np.mean(np.abs(speed - speed_ref)) / speed_ref:.3f}%), "
                    f"flux error {100 * flux_err:.3f}%, runtime {seconds:.1f} s")
    return _timed(6, "motor speed and flux regulation", body)


def criterion_7() -> CriterionResult:
    def body():
        sc = load_bundled("motor")
        tr, _ = bundled_trace("motor")
        rows = np.column_stack([tr.x, tr.y, tr.u, tr.lam, tr.lam_dot, tr.H])
        finite = bool(np.all(np.isfinite(rows)))
        i_ref = np.column_stack([tr.extras["i_sd_ref"], tr.extras["i_sq_ref"]])
        ref_peak = float(np.max(np.abs(i_ref)))
        cur_peak = float(np.max(np.abs(tr.x[:, 2:4])))
        ok = (tr.ok and finite and sc.x0[1] == 0.0 and tr.x[0, 1] == 0.0
              and ref_peak <= sc.sim.u_max + 1e-9 and cur_peak <= 1.5 * sc.sim.u_max)
        return ok, (f"start phi_r={tr.x[0, 1]:g}, {len(tr)} finite rows={finite}, "
                    f"max|i_ref|={ref_peak:.3g} A, max|i|={cur_peak:.3g} A, "
                    f"max|V|={np.max(np.abs(tr.u)):.3g} V")
    return _timed(7, "motor start from zero flux", body)


# -- 8 ------------------------------------------------------------------------

def criterion_8(count: int = 500) -> CriterionResult:
    def body():
        rng = np.random.default_rng(SEED + 8)
        worst = 0.0
        for _ in range(count):
            m = int(rng.integers(1, 5))
            A1 = rng.normal(size=(m, m)) + 3.0 * np.eye(m)
            hm = HSystemMatrices(A1=A1, A2=rng.normal(size=m), Bv=rng.normal(size=m))
            _, l_hat, _, _ = tangent_parts(hm)
            s = float(np.sign(l_hat))
            u_fb = h_feedback_linearize(hm, s, np.zeros(m))
            alpha = equivalent_alpha(hm)
            if alpha <= 0.0:
                # Only positive speeds are admissible for continuation.
                continue
            u_c, top = continuation_control(hm, alpha)
            err = max(np.max(np.abs(u_c - u_fb)) / max(1.0, np.max(np.abs(u_fb))), abs(top - s))
            worst = max(worst, err)
        return worst <= 1e-8, f"max deviation {worst:.1e} over {count} random H-systems"
    return _timed(8, "linearization equals scaled continuation", body)


# -- 9 ------------------------------------------------------------------------

def _rk4_exp_errors():
    f = lambda t, x: x
    e1 = abs(rk4_step(f, np.array([1.0]), 0.0, 0.1)[0] - math.exp(0.1))
    e2 = abs(rk4_step(f, np.array([1.0]), 0.0, 0.05)[0] - math.exp(0.05))
    return e1, e2


def motor_order_ratio(t_start: float = 1.2, window: float = 0.3,
                      dts=(4e-4, 2e-4, 1e-4)) -> tuple:
    """Deviation ratio of successive ``dt`` halvings on a noiseless motor segment."""
    sc = load_bundled("motor")
    sc = dataclasses.replace(sc, sim=dataclasses.replace(sc.sim, noise_variance=0.0))
    loop = build_loop(sc)
    z0, st0 = loop.initial()
    z0, st0 = integrate_segment(loop, z0, st0, 0.0, t_start, sc.sim.dt)
    ends, modes = [], []
    for dt in dts:
        z, st = integrate_segment(loop, z0, st0, t_start, t_start + window, dt)
        ends.append(z)
        modes.append(st.mode)
    d = [np.max(np.abs(a - b)) for a, b in zip(ends, ends[1:])]
    no_switch = all(m is st0.mode for m in modes)
    return d[0] / d[1], d, no_switch


def criterion_9() -> CriterionResult:
    def body():
        e1, e2 = _rk4_exp_errors()
        ratio, d, no_switch = motor_order_ratio()
        ok = e1 < 1e-7 and e1 / e2 > 16.0 and ratio >= 8.0 and no_switch
        return ok, (f"exp step error {e1:.2e} (halved: x{e1 / e2:.1f}); motor segment "
                    f"deviations {d[0]:.2e} -> {d[1]:.2e}, ratio {ratio:.1f}")
    return _timed(9, "fourth-order convergence", body)


# -- 10 -----------------------------------------------------------------------

def criterion_10(t_end: float = 0.5, seed: int = 42) -> CriterionResult:
    def body():
        sc = load_bundled("motor").with_seed(seed)
        sc = dataclasses.replace(sc, sim=dataclasses.replace(sc.sim, t_end=t_end))
        with tempfile.TemporaryDirectory() as tmp:
            paths = [Path(tmp) / f"run{k}.csv" for k in range(2)]
            for path in paths:
                emit_csv(run_closed_loop(sc), path)
            same = filecmp.cmp(paths[0], paths[1], shallow=False)
            size = paths[0].stat().st_size
        return same, f"two motor runs with seed {seed} ({t_end} s, noisy): identical={same}, {size} bytes"
    return _timed(10, "determinism", body)


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10)


def run_all(report: Callable[[CriterionResult], None] = lambda r: None) -> list:
    results = []
    for crit in CRITERIA:
        res = crit()
        report(res)
        results.append(res)
    return results
