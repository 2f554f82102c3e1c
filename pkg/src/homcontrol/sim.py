"""Fixed-step closed-loop simulation.

A closed loop is any object with

* ``initial() -> (z0, hs0)``: augmented initial state and controller state;
* ``sample(t, z, hs, rng) -> Sample``: controller evaluation at a step
  boundary, where discrete decisions (mode switches, noise draws) are made;
* ``rates(t, z, hs) -> ndarray``: right-hand side at intermediate RK4 stages
  with the discrete state frozen;
* ``post_step(z) -> z``: clamps applied after each step;
* ``n``, ``m``: plant state and output dimensions.

The controller is part of the right-hand side, so the continuous parts of the
loop are integrated to fourth order; only mode switches and noise are sampled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import NamedTuple, Optional

import numpy as np

from .homotopy import (LAMBDA_SLACK, BifurcationPoint, HomotopyState, Mode,
                       ReferenceLinearSystem, blend_h_system, capped_continuation_control,
                       h_derivatives, hybrid_step, landing_cap, pinned_lambda_top)
from .integrators import NonFiniteState, gaussian_noise, rk4_step
from .linalg import DEFAULT_RANK_TOL, RankDeficient, is_invertible, pseudoinverse
from .plant import AffineSystem, SingularDecoupling, decoupling_matrix, output_derivatives


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-4
    t_end: float = 1.0
    noise_variance: float = 0.0
    rng_seed: int = 0
    u_max: float = 20.0
    alpha: float = 10.0
    rank_tol: float = DEFAULT_RANK_TOL

    def problems(self) -> list:
        out = []
        if not self.dt > 0.0:
            out.append("dt must be > 0")
        if not self.t_end > self.dt:
            out.append("t_end must be > dt")
        if not self.noise_variance >= 0.0:
            out.append("noise_variance must be >= 0")
        if not self.u_max > 0.0:
            out.append("u_max must be > 0")
        if not self.alpha > 0.0:
            out.append("alpha must be > 0")
        if not 0.0 < self.rank_tol < 1.0:
            out.append("rank_tol must be in (0, 1)")
        return out

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


class Sample(NamedTuple):
    rates: np.ndarray
    state: HomotopyState
    y: np.ndarray
    u: np.ndarray
    lam: float
    lam_dot: float
    H: np.ndarray
    mode: str
    sat: bool
    extras: dict


@dataclass
class SimTrace:
    """Time-indexed record of a run; ``mode`` holds ``"F"``/``"C"`` per row."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    lam_dot: np.ndarray
    H: np.ndarray
    mode: np.ndarray
    sat: np.ndarray
    status: str = "ok"
    diagnostic: str = ""
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.size

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.y.shape[1]

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def simulate(loop, cfg: SimConfig) -> SimTrace:
    """Run ``loop`` on the uniform grid ``0, dt, ..., t_end``."""
    bad = cfg.problems()
    if bad:
        raise ValueError("; ".join(bad))
    rng = np.random.default_rng(cfg.rng_seed)
    steps = cfg.steps
    rows = steps + 1
    n, m = loop.n, loop.m
    t_arr = np.arange(rows) * cfg.dt
    X = np.empty((rows, n))
    Y = np.empty((rows, m))
    U = np.empty((rows, m))
    LAM = np.empty(rows)
    LAMD = np.empty(rows)
    Hs = np.empty((rows, m))
    MODE = np.empty(rows, dtype="<U1")
    SAT = np.zeros(rows, dtype=bool)
    extras: dict = {}

    z, hs = loop.initial()
    status, diagnostic = "ok", ""
    done = 0
    for k in range(rows):
        t = t_arr[k]
        try:
            smp = loop.sample(t, z, hs, rng)
            values = (smp.y, smp.u, smp.lam, smp.lam_dot, smp.H)
            if not (np.all(np.isfinite(z)) and all(np.all(np.isfinite(v)) for v in values)):
                raise NonFiniteState(f"non-finite state or output at t={t:.6g}")
        except (NonFiniteState, RankDeficient, SingularDecoupling) as exc:
            status = "failed"
            diagnostic = (f"t={t:.6g}: {type(exc).__name__}: {exc}; "
                          f"last mode={hs.mode.value}, lambda={hs.lam:.6g}")
            break
        X[k] = z[:n]
        Y[k], U[k], LAM[k], LAMD[k], Hs[k] = values
        MODE[k] = smp.mode
        SAT[k] = smp.sat
        for key, val in smp.extras.items():
            extras.setdefault(key, np.full(rows, np.nan))[k] = val
        done = k + 1
        if k == steps:
            break
        hs = smp.state
        cached = [smp.rates]

        def deriv(tt, zz, _hs=hs):
            # Stage 1 is the boundary sample already evaluated above.
            if cached:
                return cached.pop()
            return loop.rates(tt, zz, _hs)

        try:
            z = loop.post_step(rk4_step(deriv, z, t, cfg.dt))
        except (NonFiniteState, RankDeficient, SingularDecoupling) as exc:
            status = "failed"
            diagnostic = (f"t={t:.6g}: {type(exc).__name__}: {exc}; "
                          f"last mode={hs.mode.value}, lambda={hs.lam:.6g}")
            break

    sl = slice(0, done)
    return SimTrace(t=t_arr[sl], x=X[sl], y=Y[sl], u=U[sl], lam=LAM[sl], lam_dot=LAMD[sl],
                    H=Hs[sl], mode=MODE[sl], sat=SAT[sl], status=status,
                    diagnostic=diagnostic, extras={k: v[sl] for k, v in extras.items()})


def integrate_segment(loop, z, state, t0: float, t1: float, dt: float,
                      rng: Optional[np.random.Generator] = None) -> tuple:
    """Advance ``(z, state)`` from ``t0`` to ``t1`` without recording a trace."""
    rng = rng if rng is not None else np.random.default_rng(0)
    steps = int(round((t1 - t0) / dt))
    z = np.array(z, dtype=float)
    for k in range(steps):
        t = t0 + k * dt
        smp = loop.sample(t, z, state, rng)
        state = smp.state
        cached = [smp.rates]

        def deriv(tt, zz, _state=state):
            if cached:
                return cached.pop()
            return loop.rates(tt, zz, _state)

        z = loop.post_step(rk4_step(deriv, z, t, dt))
    return z, state


def chain_gains(r: int, rate: float) -> np.ndarray:
    """Coefficients ``c_k`` of ``(s + rate)^r = s^r + sum_k c_k s^k``."""
    return np.array([comb(r, k) * rate ** (r - k) for k in range(r)])


class AffineLoop:
    """Closed loop of a generic affine plant under one of the three control laws."""

    def __init__(self, sys: AffineSystem, mode: str, cfg: SimConfig, x0, setpoints,
                 h_gain: float = 5.0, landing_rate: float = 2.0, lambda0: float = 0.0,
                 lambda_dot0: float = 1.0, eta_init: str = "manifold"):
        if mode not in ("fblin", "continuation", "hybrid"):
            raise ValueError(f"unknown controller mode {mode!r}")
        self.sys = sys
        self.mode = mode
        self.cfg = cfg
        self.x0 = np.asarray(x0, dtype=float)
        if self.x0.shape != (sys.n,):
            raise ValueError(f"x0 must have length {sys.n}")
        self.setpoints = list(setpoints)
        if len(self.setpoints) != sys.m:
            raise ValueError(f"need {sys.m} setpoint profiles")
        self.h_gain = h_gain
        self.landing_rate = landing_rate
        self.lambda0 = lambda0
        self.lambda_dot0 = lambda_dot0
        self.eta_init = eta_init
        self.n = sys.n
        self.m = sys.m
        self._gains = [chain_gains(r, h_gain) for r in sys.rel_degrees]

    # -- layout: z = [x | eta chains | lambda chain] --
    def _split(self, z):
        n = self.n
        x = z[:n]
        if self.mode == "fblin":
            return x, None, None
        ref = ReferenceLinearSystem.from_vector(z[n:2 * n], self.sys.rel_degrees)
        return x, ref, z[2 * n:]

    def _setpoint(self, t) -> np.ndarray:
        sp = np.zeros((self.m, self.sys.r_max + 1))
        for i, prof in enumerate(self.setpoints):
            sp[i, 0] = prof.value(t)
            sp[i, 1] = prof.slope(t)
        return sp

    def _errors(self, t, x):
        sp = self._setpoint(t)
        A_dec, B_dec = decoupling_matrix(self.sys, x)
        y_derivs = []
        for i, r in enumerate(self.sys.rel_degrees):
            yd = output_derivatives(self.sys, x, i, r - 1) - sp[i, :r]
            B_dec[i] -= sp[i, r]
            y_derivs.append(yd)
        return y_derivs, A_dec, B_dec

    def initial(self):
        r_max = self.sys.r_max
        lam = np.zeros(r_max)
        lam[0] = self.lambda0
        if r_max > 1:
            lam[1] = self.lambda_dot0
        hs = HomotopyState(lambda_derivs=lam, alpha=self.cfg.alpha)
        if self.mode == "fblin":
            return self.x0.copy(), hs
        y_derivs, _, _ = self._errors(0.0, self.x0)
        if self.eta_init == "manifold":
            ref = ReferenceLinearSystem.on_manifold(y_derivs, lam)
        elif self.eta_init == "output":
            ref = ReferenceLinearSystem.matching_output(y_derivs)
        else:
            raise ValueError(f"unknown eta_init {self.eta_init!r}")
        return np.concatenate([self.x0, ref.as_vector(), lam]), hs

    def _fblin(self, t, x):
        y_derivs, A, B = self._errors(t, x)
        v = np.array([-g @ yd for g, yd in zip(self._gains, y_derivs)])
        if is_invertible(A, self.cfg.rank_tol):
            u = np.linalg.solve(A, v - B)
        else:
            u = pseudoinverse(A, self.cfg.rank_tol) @ (v - B)
        u_max = self.cfg.u_max
        demand = float(np.max(np.abs(u))) if np.all(np.isfinite(u)) else np.inf
        u = np.clip(np.nan_to_num(u, posinf=u_max, neginf=-u_max), -u_max, u_max)
        return u, demand > u_max, y_derivs, demand

    def _evaluate(self, t, z, hs, switching):
        x, ref, lam = self._split(z)
        if self.mode == "fblin":
            u, sat, y_derivs, demand = self._fblin(t, x)
            H = np.array([yd[0] for yd in y_derivs])
            self._demand = demand
            return self.sys.rhs(x, u), hs, u, 1.0, 0.0, H, sat
        hs_now = HomotopyState(lambda_derivs=lam, s=hs.s, mode=hs.mode, alpha=hs.alpha)
        y_derivs, A_dec, B_dec = self._errors(t, x)
        hm = blend_h_system(lam, ref.chains, y_derivs, self.sys.rel_degrees, A_dec, B_dec)
        pin = pinned_lambda_top(hs_now, self.landing_rate)
        if self.mode == "hybrid":
            hd = h_derivatives(ref, y_derivs, lam)
            v = np.array([-g @ d for g, d in zip(self._gains, hd)])
            act = hybrid_step(hm, hs_now, v, self.cfg.u_max, self.cfg.rank_tol,
                              lambda_pin=pin, switching=switching,
                              lambda_cap=landing_cap(hs_now, self.landing_rate))
            u, top, new_hs, sat = act
        else:
            u, top = capped_continuation_control(hm, hs.alpha, pin, self.cfg.rank_tol)
            new_hs = replace_mode(hs_now, Mode.CONTINUATION)
            sat = bool(np.max(np.abs(u)) > self.cfg.u_max)
        rates = np.concatenate([self.sys.rhs(x, u), ref.rate(u), np.append(lam[1:], top)])
        H = ref.eta + lam[0] * (np.array([yd[0] for yd in y_derivs]) - ref.eta)
        lam_dot = lam[1] if lam.size > 1 else top
        return rates, new_hs, u, lam[0], lam_dot, H, sat

    def sample(self, t, z, hs, rng):
        rates, new_hs, u, lam, lam_dot, H, sat = self._evaluate(t, z, hs, True)
        x = z[:self.n]
        return Sample(rates=rates, state=new_hs, y=self.sys.h(x), u=np.asarray(u, float),
                      lam=float(lam), lam_dot=float(lam_dot), H=H, mode=new_hs.mode.value,
                      sat=bool(sat),
                      extras={"u_demand": self._demand} if self.mode == "fblin" else {})

    def rates(self, t, z, hs):
        return self._evaluate(t, z, hs, False)[0]

    def post_step(self, z):
        if self.mode != "fblin":
            i = 2 * self.n
            z[i] = min(max(z[i], 0.0), 1.0 + LAMBDA_SLACK)
        return z


def replace_mode(hs: HomotopyState, mode: Mode) -> HomotopyState:
    if hs.mode is mode:
        return hs
    return HomotopyState(lambda_derivs=hs.lambda_derivs, s=hs.s, mode=mode, alpha=hs.alpha)


def build_loop(scenario):
    """Closed loop for a validated scenario."""
    if scenario.plant == "induction_motor":
        from .motor import MotorLoop
        return MotorLoop.from_scenario(scenario)
    from .plants import build_plant
    sys = build_plant(scenario.plant, scenario.plant_params)
    c = scenario.controller
    return AffineLoop(sys, scenario.mode, scenario.sim, scenario.x0, scenario.setpoints,
                      h_gain=c.get("h_gain", 5.0), landing_rate=c.get("landing_rate", 2.0),
                      lambda0=scenario.lambda0, lambda_dot0=scenario.lambda_dot0,
                      eta_init=scenario.eta_init)


def run_closed_loop(scenario) -> SimTrace:
    """Simulate a scenario; failures return a partial trace with ``status == "failed"``."""
    loop = build_loop(scenario)
    return simulate(loop, scenario.sim)


__all__ = ["SimConfig", "SimTrace", "Sample", "simulate", "run_closed_loop", "build_loop",
           "AffineLoop", "chain_gains", "integrate_segment", "rk4_step", "gaussian_noise", "NonFiniteState",
           "BifurcationPoint"]
