"""Induction motor benchmark in the rotor-flux-oriented d-q frame.

State ordering is ``(omega, phi_r, i_sd, i_sq)``: electrical rotor speed,
rotor flux magnitude and the stator currents.  The controller is a cascade:
PI current loops behind a decoupling transformation, and an outer loop whose
PI outputs pass through the homotopy law to produce current references.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Mapping, NamedTuple, Optional

import numpy as np

from .homotopy import (LAMBDA_SLACK, SWITCH_BACK_FACTOR, ControlAction, HomotopyState, HSystemMatrices, Mode,
                       capped_continuation_control, hybrid_step, landing_cap,
                       pinned_lambda_top)
from .integrators import gaussian_noise
from .linalg import DEFAULT_RANK_TOL
from .plant import AffineSystem, OperatingBox
from .regulators import PIState

PHI_FLOOR = 1e-3


@dataclass(frozen=True)
class MotorParams:
    """Nameplate data of the 4 kW test machine."""

    P: float = 4000.0
    M_sr: float = 0.175
    R_s: float = 1.2
    R_r: float = 0.873
    L_s: float = 0.195
    L_r: float = 0.195
    J: float = 0.013
    p: int = 2
    T_m: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "T_m":
                if not (math.isfinite(value) and value >= 0.0):
                    raise ValueError("T_m must be finite and >= 0")
            elif not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{f.name} must be positive, got {value}")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("p must be an integer >= 1")
        if self.L_s * self.L_r <= self.M_sr ** 2:
            raise ValueError("leakage inductance must be positive (L_s L_r > M_sr^2)")
        object.__setattr__(self, "p", int(self.p))

    @classmethod
    def from_mapping(cls, values: Mapping) -> "MotorParams":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise KeyError(f"unknown motor parameters: {sorted(unknown)}")
        return cls(**{k: float(v) if k != "p" else int(float(v)) for k, v in values.items()})


@dataclass(frozen=True)
class DerivedParams:
    tau_r: float
    tau_1: float
    mu: float
    beta: float
    L_1: float
    R_1: float


def derive_params(mp: MotorParams) -> DerivedParams:
    L_1 = mp.L_s - mp.M_sr ** 2 / mp.L_r
    R_1 = mp.R_s + mp.R_r * (mp.M_sr / mp.L_r) ** 2
    return DerivedParams(
        tau_r=mp.L_r / mp.R_r,
        tau_1=L_1 / R_1,
        mu=mp.p ** 2 * mp.M_sr / (mp.J * mp.L_r),
        beta=mp.M_sr / (mp.L_r * L_1),
        L_1=L_1,
        R_1=R_1,
    )


class MotorState(NamedTuple):
    omega: float
    phi_r: float
    i_sd: float
    i_sq: float


def synchronous_speed(omega: float, phi_r: float, i_sq: float, mp: MotorParams,
                      dp: Optional[DerivedParams] = None) -> float:
    """``omega + M_sr i_sq / (tau_r phi_r)`` with ``phi_r`` floored at ``PHI_FLOOR``."""
    dp = dp or derive_params(mp)
    return omega + mp.M_sr * i_sq / (dp.tau_r * max(phi_r, PHI_FLOOR))


def motor_dynamics(s: MotorState, V_sd: float, V_sq: float, mp: MotorParams,
                   dp: Optional[DerivedParams] = None) -> np.ndarray:
    """Rates of ``(omega, phi_r, i_sd, i_sq)`` under stator voltages ``(V_sd, V_sq)``."""
    dp = dp or derive_params(mp)
    omega, phi, i_d, i_q = s
    w_s = synchronous_speed(omega, phi, i_q, mp, dp)
    return np.array([
        dp.mu * phi * i_q - mp.p * mp.T_m / mp.J,
        (-phi + mp.M_sr * i_d) / dp.tau_r,
        dp.beta * phi / dp.tau_r - i_d / dp.tau_1 + w_s * i_q + V_sd / dp.L_1,
        -dp.beta * omega * phi - i_q / dp.tau_1 - w_s * i_d + V_sq / dp.L_1,
    ])


def electromagnetic_torque(s: MotorState, mp: MotorParams) -> float:
    return mp.p * mp.M_sr / mp.L_r * s.i_sq * s.phi_r


def current_decouple(nu_sd: float, nu_sq: float, s: MotorState, mp: MotorParams,
                     dp: Optional[DerivedParams] = None) -> tuple:
    """Voltages that turn the current dynamics into
    ``di_sd/dt = nu_sd + beta phi_r / tau_r - i_sd / tau_1`` and
    ``di_sq/dt = nu_sq - i_sq / tau_1``."""
    dp = dp or derive_params(mp)
    w_s = synchronous_speed(s.omega, s.phi_r, s.i_sq, mp, dp)
    V_sd = dp.L_1 * (nu_sd - w_s * s.i_sq)
    V_sq = dp.L_1 * (nu_sq + dp.beta * s.omega * s.phi_r + w_s * s.i_sd)
    return V_sd, V_sq


def flux_observer_rate(i_sd: float, phi_hat: float, mp: MotorParams,
                       dp: Optional[DerivedParams] = None) -> float:
    dp = dp or derive_params(mp)
    return (-phi_hat + mp.M_sr * i_sd) / dp.tau_r


def flux_observer(i_sd: float, phi_hat: float, dt: float, mp: MotorParams,
                  dp: Optional[DerivedParams] = None) -> float:
    """One RK4 step of the rotor-flux model driven by measured ``i_sd``, clamped at 0."""
    if not dt > 0.0:
        raise ValueError("dt must be > 0")
    dp = dp or derive_params(mp)
    k1 = flux_observer_rate(i_sd, phi_hat, mp, dp)
    k2 = flux_observer_rate(i_sd, phi_hat + 0.5 * dt * k1, mp, dp)
    k3 = flux_observer_rate(i_sd, phi_hat + 0.5 * dt * k2, mp, dp)
    k4 = flux_observer_rate(i_sd, phi_hat + dt * k3, mp, dp)
    return max(0.0, phi_hat + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def second_derivative_model(s: MotorState, mp: MotorParams,
                            dp: Optional[DerivedParams] = None) -> tuple:
    """Coefficients of ``(ydd_speed, ydd_flux) = (b1, b2) + [[0, a12], [a21, 0]] @ (V_sd, V_sq)``.

    The speed output is ``omega / p``, the flux output ``phi_r^2``.
    """
    dp = dp or derive_params(mp)
    omega, phi, i_d, i_q = s
    M, tr, t1 = mp.M_sr, dp.tau_r, dp.tau_1
    w_s = synchronous_speed(omega, phi, i_q, mp, dp)
    k = dp.mu / mp.p
    b1 = k * (-phi * (i_q / t1 + i_q / tr + w_s * i_d) + M * i_d * i_q / tr
              - dp.beta * omega * phi ** 2)
    b2 = (2.0 / tr ** 2 * (2.0 + dp.beta * M) * phi ** 2
          - (3.0 * M / tr + M / t1) * 2.0 * i_d * phi / tr
          + 2.0 * M * w_s * i_q * phi / tr
          + 2.0 * M ** 2 * i_d ** 2 / tr ** 2)
    a12 = k * phi / dp.L_1
    a21 = 2.0 * M * phi / (tr * dp.L_1)
    return b1, b2, a12, a21


def motor_affine_system(mp: MotorParams = MotorParams()) -> AffineSystem:
    """The motor as an affine plant in voltages, outputs ``(phi_r^2, omega / p)``."""
    dp = derive_params(mp)

    def f(x):
        return motor_dynamics(MotorState(*x), 0.0, 0.0, mp, dp)

    def g_d(x):
        return np.array([0.0, 0.0, 1.0 / dp.L_1, 0.0])

    def g_q(x):
        return np.array([0.0, 0.0, 0.0, 1.0 / dp.L_1])

    def h(x):
        return np.array([x[1] ** 2, x[0] / mp.p])

    def lie(which, j, order, x):
        s = MotorState(*x)
        if order == 1:
            if which != "f":
                return 0.0
            if j == 0:
                return 2.0 * s.phi_r * (-s.phi_r + mp.M_sr * s.i_sd) / dp.tau_r
            return dp.mu * s.phi_r * s.i_sq / mp.p - mp.T_m / mp.J
        if order == 2:
            b1, b2, a12, a21 = second_derivative_model(s, mp, dp)
            if which == "f":
                return b2 if j == 0 else b1
            if j == 0:
                return a21 if int(which) == 0 else 0.0
            return a12 if int(which) == 1 else 0.0
        return None

    return AffineSystem(
        name="induction_motor", n=4, m=2,
        f=f, g=[g_d, g_q], h=h,
        rel_degrees=(2, 2),
        box=OperatingBox(np.array([-200.0, 0.05, -20.0, -20.0]),
                         np.array([200.0, 1.0, 20.0, 20.0])),
        lie_hook=lie,
        params={f.name: getattr(mp, f.name) for f in fields(mp)},
    )


# --- outer loop -------------------------------------------------------------

def outer_h_system(y, eta, phi_r: float, lam: float, mp: MotorParams,
                   dp: Optional[DerivedParams] = None,
                   include_load: bool = False) -> HSystemMatrices:
    """First-order H-system with the current references as inputs.

    Channel 1 is the flux output ``phi_r^2`` (driven by ``i_sd``), channel 2
    the speed output ``omega / p`` (driven by ``i_sq``).  The load term of the
    speed derivative is left out unless ``include_load`` is set.
    """
    dp = dp or derive_params(mp)
    g1 = 2.0 * mp.M_sr * phi_r / dp.tau_r
    g2 = dp.mu * phi_r / mp.p
    A1 = np.array([[(1.0 - lam) + lam * g1, 0.0],
                   [0.0, (1.0 - lam) + lam * g2]])
    A2 = np.asarray(y, dtype=float) - np.asarray(eta, dtype=float)
    load = -mp.T_m / mp.J if include_load else 0.0
    Bv = lam * np.array([-2.0 * phi_r ** 2 / dp.tau_r, load])
    return HSystemMatrices(A1=A1, A2=A2, Bv=Bv)


def blended_current_reference(v, y, eta, lam: float, lam_dot: float, phi_r: float,
                              mp: MotorParams, dp: Optional[DerivedParams] = None) -> tuple:
    """Closed-form linearizing current references of the blended system."""
    dp = dp or derive_params(mp)
    tr = dp.tau_r
    i_sd = ((2.0 * lam * phi_r ** 2 + v[0] * tr + eta[0] * lam_dot * tr - lam_dot * tr * y[0])
            / (tr - lam * tr + 2.0 * mp.M_sr * lam * phi_r))
    i_sq = (v[1] + eta[1] * lam_dot - lam_dot * y[1]) / (dp.mu * lam * phi_r / mp.p + 1.0 - lam)
    return i_sd, i_sq


def plant_current_reference(v, phi_r: float, mp: MotorParams,
                            dp: Optional[DerivedParams] = None) -> tuple:
    """Classical linearizing references, valid away from ``phi_r = 0``."""
    dp = dp or derive_params(mp)
    i_sd = dp.tau_r / (2.0 * mp.M_sr * phi_r) * (v[0] + 2.0 * phi_r ** 2 / dp.tau_r)
    i_sq = mp.p / (dp.mu * phi_r) * v[1]
    return i_sd, i_sq


def governed_output(v, hm: HSystemMatrices, lambda_top: float, limit: float) -> tuple:
    """Clamp ``v`` so the linearizing current references stay within ``+-limit``.

    The outer H-system has a diagonal ``A1``, so each channel's reference is
    ``(v_i - A2_i lam_top - Bv_i) / A1_ii`` and the admissible ``v_i`` form an
    interval.  Returns the clamped ``v`` and a per-channel clamped flag.
    """
    v = np.asarray(v, dtype=float)
    a = np.diag(hm.A1)
    offset = hm.A2 * lambda_top + hm.Bv
    lo = np.minimum(a * -limit, a * limit) + offset
    hi = np.maximum(a * -limit, a * limit) + offset
    out = np.clip(v, lo, hi)
    return out, out != v


@dataclass(frozen=True)
class OuterLoopConfig:
    i_max: float = 20.0
    landing_rate: float = 5.0
    include_load: bool = False
    rank_tol: float = DEFAULT_RANK_TOL


class OuterLoopResult(NamedTuple):
    i_ref: np.ndarray
    v: np.ndarray
    action: ControlAction


def outer_loop_control(y, y_ref, phi_hat: float, eta, hs: HomotopyState,
                       pi_flux: PIState, pi_speed: PIState, cfg: OuterLoopConfig,
                       mp: MotorParams, dp: Optional[DerivedParams] = None,
                       switching: bool = True) -> OuterLoopResult:
    """PI outputs ``v`` mapped to current references through the hybrid law.

    ``v`` is first governed (see ``governed_output``) to the range whose
    linearizing references stay below ``SWITCH_BACK_FACTOR * i_max``.
    """
    dp = dp or derive_params(mp)
    e = np.asarray(y_ref, dtype=float) - np.asarray(y, dtype=float)
    v = np.array([pi_flux.clamp(pi_flux.raw_output(e[0])),
                  pi_speed.clamp(pi_speed.raw_output(e[1]))])
    hm = outer_h_system(y, eta, phi_hat, hs.lam, mp, dp, cfg.include_load)
    pin = pinned_lambda_top(hs, cfg.landing_rate)
    v, _ = governed_output(v, hm, pin, SWITCH_BACK_FACTOR * cfg.i_max)
    action = hybrid_step(hm, hs, v, cfg.i_max, cfg.rank_tol, lambda_pin=pin,
                         switching=switching, lambda_cap=landing_cap(hs, cfg.landing_rate))
    return OuterLoopResult(np.asarray(action.u, dtype=float), v, action)


def continuation_current_reference(y, phi_hat: float, eta, hs: HomotopyState,
                                   cfg: OuterLoopConfig, mp: MotorParams,
                                   dp: Optional[DerivedParams] = None) -> tuple:
    """Pure continuation references with the landing cap on ``lamdot``."""
    hm = outer_h_system(y, eta, phi_hat, hs.lam, mp, dp, cfg.include_load)
    cap = pinned_lambda_top(hs, cfg.landing_rate)
    return capped_continuation_control(hm, hs.alpha, cap, cfg.rank_tol)


# --- closed loop ------------------------------------------------------------

@dataclass(frozen=True)
class MotorGains:
    """Regulator gains; the defaults place the current loops at 5 ms and the
    outer loops at a double pole of 20 rad/s."""

    kp_current: float = 200.0
    ki_current: float = 10030.0
    kp_flux: float = 40.0
    ki_flux: float = 400.0
    kp_speed: float = 40.0
    ki_speed: float = 400.0
    landing_rate: float = 5.0
    flux_limit: Optional[float] = None
    speed_limit: Optional[float] = None


@dataclass(frozen=True)
class MotorDiscrete:
    """Per-step discrete state: homotopy switching state and the held current noise."""

    hs: HomotopyState
    noise: tuple = (0.0, 0.0)

    @property
    def mode(self):
        return self.hs.mode

    @property
    def lam(self) -> float:
        return self.hs.lam


# Layout of the augmented state.
_OMEGA, _PHI, _ID, _IQ, _PHI_HAT, _ETA1, _ETA2, _LAM, _E1, _E2, _XD, _XQ = range(12)


class MotorLoop:
    """Cascade of PI current loops under a homotopy outer loop.

    Augmented state ``z = (omega, phi_r, i_sd, i_sq, phi_hat, eta_1, eta_2,
    lam, E_1, E_2, xi_d, xi_q)``: plant, flux observer, reference system,
    continuation parameter, outer and inner PI integrals.  Measured currents
    carry Gaussian noise held over each step; the plant itself stays clean.
    """

    n = 4
    m = 2

    def __init__(self, mp: MotorParams, cfg, setpoints, mode: str = "hybrid",
                 gains: MotorGains = MotorGains(), include_load: bool = False,
                 x0=(0.0, 0.0, 0.0, 0.0), lambda0: float = 0.0):
        if mode not in ("fblin", "continuation", "hybrid"):
            raise ValueError(f"unknown controller mode {mode!r}")
        self.mp = mp
        self.dp = derive_params(mp)
        self.cfg = cfg
        self.setpoints = list(setpoints)
        if len(self.setpoints) != 2:
            raise ValueError("motor needs 2 setpoint profiles (flux^2, omega/p)")
        self.mode = mode
        self.gains = gains
        self.x0 = np.asarray(x0, dtype=float)
        self.lambda0 = lambda0
        self.outer = OuterLoopConfig(i_max=cfg.u_max, landing_rate=gains.landing_rate,
                                     include_load=include_load, rank_tol=cfg.rank_tol)
        self.pi_flux = PIState(gains.kp_flux, gains.ki_flux, output_limit=gains.flux_limit)
        self.pi_speed = PIState(gains.kp_speed, gains.ki_speed, output_limit=gains.speed_limit)

    @classmethod
    def from_scenario(cls, scenario) -> "MotorLoop":
        c = dict(scenario.controller)
        include_load = bool(c.pop("include_load", 0.0))
        known = {f.name for f in fields(MotorGains)}
        gains = MotorGains(**{k: v for k, v in c.items() if k in known})
        return cls(MotorParams.from_mapping(scenario.plant_params), scenario.sim,
                   scenario.setpoints, scenario.mode, gains, include_load,
                   scenario.x0, scenario.lambda0)

    def initial(self):
        z = np.zeros(12)
        z[:4] = self.x0
        z[_PHI_HAT] = max(self.x0[1], 0.0)
        z[_LAM] = self.lambda0
        if self.lambda0 > 0.0:
            # Keep H on its manifold: (1 - lam) eta + lam y = y at t = 0.
            y = np.array([z[_PHI_HAT] ** 2, self.x0[0] / self.mp.p])
            z[_ETA1:_ETA2 + 1] = y
        hs = HomotopyState(lambda_derivs=[self.lambda0], alpha=self.cfg.alpha)
        return z, MotorDiscrete(hs)

    def _evaluate(self, t, z, disc: MotorDiscrete, switching: bool):
        mp, dp = self.mp, self.dp
        s = MotorState(z[_OMEGA], z[_PHI], z[_ID], z[_IQ])
        i_d = s.i_sd + disc.noise[0]
        i_q = s.i_sq + disc.noise[1]
        phi_hat = max(z[_PHI_HAT], 0.0)
        y = np.array([phi_hat ** 2, s.omega / mp.p])
        y_ref = np.array([self.setpoints[0].value(t), self.setpoints[1].value(t)])
        e = y_ref - y
        pis = (self.pi_flux, self.pi_speed)
        integrals = (z[_E1], z[_E2])
        v = np.array([pi.clamp(pi.raw_output(ei, xi)) for pi, ei, xi in zip(pis, e, integrals)])
        eta = z[_ETA1:_ETA2 + 1]
        lam = min(max(z[_LAM], 0.0), 1.0 + LAMBDA_SLACK)
        hs = HomotopyState(lambda_derivs=[lam], s=disc.hs.s, mode=disc.hs.mode,
                           alpha=disc.hs.alpha)
        i_max = self.outer.i_max
        windup = np.zeros(2, dtype=bool)
        if self.mode == "fblin":
            i_ref = np.array(plant_current_reference(v, max(phi_hat, PHI_FLOOR), mp, dp))
            sat = bool(np.max(np.abs(i_ref)) > i_max)
            i_ref = np.clip(i_ref, -i_max, i_max)
            top, new_hs = 0.0, hs
        else:
            hm = outer_h_system(y, eta, phi_hat, lam, mp, dp, self.outer.include_load)
            pin = pinned_lambda_top(hs, self.outer.landing_rate)
            if self.mode == "hybrid":
                v_gov, clamped = governed_output(v, hm, pin, SWITCH_BACK_FACTOR * i_max)
                # Anti-windup: hold an integral while its channel is clamped the same way.
                windup = clamped & (np.sign(v - v_gov) == np.sign(e))
                v = v_gov
                act = hybrid_step(hm, hs, v, i_max, self.outer.rank_tol, lambda_pin=pin,
                                  switching=switching,
                                  lambda_cap=landing_cap(hs, self.outer.landing_rate))
                i_ref, top, new_hs, sat = act
            else:
                i_ref, top = capped_continuation_control(hm, hs.alpha, pin,
                                                         self.outer.rank_tol)
                sat = bool(np.max(np.abs(i_ref)) > i_max)
                i_ref = np.clip(i_ref, -i_max, i_max)
                new_hs = replace(hs, mode=Mode.CONTINUATION)
        # Inner current loops on the measured (noisy) currents.
        ed, eq = i_ref[0] - i_d, i_ref[1] - i_q
        nu_d = self.gains.kp_current * ed + self.gains.ki_current * z[_XD]
        nu_q = self.gains.kp_current * eq + self.gains.ki_current * z[_XQ]
        measured = MotorState(s.omega, phi_hat, i_d, i_q)
        V_sd, V_sq = current_decouple(nu_d, nu_q, measured, mp, dp)
        rates = np.empty(12)
        rates[:4] = motor_dynamics(s, V_sd, V_sq, mp, dp)
        rates[_PHI_HAT] = flux_observer_rate(i_d, phi_hat, mp, dp)
        rates[_ETA1:_ETA2 + 1] = i_ref
        rates[_LAM] = top if self.mode != "fblin" else 0.0
        # Outer integrals are frozen while the current references are clipped.
        for k, (pi, ei, xi) in enumerate(zip(pis, e, integrals)):
            rates[_E1 + k] = 0.0 if sat or windup[k] else pi.integral_rate(ei, xi)
        rates[_XD], rates[_XQ] = ed, eq
        H = (1.0 - lam) * eta + lam * y
        if self.mode == "fblin":
            H = y.copy()
        info = dict(u=np.array([V_sd, V_sq]), lam=lam if self.mode != "fblin" else 1.0,
                    lam_dot=top, H=H, sat=sat, hs=new_hs,
                    extras={"i_sd_ref": i_ref[0], "i_sq_ref": i_ref[1], "phi_hat": phi_hat,
                            "v1": v[0], "v2": v[1]})
        return rates, info

    def sample(self, t, z, disc: MotorDiscrete, rng):
        var = self.cfg.noise_variance
        noise = (float(gaussian_noise(rng, var)), float(gaussian_noise(rng, var)))
        disc = MotorDiscrete(disc.hs, noise)
        rates, info = self._evaluate(t, z, disc, True)
        from .sim import Sample
        y = np.array([z[_PHI] ** 2, z[_OMEGA] / self.mp.p])
        return Sample(rates=rates, state=MotorDiscrete(info["hs"], noise), y=y,
                      u=info["u"], lam=float(info["lam"]), lam_dot=float(info["lam_dot"]),
                      H=info["H"], mode=info["hs"].mode.value, sat=bool(info["sat"]),
                      extras=info["extras"])

    def rates(self, t, z, disc: MotorDiscrete):
        return self._evaluate(t, z, disc, False)[0]

    def post_step(self, z):
        z[_PHI_HAT] = max(z[_PHI_HAT], 0.0)
        z[_LAM] = min(max(z[_LAM], 0.0), 1.0 + LAMBDA_SLACK)
        return z
