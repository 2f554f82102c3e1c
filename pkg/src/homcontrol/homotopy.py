"""Homotopy between an integrator-chain reference system and an affine plant.

The blended output ``H = (1 - lam) * eta + lam * y`` is differentiated until
the inputs appear, giving the algebraic condition

    A1 @ u + A2 * lam^(r_max) + Bv = 0

which is solved either by continuation (oriented null-space tangent plus the
minimum-norm particular solution) or by feedback linearization with the top
derivative of ``lam`` pinned.  ``hybrid_step`` switches between the two on
input saturation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from math import comb
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .linalg import (DEFAULT_RANK_TOL, RankDeficient, is_invertible,
                     oriented_nullspace_tangent, pseudoinverse)
from .plant import AffineSystem, SingularDecoupling, decoupling_matrix, output_derivatives

LAMBDA_SLACK = 0.05
DEFAULT_ALPHA = 10.0
# Continuation hands control back once the linearizing input drops below this fraction of u_max.
SWITCH_BACK_FACTOR = 0.9


class BifurcationPoint(RankDeficient):
    """rank([A1 | A2]) < m: the solution curve branches and cannot be followed."""


class Mode(str, enum.Enum):
    FBLIN = "F"
    CONTINUATION = "C"


@dataclass(frozen=True)
class ReferenceLinearSystem:
    """Integrator chains ``eta_i^(r_i) = u_i``; ``chains[i] = (eta_i, ..., eta_i^(r_i-1))``."""

    chains: tuple

    def __post_init__(self):
        object.__setattr__(self, "chains",
                           tuple(np.array(c, dtype=float).reshape(-1) for c in self.chains))

    @classmethod
    def zeros(cls, rel_degrees: Sequence[int]) -> "ReferenceLinearSystem":
        return cls(tuple(np.zeros(r) for r in rel_degrees))

    @classmethod
    def matching_output(cls, y_derivs: Sequence[np.ndarray]) -> "ReferenceLinearSystem":
        """Chains copied from the plant outputs, ``eta^(k)(0) = y^(k)(0)``."""
        return cls(tuple(np.array(d, dtype=float) for d in y_derivs))

    @classmethod
    def on_manifold(cls, y_derivs: Sequence[np.ndarray],
                    lambda_derivs: Sequence[float]) -> "ReferenceLinearSystem":
        """Chains chosen so that ``H^(k) = 0`` for every ``k < r_i``.

        ``y_derivs[i]`` holds ``(y_i, ..., y_i^(r_i-1))``.  With ``lam = 0`` this
        gives ``eta(0) = 0``.
        """
        lam = np.asarray(lambda_derivs, dtype=float)
        if lam[0] >= 1.0:
            raise ValueError("on-manifold initialization needs lambda < 1")
        chains = []
        for yd in y_derivs:
            yd = np.asarray(yd, dtype=float)
            eta = np.zeros_like(yd)
            for k in range(yd.size):
                acc = lam[0] * yd[k]
                for j in range(1, k + 1):
                    lam_j = lam[j] if j < lam.size else 0.0
                    acc += comb(k, j) * lam_j * (yd[k - j] - eta[k - j])
                eta[k] = -acc / (1.0 - lam[0])
            chains.append(eta)
        return cls(tuple(chains))

    @property
    def eta(self) -> np.ndarray:
        return np.array([c[0] for c in self.chains])

    @property
    def size(self) -> int:
        return sum(c.size for c in self.chains)

    def as_vector(self) -> np.ndarray:
        return np.concatenate(self.chains)

    @classmethod
    def from_vector(cls, vec, rel_degrees: Sequence[int]) -> "ReferenceLinearSystem":
        out, pos = [], 0
        for r in rel_degrees:
            out.append(vec[pos:pos + r])
            pos += r
        return cls(tuple(out))

    def rate(self, u) -> np.ndarray:
        """Time derivative of ``as_vector()`` under input ``u``."""
        parts = []
        for c, ui in zip(self.chains, np.asarray(u, dtype=float)):
            parts.append(np.append(c[1:], ui))
        return np.concatenate(parts)


@dataclass(frozen=True)
class HomotopyState:
    """Continuation parameter chain ``(lam, lamdot, ..., lam^(r_max-1))`` plus switching state."""

    lambda_derivs: np.ndarray = field(default_factory=lambda: np.zeros(1))
    s: int = 1
    mode: Mode = Mode.FBLIN
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        lam = np.array(self.lambda_derivs, dtype=float).reshape(-1)
        if lam.size < 1:
            raise ValueError("lambda_derivs needs at least lambda itself")
        if self.s not in (-1, 1):
            raise ValueError("s must be -1 or +1")
        if not self.alpha > 0.0:
            raise ValueError("alpha must be > 0")
        object.__setattr__(self, "lambda_derivs", lam)
        object.__setattr__(self, "mode", Mode(self.mode))

    @property
    def lam(self) -> float:
        return float(self.lambda_derivs[0])

    @property
    def r_max(self) -> int:
        return int(self.lambda_derivs.size)


@dataclass(frozen=True)
class HSystemMatrices:
    """``A1 @ u + A2 * lam^(r_max) + Bv = 0``."""

    A1: np.ndarray
    A2: np.ndarray
    Bv: np.ndarray

    @property
    def m(self) -> int:
        return self.A2.size

    @property
    def stacked(self) -> np.ndarray:
        return np.column_stack([self.A1, self.A2])


class ControlAction(NamedTuple):
    u: np.ndarray
    lambda_top: float
    state: HomotopyState
    saturated: bool


def homotopy_residual(eta, y, lam: float) -> np.ndarray:
    return (1.0 - lam) * np.asarray(eta, dtype=float) + lam * np.asarray(y, dtype=float)


def h_derivatives(ref: ReferenceLinearSystem, y_derivs: Sequence[np.ndarray],
                  lambda_derivs) -> list:
    """``(H_i, ..., H_i^(r_i-1))`` per output from the Leibniz rule.

    Below the relative degree no input appears, so everything is known from
    the state; ``lambda_derivs`` entries beyond its length count as zero.
    """
    lam = np.asarray(lambda_derivs, dtype=float)
    out = []
    for eta, yd in zip(ref.chains, y_derivs):
        hd = np.empty(eta.size)
        for k in range(eta.size):
            acc = eta[k]
            for j in range(k + 1):
                lam_j = lam[j] if j < lam.size else 0.0
                acc += comb(k, j) * lam_j * (yd[k - j] - eta[k - j])
            hd[k] = acc
        out.append(hd)
    return out


def blend_h_system(lam_derivs, eta_chains: Sequence[np.ndarray],
                   y_derivs: Sequence[np.ndarray], rel_degrees: Sequence[int],
                   A_dec: np.ndarray, B_dec: np.ndarray) -> HSystemMatrices:
    """Assemble the H-system from a plant's decoupling data.

    ``y_derivs[i]`` holds ``(y_i, ..., y_i^(r_i-1))``, ``A_dec``/``B_dec`` the
    decoupling matrix and drift term at the same state.  Outputs whose
    relative degree is below ``r_max`` see ``lam^(r_i)`` as a known state, so
    their term moves into ``Bv``.
    """
    lam = np.asarray(lam_derivs, dtype=float)
    r_max = lam.size
    l0 = lam[0]
    m = len(rel_degrees)
    A1 = l0 * np.asarray(A_dec, dtype=float) + (1.0 - l0) * np.eye(m)
    A2 = np.zeros(m)
    Bv = l0 * np.asarray(B_dec, dtype=float)
    for i, r in enumerate(rel_degrees):
        eta, yd = eta_chains[i], y_derivs[i]
        for k in range(1, r):
            Bv[i] += comb(r, k) * (yd[r - k] - eta[r - k]) * lam[k]
        gap = yd[0] - eta[0]
        if r == r_max:
            A2[i] = gap
        else:
            Bv[i] += gap * lam[r]
    return HSystemMatrices(A1=A1, A2=A2, Bv=Bv)


def assemble_h_system(sys: AffineSystem, x, ref: ReferenceLinearSystem,
                      hs: HomotopyState, setpoint: Optional[np.ndarray] = None
                      ) -> HSystemMatrices:
    """H-system of plant ``sys`` at state ``x``.

    ``setpoint`` (shape ``(m, r_max + 1)``) holds derivatives of a reference
    trajectory subtracted from the outputs, so the homotopy zeroes the
    tracking error instead of ``y``.
    """
    if hs.r_max != sys.r_max:
        raise ValueError(f"lambda chain has {hs.r_max} entries, plant needs {sys.r_max}")
    x = np.asarray(x, dtype=float)
    A_dec, B_dec = decoupling_matrix(sys, x)
    y_derivs = []
    for i, r in enumerate(sys.rel_degrees):
        yd = output_derivatives(sys, x, i, r - 1)
        if setpoint is not None:
            yd = yd - setpoint[i, :r]
            B_dec[i] -= setpoint[i, r]
        y_derivs.append(yd)
    return blend_h_system(hs.lambda_derivs, ref.chains, y_derivs, sys.rel_degrees,
                          A_dec, B_dec)


def continuation_control(hm: HSystemMatrices, alpha: float,
                         rank_tol: float = DEFAULT_RANK_TOL) -> tuple:
    """``(u, lam^(r_max)) = alpha * tau + pinv(A) @ (-Bv)`` with ``A = [A1 | A2]``."""
    if not alpha > 0.0:
        raise ValueError("alpha must be > 0")
    A = hm.stacked
    try:
        tau = oriented_nullspace_tangent(A, rank_tol)
    except RankDeficient as exc:
        raise BifurcationPoint(str(exc)) from None
    sol = alpha * tau + pseudoinverse(A, rank_tol) @ (-hm.Bv)
    return sol[:-1], float(sol[-1])


def h_feedback_linearize(hm: HSystemMatrices, s: float, v,
                         rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """``u = A1^-1 (v - A2 * s - Bv)``, so that ``H^(r) = v`` with ``lam^(r_max) = s``."""
    if not is_invertible(hm.A1, rank_tol):
        raise SingularDecoupling("A1 is singular")
    rhs = np.asarray(v, dtype=float) - hm.A2 * s - hm.Bv
    return np.linalg.solve(hm.A1, rhs)


def tangent_parts(hm: HSystemMatrices, rank_tol: float = DEFAULT_RANK_TOL) -> tuple:
    """Split ``tau`` and ``tau_bar`` into input and ``lam^(r_max)`` components."""
    A = hm.stacked
    try:
        tau = oriented_nullspace_tangent(A, rank_tol)
    except RankDeficient as exc:
        raise BifurcationPoint(str(exc)) from None
    tau_bar = pseudoinverse(A, rank_tol) @ (-hm.Bv)
    return tau[:-1], float(tau[-1]), tau_bar[:-1], float(tau_bar[-1])


def equivalent_alpha(hm: HSystemMatrices, rank_tol: float = DEFAULT_RANK_TOL) -> float:
    """Scale that makes continuation reproduce linearization with ``lam^(r_max) = +-1``."""
    _, l_hat, _, l_bar = tangent_parts(hm, rank_tol)
    return (np.sign(l_hat) - l_bar) / l_hat


def capped_continuation_control(hm: HSystemMatrices, alpha: float, cap: float,
                                rank_tol: float = DEFAULT_RANK_TOL) -> tuple:
    """Continuation with ``alpha`` reduced so that ``lam^(r_max)`` never exceeds ``cap``.

    Every ``alpha`` solves the H-system, so capping only changes the speed
    along the curve; it is how the continuation lands on ``lam = 1``.
    """
    u_hat, l_hat, u_bar, l_bar = tangent_parts(hm, rank_tol)
    if alpha * l_hat + l_bar > cap and l_hat > 0.0:
        alpha = max((cap - l_bar) / l_hat, 0.0)
    return alpha * u_hat + u_bar, float(alpha * l_hat + l_bar)


def _saturated_continuation(hm: HSystemMatrices, u_max: float, rank_tol: float,
                            cap: Optional[float] = None):
    u_hat, l_hat, u_bar, l_bar = tangent_parts(hm, rank_tol)
    peak_hat = float(np.max(np.abs(u_hat)))
    peak_bar = float(np.max(np.abs(u_bar)))
    k_u = max(0.0, (u_max - peak_bar) / peak_hat) if peak_hat > 0.0 else np.inf
    new_s = None
    if l_hat != 0.0:
        k_lam = (np.sign(l_hat) - l_bar) / l_hat
    else:
        k_lam = np.nan
    if 0.0 < k_lam < k_u:
        new_s = int(np.sign(l_hat))
        u = k_lam * u_hat + u_bar
        top = float(new_s)
    else:
        k = k_u if np.isfinite(k_u) else 0.0
        u = k * u_hat + u_bar
        top = k * l_hat + l_bar
        if l_hat != 0.0:
            # The tangent's lambda direction flips at folds; keep s on the same branch.
            new_s = int(np.sign(l_hat))
    if cap is not None and l_hat > 0.0 and top > cap:
        k = max((cap - l_bar) / l_hat, 0.0)
        u = k * u_hat + u_bar
        top = k * l_hat + l_bar
    peak = float(np.max(np.abs(u)))
    if peak > u_max:
        # Particular solution alone is out of bounds; shrink the whole step.
        shrink = u_max / peak
        u = u * shrink
        top *= shrink
    return u, top, new_s


def landing_cap(hs: HomotopyState, landing_rate: Optional[float] = None) -> float:
    """Largest ``lam^(r_max)`` that still lands ``lam`` on 1 without overshoot.

    This is the critically damped approach to ``lam = 1`` with all poles at
    ``-landing_rate``; ``inf`` when no rate is given.
    """
    if landing_rate is None:
        return np.inf
    r = hs.r_max
    lam = hs.lambda_derivs
    landing = 0.0
    for k in range(r):
        target = 1.0 if k == 0 else 0.0
        landing -= comb(r, k) * landing_rate ** (r - k) * (lam[k] - target)
    return landing


def pinned_lambda_top(hs: HomotopyState, landing_rate: Optional[float] = None) -> float:
    """Pinned value of ``lam^(r_max)`` for the linearizing branch.

    Forward motion (``s = +1``) is capped by ``landing_cap``, so ``lam``
    settles at 1 instead of running past it.
    """
    s = float(hs.s)
    if s < 0.0:
        return s
    return min(s, landing_cap(hs, landing_rate))


def hybrid_step(hm: HSystemMatrices, hs: HomotopyState, v, u_max: float,
                rank_tol: float = DEFAULT_RANK_TOL, lambda_pin: Optional[float] = None,
                switching: bool = True, lambda_cap: Optional[float] = None) -> ControlAction:
    """Saturation-triggered switch between linearization and continuation.

    Linearization of the H-system with ``lam^(r_max)`` pinned (``hs.s`` or
    ``lambda_pin``) is used while ``max|u| <= u_max``.  Otherwise the input is
    rebuilt from the tangent decomposition: if the unit-speed continuation
    solution fits the bound, it is taken and ``s`` follows the tangent;
    otherwise the homogeneous part is scaled so the largest input sits at
    ``u_max``.  From continuation, control returns to linearization once the
    linearizing input is below ``SWITCH_BACK_FACTOR * u_max``.

    With ``switching=False`` the mode in ``hs`` is applied as is (used at
    intermediate integrator stages).  ``lambda_cap`` bounds ``lam^(r_max)``
    on the continuation branch (see ``landing_cap``).
    """
    if not u_max > 0.0:
        raise ValueError("u_max must be > 0")
    pin = float(hs.s) if lambda_pin is None else float(lambda_pin)
    try:
        u_fb = h_feedback_linearize(hm, pin, v, rank_tol)
        peak = float(np.max(np.abs(u_fb)))
    except SingularDecoupling:
        u_fb, peak = None, np.inf
    if hs.mode is Mode.FBLIN:
        use_fb = peak <= u_max
    else:
        use_fb = switching and peak < SWITCH_BACK_FACTOR * u_max
    if use_fb:
        state = hs if hs.mode is Mode.FBLIN else replace(hs, mode=Mode.FBLIN)
        return ControlAction(u_fb, pin, state, False)
    u, top, new_s = _saturated_continuation(hm, u_max, rank_tol, lambda_cap)
    state = replace(hs, mode=Mode.CONTINUATION, s=hs.s if new_s is None else new_s)
    return ControlAction(u, top, state, True)


def advance_homotopy_state(hs: HomotopyState, lambda_top: float, dt: float,
                           slack: float = LAMBDA_SLACK) -> HomotopyState:
    """Advance the lambda chain by ``dt`` with its top derivative held at ``lambda_top``.

    A chain with a constant top derivative is polynomial in time, so the
    Taylor update below is what RK4 produces for ``r_max <= 4``.  Lambda is
    clamped to ``[0, 1 + slack]``.
    """
    if not dt > 0.0:
        raise ValueError("dt must be > 0")
    lam = hs.lambda_derivs
    r = lam.size
    full = np.append(lam, lambda_top)
    new = np.empty(r)
    fact = [1.0]
    for k in range(1, r + 1):
        fact.append(fact[-1] * k)
    for k in range(r):
        new[k] = sum(full[j] * dt ** (j - k) / fact[j - k] for j in range(k, r + 1))
    new[0] = min(max(new[0], 0.0), 1.0 + slack)
    return replace(hs, lambda_derivs=new)
