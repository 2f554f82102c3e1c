"""Affine control systems ``xdot = f(x) + sum_i g_i(x) u_i``, ``y = h(x)``.

Lie derivatives are taken from an analytic hook when the plant provides one
and otherwise from nested central differences, which keeps every hand-derived
expression checkable against a derivative-free oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .linalg import DEFAULT_RANK_TOL, is_invertible

Field = Union[str, int]
LieHook = Callable[[Field, int, int, np.ndarray], Optional[float]]

# Base step for a single central difference.
FD_STEP = 1e-6


class SingularDecoupling(np.linalg.LinAlgError):
    """The decoupling matrix failed the rank test; feedback linearization is undefined."""


@dataclass(frozen=True)
class OperatingBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError("box requires lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(count, self.lower.size))


@dataclass(frozen=True)
class AffineSystem:
    """Square affine plant with declared relative degrees.

    ``lie_hook(field, j, order, x)`` may return the analytic value of
    ``L_field L_f^(order-1) h_j(x)`` (``field`` is ``"f"`` or an input index)
    or ``None`` to defer to finite differences.
    """

    name: str
    n: int
    m: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Sequence[Callable[[np.ndarray], np.ndarray]]
    h: Callable[[np.ndarray], np.ndarray]
    rel_degrees: tuple
    box: OperatingBox
    lie_hook: Optional[LieHook] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.g) != self.m:
            raise ValueError(f"{self.name}: expected {self.m} input fields, got {len(self.g)}")
        rd = tuple(int(r) for r in self.rel_degrees)
        if len(rd) != self.m or any(r < 1 for r in rd):
            raise ValueError(f"{self.name}: relative degrees must be {self.m} positive integers")
        if sum(rd) != self.n:
            raise ValueError(f"{self.name}: sum of relative degrees {sum(rd)} != n={self.n} "
                             "(zero dynamics are not supported)")
        if self.box.lower.size != self.n:
            raise ValueError(f"{self.name}: operating box has wrong dimension")
        object.__setattr__(self, "rel_degrees", rd)

    @property
    def r_max(self) -> int:
        return max(self.rel_degrees)

    def input_matrix(self, x) -> np.ndarray:
        """Columns g_i(x), shape (n, m)."""
        return np.column_stack([gi(x) for gi in self.g])

    def rhs(self, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.f(x) + self.input_matrix(x) @ np.asarray(u, dtype=float)

    def vector_field(self, which: Field) -> Callable[[np.ndarray], np.ndarray]:
        if which == "f":
            return self.f
        return self.g[int(which)]


def _fd_step(total_order: int) -> float:
    # Roundoff of a depth-d nested central difference grows like eps / step**d.
    if total_order <= 1:
        return FD_STEP
    return float(np.finfo(float).eps ** (1.0 / (total_order + 2)))


def _fd_lie(sys: AffineSystem, which: Field, j: int, x: np.ndarray, order: int,
            step: float) -> float:
    if order == 0:
        return float(sys.h(x)[j])
    inner_order = order - 1

    def inner(z):
        return _fd_lie(sys, "f", j, z, inner_order, step)

    direction = sys.vector_field(which)(x)
    grad = np.empty(sys.n)
    for i in range(sys.n):
        hi = step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += hi
        xm[i] -= hi
        grad[i] = (inner(xp) - inner(xm)) / (xp[i] - xm[i])
    return float(grad @ direction)


def lie_derivative(sys: AffineSystem, which: Field, j: int, x, order: int = 1,
                   use_hook: bool = True) -> float:
    """``L_which L_f^(order-1) h_j(x)``; ``order == 0`` returns ``h_j(x)``.

    ``which`` is ``"f"`` for the drift or an integer input index.
    """
    if order < 0:
        raise ValueError("order must be >= 0")
    x = np.asarray(x, dtype=float)
    if order == 0:
        return float(sys.h(x)[j])
    if use_hook and sys.lie_hook is not None:
        value = sys.lie_hook(which, j, order, x)
        if value is not None:
            return float(value)
    return _fd_lie(sys, which, j, x, order, _fd_step(order))


def output_derivatives(sys: AffineSystem, x, j: int, upto: int) -> np.ndarray:
    """Input-free derivatives ``(y_j, ydot_j, ..., y_j^(upto))`` as ``L_f^k h_j``."""
    return np.array([lie_derivative(sys, "f", j, x, k) for k in range(upto + 1)])


def decoupling_matrix(sys: AffineSystem, x) -> tuple:
    """Return ``(A, B)`` with ``y_j^(r_j) = B_j + sum_i A_ji u_i``."""
    x = np.asarray(x, dtype=float)
    A = np.empty((sys.m, sys.m))
    B = np.empty(sys.m)
    for j, r in enumerate(sys.rel_degrees):
        B[j] = lie_derivative(sys, "f", j, x, r)
        for i in range(sys.m):
            A[j, i] = lie_derivative(sys, i, j, x, r)
    return A, B


def relative_degree_probe(sys: AffineSystem, x, max_order: Optional[int] = None,
                          tol: float = 1e-9) -> list:
    """Pointwise relative degree per output; 0 marks a degenerate point."""
    max_order = sys.n if max_order is None else max_order
    if max_order > sys.n:
        raise ValueError("max_order cannot exceed the state dimension")
    degrees = []
    for j in range(sys.m):
        found = 0
        for k in range(1, max_order + 1):
            if any(abs(lie_derivative(sys, i, j, x, k)) > tol for i in range(sys.m)):
                found = k
                break
        degrees.append(found)
    return degrees


def feedback_linearize_input(sys: AffineSystem, x, v,
                             rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Linearizing input ``u = A(x)^-1 (v - B(x))`` giving ``y_j^(r_j) = v_j``."""
    A, B = decoupling_matrix(sys, x)
    if not is_invertible(A, rank_tol):
        raise SingularDecoupling(f"{sys.name}: decoupling matrix singular at x={np.asarray(x)}")
    return np.linalg.solve(A, np.asarray(v, dtype=float) - B)
