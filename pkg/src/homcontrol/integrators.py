"""Fixed-step integration and measurement noise."""

from __future__ import annotations

from typing import Callable

import numpy as np


class NonFiniteState(FloatingPointError):
    """An integration stage produced NaN or Inf."""


def rk4_step(deriv: Callable[[float, np.ndarray], np.ndarray], state, t: float,
             dt: float) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step of ``dz/dt = deriv(t, z)``."""
    z = np.asarray(state, dtype=float)
    k1 = deriv(t, z)
    k2 = deriv(t + 0.5 * dt, z + 0.5 * dt * k1)
    k3 = deriv(t + 0.5 * dt, z + 0.5 * dt * k2)
    k4 = deriv(t + dt, z + dt * k3)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise NonFiniteState(f"non-finite derivative at t={t:.6g}")
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def gaussian_noise(rng: np.random.Generator, variance: float, size=None):
    """Zero-mean normal sample(s) with the given variance."""
    if variance < 0.0:
        raise ValueError("variance must be >= 0")
    if variance == 0.0:
        return 0.0 if size is None else np.zeros(size)
    return rng.normal(0.0, np.sqrt(variance), size=size)
