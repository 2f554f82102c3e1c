"""Bundled example plants and the plant registry."""

from __future__ import annotations

import math

import numpy as np

from .plant import AffineSystem, OperatingBox


def scalar_cubic(params: dict | None = None) -> AffineSystem:
    """``xdot = u``, ``y = x (x^2 - 1) + 1``: limit points at ``x = +-1/sqrt(3)``."""

    def h(x):
        return np.array([x[0] * (x[0] ** 2 - 1.0) + 1.0])

    def lie(which, j, order, x):
        if which == "f":
            return 0.0
        if order == 1:
            return 3.0 * x[0] ** 2 - 1.0
        return 0.0

    return AffineSystem(
        name="scalar_cubic", n=1, m=1,
        f=lambda x: np.zeros(1),
        g=[lambda x: np.ones(1)],
        h=h,
        rel_degrees=(1,),
        box=OperatingBox(np.array([-2.0]), np.array([2.0])),
        lie_hook=lie,
        params=dict(params or {}),
    )


def _toy_g11(x1):
    return 3.0 * x1 ** 2 - 1.0


def _toy_g22(x2):
    return 4.0 * x2 ** 3 * math.cos(2.0 * x2) - 2.0 * x2 ** 4 * math.sin(2.0 * x2)


def mimo_toy(params: dict | None = None) -> AffineSystem:
    """Two-input example whose outputs lose relative degree inside ``[0, 1]^2``.

    ``x1dot = u1 + x2^3``, ``x2dot = u2 + x1^3``,
    ``y1 = x1^3 - x1 + 1``, ``y2 = x2^4 cos(2 x2)``.
    """

    def f(x):
        return np.array([x[1] ** 3, x[0] ** 3])

    def h(x):
        return np.array([x[0] ** 3 - x[0] + 1.0, x[1] ** 4 * math.cos(2.0 * x[1])])

    def lie(which, j, order, x):
        if order != 1:
            return None
        grad = _toy_g11(x[0]) if j == 0 else _toy_g22(x[1])
        if which == "f":
            return grad * (x[1] ** 3 if j == 0 else x[0] ** 3)
        return grad if int(which) == j else 0.0

    return AffineSystem(
        name="mimo_toy", n=2, m=2,
        f=f,
        g=[lambda x: np.array([1.0, 0.0]), lambda x: np.array([0.0, 1.0])],
        h=h,
        rel_degrees=(1, 1),
        box=OperatingBox(np.array([-2.0, -2.0]), np.array([2.0, 2.0])),
        lie_hook=lie,
        params=dict(params or {}),
    )


def _motor(params: dict | None = None) -> AffineSystem:
    from .motor import MotorParams, motor_affine_system
    return motor_affine_system(MotorParams.from_mapping(params or {}))


PLANTS = {
    "scalar_cubic": scalar_cubic,
    "mimo_toy": mimo_toy,
    "induction_motor": _motor,
}


def build_plant(plant_id: str, params: dict | None = None) -> AffineSystem:
    try:
        factory = PLANTS[plant_id]
    except KeyError:
        raise KeyError(f"unknown plant {plant_id!r}; known: {sorted(PLANTS)}") from None
    return factory(params)
