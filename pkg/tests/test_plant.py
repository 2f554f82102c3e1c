import math

import numpy as np
import pytest

from homcontrol.plant import (SingularDecoupling, decoupling_matrix, feedback_linearize_input,
                              lie_derivative, relative_degree_probe)
from homcontrol.plants import PLANTS, build_plant

X_FOLD = 1.0 / math.sqrt(3.0)


def test_registry():
    assert set(PLANTS) == {"scalar_cubic", "mimo_toy", "induction_motor"}
    with pytest.raises(KeyError):
        build_plant("pendulum")


def test_scalar_lie_g():
    sys = build_plant("scalar_cubic")
    assert lie_derivative(sys, 0, 0, [1.0], 1) == pytest.approx(2.0)
    assert lie_derivative(sys, 0, 0, [X_FOLD], 1) == pytest.approx(0.0, abs=1e-12)


def test_hooks_match_finite_differences():
    rng = np.random.default_rng(3)
    for pid in ("scalar_cubic", "mimo_toy"):
        sys = build_plant(pid)
        for x in sys.box.sample(rng, 5):
            for j, r in enumerate(sys.rel_degrees):
                for which in ["f"] + list(range(sys.m)):
                    hook = lie_derivative(sys, which, j, x, r)
                    fd = lie_derivative(sys, which, j, x, r, use_hook=False)
                    assert hook == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_toy_decoupling():
    sys = build_plant("mimo_toy")
    A, B = decoupling_matrix(sys, [1.0, 1.0])
    g22 = 4 * math.cos(2) - 2 * math.sin(2)
    np.testing.assert_allclose(A, [[2.0, 0.0], [0.0, g22]], atol=1e-9)
    assert g22 == pytest.approx(-3.4832, abs=1e-4)
    np.testing.assert_allclose(B, [2.0, g22], atol=1e-9)


def test_relative_degree_probe():
    assert relative_degree_probe(build_plant("mimo_toy"), [1.0, 1.0]) == [1, 1]
    toy = build_plant("mimo_toy")
    assert relative_degree_probe(toy, [X_FOLD, 1.0], max_order=1) == [0, 1]
    # the input reappears one derivative later
    assert relative_degree_probe(toy, [X_FOLD, 1.0]) == [2, 1]
    motor = build_plant("induction_motor")
    assert relative_degree_probe(motor, [100.0, 0.5, 5.0, 3.0]) == [2, 2]


def test_feedback_linearize_toy():
    sys = build_plant("mimo_toy")
    u = feedback_linearize_input(sys, [1.0, 1.0], [0.0, 0.0])
    np.testing.assert_allclose(u, [-1.0, -1.0], atol=1e-9)
    with pytest.raises(SingularDecoupling):
        feedback_linearize_input(sys, [X_FOLD, 0.0], [0.0, 0.0])
