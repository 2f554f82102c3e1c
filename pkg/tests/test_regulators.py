import numpy as np
import pytest

from homcontrol.integrators import NonFiniteState, gaussian_noise, rk4_step
from homcontrol.regulators import PIState, pi_update


def test_pi_zero():
    out, _ = pi_update(PIState(kp=1.0, ki=1.0), 0.0, 0.0, 0.01)
    assert out == 0.0


def test_pi_proportional():
    out, _ = pi_update(PIState(kp=2.0, ki=0.0), 3.0, 0.0, 0.01)
    assert out == pytest.approx(6.0)


def test_pi_integral_of_constant_error():
    st = PIState(kp=1.0, ki=10.0)
    for _ in range(10):
        out, st = pi_update(st, 1.0, 0.0, 0.01)
    assert out == pytest.approx(2.0)


def test_pi_anti_windup_freezes_integral():
    st = PIState(kp=1.0, ki=10.0, output_limit=1.5)
    for _ in range(100):
        out, st = pi_update(st, 1.0, 0.0, 0.01)
    assert out == 1.5
    assert st.integral < 0.06
    # reversing the error unwinds at once
    out, st = pi_update(st, -1.0, 0.0, 0.01)
    assert out < 0.0


def test_pi_without_anti_windup_accumulates():
    st = PIState(kp=1.0, ki=10.0, output_limit=1.5, anti_windup=False)
    for _ in range(100):
        _, st = pi_update(st, 1.0, 0.0, 0.01)
    assert st.integral == pytest.approx(1.0)


def test_pi_rejects_bad_args():
    with pytest.raises(ValueError):
        pi_update(PIState(1.0, 1.0), 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        PIState(1.0, 1.0, output_limit=0.0)


def test_pi_step_on_current_plant():
    # di/dt = nu - i / tau_1 under PI with Kp/Ki = tau_1: first-order, 5 ms
    tau_1, kp, ki, dt = 0.019940, 200.0, 10030.0, 1e-5
    st, i = PIState(kp, ki), 0.0
    for _ in range(int(0.03 / dt)):
        nu, st = pi_update(st, 1.0, i, dt)
        i += dt * (nu - i / tau_1)
    assert abs(i - 1.0) < 0.01


def test_rk4_examples():
    np.testing.assert_array_equal(rk4_step(lambda t, x: np.zeros(1), [2.0], 0.0, 0.1), [2.0])
    np.testing.assert_allclose(rk4_step(lambda t, x: np.ones(1), [2.0], 0.0, 0.1), [2.1])
    x = rk4_step(lambda t, x: x, [1.0], 0.0, 0.1)
    assert x[0] == pytest.approx(1.105170833, abs=1e-9)
    assert abs(x[0] - np.exp(0.1)) < 8.5e-8


def test_rk4_flags_non_finite():
    with pytest.raises(NonFiniteState):
        rk4_step(lambda t, x: np.array([np.inf]), [0.0], 0.0, 0.1)


def test_noise_zero_variance():
    assert gaussian_noise(np.random.default_rng(0), 0.0) == 0.0
    with pytest.raises(ValueError):
        gaussian_noise(np.random.default_rng(0), -1.0)


def test_noise_moments():
    draws = gaussian_noise(np.random.default_rng(7), 0.005, size=1_000_000)
    assert abs(draws.mean()) < 3 * np.sqrt(0.005 / 1e6)
    assert draws.var() == pytest.approx(0.005, rel=0.05)
