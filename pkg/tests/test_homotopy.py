import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from homcontrol.homotopy import (HomotopyState, HSystemMatrices, Mode, ReferenceLinearSystem,
                                 advance_homotopy_state, assemble_h_system, blend_h_system,
                                 continuation_control, equivalent_alpha, h_derivatives,
                                 h_feedback_linearize, homotopy_residual, hybrid_step, landing_cap,
                                 pinned_lambda_top, tangent_parts)
from homcontrol.plant import decoupling_matrix
from homcontrol.plants import build_plant


def hsys(A1, A2, Bv):
    return HSystemMatrices(np.atleast_2d(np.asarray(A1, float)), np.asarray(A2, float),
                           np.asarray(Bv, float))


def test_residual_convex_combination():
    np.testing.assert_allclose(homotopy_residual([1, 0], [0, 2], 0.5), [0.5, 1.0])
    np.testing.assert_allclose(homotopy_residual([3, 4], [0, 2], 0.0), [3, 4])


def test_assemble_at_lambda_zero():
    toy = build_plant("mimo_toy")
    x = np.array([1.0, 1.0])
    ref = ReferenceLinearSystem(([0.5], [-0.25]))
    hm = assemble_h_system(toy, x, ref, HomotopyState(lambda_derivs=[0.0]))
    np.testing.assert_allclose(hm.A1, np.eye(2))
    np.testing.assert_allclose(hm.A2, toy.h(x) - [0.5, -0.25])
    np.testing.assert_allclose(hm.Bv, 0.0)


def test_assemble_relative_degree_one():
    toy = build_plant("mimo_toy")
    x = np.array([0.7, -1.2])
    lam = 0.3
    A, B = decoupling_matrix(toy, x)
    hm = assemble_h_system(toy, x, ReferenceLinearSystem.zeros((1, 1)),
                           HomotopyState(lambda_derivs=[lam]))
    np.testing.assert_allclose(hm.A1, lam * A + (1 - lam) * np.eye(2))
    np.testing.assert_allclose(hm.Bv, lam * B)


def test_blend_second_order_moves_lambda_terms():
    # r = 2: Hdd = (1-l) eta_dd + l ydd + 2 ldot (yd - etad) + ldd (y - eta)
    lam = np.array([0.4, 0.7])
    hm = blend_h_system(lam, [np.array([0.2, -0.1])], [np.array([1.0, 0.5])], (2,),
                        np.array([[3.0]]), np.array([-2.0]))
    assert hm.A1[0, 0] == pytest.approx(0.4 * 3.0 + 0.6)
    assert hm.A2[0] == pytest.approx(0.8)
    assert hm.Bv[0] == pytest.approx(0.4 * -2.0 + 2 * 0.7 * 0.6)


def test_on_manifold_zeroes_h_derivatives():
    y_derivs = [np.array([1.3, -0.4]), np.array([0.2, 2.0])]
    lam = np.array([0.35, 0.8])
    ref = ReferenceLinearSystem.on_manifold(y_derivs, lam)
    for hd in h_derivatives(ref, y_derivs, lam):
        np.testing.assert_allclose(hd, 0.0, atol=1e-14)
    ref0 = ReferenceLinearSystem.on_manifold(y_derivs, [0.0, 1.0])
    np.testing.assert_allclose(ref0.eta, 0.0)


def test_reference_vector_roundtrip():
    ref = ReferenceLinearSystem(([1.0, 2.0], [3.0]))
    back = ReferenceLinearSystem.from_vector(ref.as_vector(), (2, 1))
    np.testing.assert_array_equal(back.as_vector(), [1, 2, 3])
    np.testing.assert_array_equal(ref.rate([7.0, 8.0]), [2, 7, 8])


def test_continuation_coincident_start_moves_forward():
    u, top = continuation_control(hsys(np.eye(2), [0, 0], [0, 0]), 1.0)
    np.testing.assert_allclose(u, 0.0, atol=1e-15)
    assert top == pytest.approx(1.0)


def test_continuation_without_drift_is_pure_tangent():
    hm = hsys([[2.0, 1.0], [0.0, 1.0]], [1.0, -1.0], [0.0, 0.0])
    u, top = continuation_control(hm, 3.0)
    u_hat, l_hat, _, _ = tangent_parts(hm)
    np.testing.assert_allclose(u, 3.0 * u_hat)
    assert top == pytest.approx(3.0 * l_hat)


def test_continuation_solves_h_system():
    hm = hsys([[1.5, 0.2], [-0.3, 0.8]], [0.4, -1.1], [0.7, 0.2])
    u, top = continuation_control(hm, 2.0)
    np.testing.assert_allclose(hm.A1 @ u + hm.A2 * top + hm.Bv, 0.0, atol=1e-12)


def test_h_fblin_at_lambda_zero():
    A2 = np.array([0.3, -2.0])
    u = h_feedback_linearize(hsys(np.eye(2), A2, [0, 0]), -1, [1.0, 4.0])
    np.testing.assert_allclose(u, np.array([1.0, 4.0]) - A2 * -1)


def test_h_fblin_zero_input():
    hm = hsys([[2.0, 0.0], [1.0, 3.0]], [0.5, 1.5], [-1.0, 2.0])
    v = hm.A2 * 1 + hm.Bv
    np.testing.assert_allclose(h_feedback_linearize(hm, 1, v), 0.0, atol=1e-15)


def test_hybrid_unsaturated_equals_fblin():
    hm = hsys([[2.0, 0.0], [1.0, 3.0]], [0.5, 1.5], [-1.0, 2.0])
    hs = HomotopyState(lambda_derivs=[0.2])
    act = hybrid_step(hm, hs, [1.0, -1.0], 20.0)
    np.testing.assert_array_equal(act.u, h_feedback_linearize(hm, 1, [1.0, -1.0]))
    assert act.lambda_top == 1.0 and not act.saturated and act.state.mode is Mode.FBLIN


def test_hybrid_saturated_flips_s():
    hm = hsys([[-0.1]], [1.0], [0.0])
    hs = HomotopyState(lambda_derivs=[0.5], s=1)
    act = hybrid_step(hm, hs, [5.0], 20.0)
    assert act.saturated and act.state.mode is Mode.CONTINUATION
    assert act.lambda_top == -1.0
    assert act.state.s == -1
    np.testing.assert_allclose(act.u, [-10.0])
    np.testing.assert_allclose(hm.A1 @ act.u + hm.A2 * act.lambda_top + hm.Bv, 0.0, atol=1e-12)


def test_hybrid_saturated_keeps_s_forward():
    hm = hsys([[0.1]], [1.0], [0.0])
    act = hybrid_step(hm, HomotopyState(lambda_derivs=[0.5]), [5.0], 20.0)
    assert act.lambda_top == 1.0 and act.state.s == 1
    np.testing.assert_allclose(act.u, [-10.0])


def test_hybrid_switch_back_hysteresis():
    hm = hsys([[1.0]], [0.0], [0.0])
    cont = HomotopyState(lambda_derivs=[0.5], mode=Mode.CONTINUATION)
    assert hybrid_step(hm, cont, [19.0], 20.0).state.mode is Mode.CONTINUATION
    assert hybrid_step(hm, cont, [17.0], 20.0).state.mode is Mode.FBLIN
    assert hybrid_step(hm, cont, [17.0], 20.0, switching=False).state.mode is Mode.CONTINUATION


def test_hybrid_rejects_bad_bound():
    with pytest.raises(ValueError):
        hybrid_step(hsys([[1.0]], [0.0], [0.0]), HomotopyState(), [0.0], 0.0)


finite = st.floats(-5, 5, allow_subnormal=False)


@settings(max_examples=300, deadline=None)
@given(arrays(np.float64, (2, 2), elements=finite), arrays(np.float64, 2, elements=finite),
       arrays(np.float64, 2, elements=finite), arrays(np.float64, 2, elements=st.floats(-100, 100)),
       st.sampled_from([1, -1]), st.sampled_from([Mode.FBLIN, Mode.CONTINUATION]))
def test_hybrid_respects_bound(A1, A2, Bv, v, s, mode):
    hm = HSystemMatrices(A1, A2, Bv)
    assume(np.linalg.svd(hm.stacked, compute_uv=False)[-1] > 1e-3)
    hs = HomotopyState(lambda_derivs=[0.5], s=s, mode=mode)
    act = hybrid_step(hm, hs, v, 20.0)
    assert np.max(np.abs(act.u)) <= 20.0 * (1 + 1e-9)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, (2, 2), elements=finite), arrays(np.float64, 2, elements=finite),
       arrays(np.float64, 2, elements=finite))
def test_continuation_with_equivalent_alpha_matches_fblin(A1, A2, Bv):
    hm = HSystemMatrices(A1, A2, Bv)
    assume(np.linalg.svd(hm.stacked, compute_uv=False)[-1] > 1e-2)
    assume(np.linalg.svd(A1, compute_uv=False)[-1] > 1e-2)
    _, l_hat, _, _ = tangent_parts(hm)
    assume(abs(l_hat) > 1e-3)
    alpha = equivalent_alpha(hm)
    assume(alpha > 0)
    u_c, top = continuation_control(hm, alpha)
    u_f = h_feedback_linearize(hm, np.sign(l_hat), np.zeros(2))
    assert top == pytest.approx(np.sign(l_hat))
    np.testing.assert_allclose(u_c, u_f, atol=1e-8 * max(1.0, np.abs(u_f).max()))


def test_advance_first_order():
    hs = advance_homotopy_state(HomotopyState(lambda_derivs=[0.0]), 1.0, 0.01)
    assert hs.lam == pytest.approx(0.01)


def test_advance_zero_top_freezes_chain_top():
    hs = advance_homotopy_state(HomotopyState(lambda_derivs=[0.2, 0.5]), 0.0, 0.1)
    np.testing.assert_allclose(hs.lambda_derivs, [0.25, 0.5])


def test_advance_clamps_lambda():
    hs = advance_homotopy_state(HomotopyState(lambda_derivs=[1.04]), 1.0, 1.0)
    assert hs.lam == pytest.approx(1.05)
    with pytest.raises(ValueError):
        advance_homotopy_state(HomotopyState(), 1.0, 0.0)


def test_landing_cap_and_pin():
    hs = HomotopyState(lambda_derivs=[0.9])
    assert landing_cap(hs, None) == np.inf
    assert landing_cap(hs, 2.0) == pytest.approx(0.2)
    assert pinned_lambda_top(hs, 2.0) == pytest.approx(0.2)
    assert pinned_lambda_top(HomotopyState(lambda_derivs=[0.1]), 2.0) == 1.0
    assert pinned_lambda_top(HomotopyState(lambda_derivs=[0.9], s=-1), 2.0) == -1.0
    # second order: (s + k)^2 applied to lambda - 1
    hs2 = HomotopyState(lambda_derivs=[0.5, 0.3])
    assert landing_cap(hs2, 3.0) == pytest.approx(-(9 * -0.5 + 6 * 0.3))


def test_state_validation():
    with pytest.raises(ValueError):
        HomotopyState(s=0)
    with pytest.raises(ValueError):
        HomotopyState(alpha=-1.0)
