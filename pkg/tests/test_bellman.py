import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from berknash.bellman import _q_values, mix_kernel, optimal_actions, solve_bellman, state_classes
from berknash.discretize import FiniteSMDP, TransitionTensor, discretize_smdp
from berknash.errors import ContractionError, DomainError
from berknash.examples import make_example

from bruteforce import optimal_values, value_iteration_loop
from conftest import HAND_DELTA, HAND_Q, HAND_QM, HAND_R


def _single(payoff, delta):
    one = np.ones((1, 1, 1))
    return FiniteSMDP.from_dense(one, one[None], np.full((1, 1, 1), payoff), delta)


def _random(seed, nS, nX, nT=2, delta=0.8):
    rng = np.random.default_rng(seed)
    Q = rng.dirichlet(np.ones(nS), size=(nS, nX))
    Qm = rng.dirichlet(np.ones(nS), size=(nT, nS, nX))
    R = rng.normal(size=(nS, nX, nS))
    return Q, Qm, R, FiniteSMDP.from_dense(Q, Qm, R, delta)


class TestSolveBellman:
    def test_zero_payoff(self, ar1_small):
        V = solve_bellman(ar1_small, ar1_small.Q_true, 1e-8)
        assert V.iterations == 1
        np.testing.assert_array_equal(V.values, 0.0)

    def test_geometric_series(self):
        f = _single(1.0, 0.9)
        V = solve_bellman(f, f.Q_true, 1e-10)
        assert V.values[0] == pytest.approx(10.0, abs=1e-10)

    def test_bounded_norm(self, hand):
        V = solve_bellman(hand, hand.Q_true, 1e-10)
        assert np.abs(V.values).max() <= np.abs(HAND_R).max() / (1 - HAND_DELTA) + 1e-12

    def test_hand_against_policy_enumeration(self, hand):
        for t in range(2):
            V = solve_bellman(hand, mix_kernel(np.eye(2)[t], hand), 1e-10)
            want, Qv = optimal_values(HAND_QM[t], HAND_R, HAND_DELTA)
            np.testing.assert_allclose(V.values, want, atol=1e-10)
            np.testing.assert_allclose(V.q_values, Qv, atol=1e-10)

    def test_against_loop(self):
        Q, _, R, f = _random(11, 5, 3, delta=0.9)
        V = solve_bellman(f, f.Q_true, 1e-10)
        want = value_iteration_loop(Q, R, 0.9, 400)
        np.testing.assert_allclose(V.values, want, atol=1e-8)

    def test_error_bound(self):
        Q, _, R, f = _random(5, 4, 3, delta=0.95)
        exact, _ = optimal_values(Q, R, 0.95)
        for eps in (1e-2, 1e-4, 1e-6):
            V = solve_bellman(f, f.Q_true, eps)
            assert np.abs(V.values - exact).max() <= eps
            assert V.sup_residual <= V.threshold

    def test_next_state_payoff_dominant_action(self):
        for c0, want in ((1.0, 1.0), (-1.0, -1.0)):
            f = discretize_smdp(make_example("ar1-action", {"c0": c0}), thetas=(2, 2, 2))
            V = solve_bellman(f, f.Q_true, 1e-8)
            pol = optimal_actions(f, f.Q_true, V, 1e-6)
            assert np.all(f.actions[pol.pure()] == want)
            assert all(pol.actions(s) == [int(np.flatnonzero(f.actions == want)[0])] for s in range(f.n_states))

    def test_next_state_payoff_indifferent(self):
        f = discretize_smdp(make_example("ar1-action", {"c0": 0.0}), thetas=(2, 2, 2))
        V = solve_bellman(f, f.Q_true, 1e-9)
        pol = optimal_actions(f, f.Q_true, V, 1e-6)
        assert pol.mask.all()
        assert V.growth is not None and V.growth[1] == pytest.approx(1 / (1 - 0.9))

    def test_singleton_action(self, ar1_small):
        V = solve_bellman(ar1_small, ar1_small.Q_true, 1e-8)
        pol = optimal_actions(ar1_small, ar1_small.Q_true, V)
        assert pol.pure().tolist() == [0] * ar1_small.n_states

    def test_divergence_detected(self, hand):
        bad = TransitionTensor.single(2.0 * hand.Q_true.rows, hand.Q_true.index)
        with pytest.raises(ContractionError):
            solve_bellman(hand, bad, 1e-8)

    def test_bad_eps(self, hand):
        with pytest.raises(DomainError):
            solve_bellman(hand, hand.Q_true, 0.0)

    def test_warm_start_same_answer(self, hand):
        cold = solve_bellman(hand, hand.Q_true, 1e-10)
        warm = solve_bellman(hand, hand.Q_true, 1e-10, V0=cold.values + 3.0)
        np.testing.assert_allclose(warm.values, cold.values, atol=1e-10)

    def test_lumped_states_agree(self):
        f = discretize_smdp(make_example("cost", {"mean": 1.0}), states=(6, 30), actions=9, thetas=(11,))
        reps, inverse = state_classes(f, f.Q_true)
        assert len(reps) < f.n_states
        V = solve_bellman(f, f.Q_true, 1e-10)
        # a full sweep at the lumped fixed point moves nothing
        T = _q_values(f.payoff.expected(f.Q_true), f.Q_true, V.values, f.discount).max(axis=1)
        assert np.abs(T - V.values).max() <= V.threshold * 2


class TestMixKernel:
    def test_point_mass(self, hand):
        np.testing.assert_array_equal(mix_kernel([0.0, 1.0], hand).dense(), HAND_QM[1])

    def test_identical_kernels(self):
        Qm = np.stack([HAND_QM[0], HAND_QM[0]])
        f = FiniteSMDP.from_dense(HAND_Q, Qm, HAND_R, 0.5)
        np.testing.assert_allclose(mix_kernel([0.5, 0.5], f).dense(), HAND_QM[0], rtol=0, atol=1e-16)

    def test_gaussian_mixture_by_hand(self):
        from berknash.model import build_smdp

        from conftest import ar1_document

        doc = ar1_document(cells=3, radius=3.0).replace("grid(0, 1, 11)", "grid(0.4, 0.6, 2)").replace(
            "grid(0.25, 1, 4)", "grid(1, 1, 1)"
        )
        f = discretize_smdp(build_smdp(doc))
        Qbar = mix_kernel([0.5, 0.5], f).dense()
        Q0, Q1 = f.Q_model.theta(0).dense(), f.Q_model.theta(1).dense()
        for s in range(3):
            for c in range(3):
                assert Qbar[s, 0, c] == pytest.approx(0.5 * Q0[s, 0, c] + 0.5 * Q1[s, 0, c], rel=1e-15)
        np.testing.assert_allclose(Qbar.sum(axis=-1), 1.0, atol=1e-12)
        # symmetric grid: the mixed row at the center cell stays centered
        assert Qbar[1, 0, 0] == pytest.approx(Qbar[1, 0, 2], rel=1e-12)

    def test_not_a_belief(self, hand):
        with pytest.raises(DomainError):
            mix_kernel([0.7, 0.7], hand)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), nS=st.integers(1, 5), nX=st.integers(1, 4), delta=st.floats(0.1, 0.95))
def test_contraction(seed, nS, nX, delta):
    Q, _, R, f = _random(seed, nS, nX, delta=delta)
    rng = np.random.default_rng(seed + 1)
    reward = f.payoff.expected(f.Q_true)
    V, W = rng.normal(size=nS) * 5, rng.normal(size=nS) * 5
    TV = _q_values(reward, f.Q_true, V, delta).max(axis=1)
    TW = _q_values(reward, f.Q_true, W, delta).max(axis=1)
    assert np.abs(TV - TW).max() <= (delta + 1e-12) * np.abs(V - W).max() + 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), nS=st.integers(1, 5), nX=st.integers(1, 4))
def test_monotone_in_payoff(seed, nS, nX):
    Q, Qm, R, f = _random(seed, nS, nX)
    bump = np.abs(np.random.default_rng(seed + 2).normal(size=R.shape))
    g = FiniteSMDP.from_dense(Q, Qm, R + bump, 0.8)
    V = solve_bellman(f, f.Q_true, 1e-10).values
    W = solve_bellman(g, g.Q_true, 1e-10).values
    assert np.all(W >= V - 2e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), nS=st.integers(1, 5), nX=st.integers(1, 4), c=st.floats(-5, 5))
def test_constant_shift(seed, nS, nX, c):
    Q, Qm, R, f = _random(seed, nS, nX)
    g = FiniteSMDP.from_dense(Q, Qm, R + c, 0.8)
    Vf = solve_bellman(f, f.Q_true, 1e-11)
    Vg = solve_bellman(g, g.Q_true, 1e-11)
    np.testing.assert_allclose(Vg.values, Vf.values + c / 0.2, atol=1e-9)
    assert np.array_equal(
        optimal_actions(f, f.Q_true, Vf, 1e-6).mask, optimal_actions(g, g.Q_true, Vg, 1e-6).mask
    ) or np.abs(Vf.q_values.max(axis=1, keepdims=True) - Vf.q_values - 1e-6).min() < 1e-8
