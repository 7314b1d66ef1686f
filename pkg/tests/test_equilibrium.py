import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from berknash.discretize import FiniteSMDP, discretize_smdp
from berknash.equilibrium import (
    Tolerances,
    ladder_diagnose,
    lyapunov_check,
    solve_berk_nash,
    verify_equilibrium,
    with_tolerances,
)
from berknash.errors import DomainError
from berknash.examples import make_example
from berknash.stationary import stationary_distribution, tv

from bruteforce import mesh_equilibria
from conftest import HAND_DELTA, HAND_Q, HAND_QM, HAND_R


def _theta_index(f, theta):
    return int(np.flatnonzero(np.all(np.isclose(f.thetas, theta), axis=1))[0])


@pytest.fixture(scope="module")
def ar1_solution(ar1_full):
    return solve_berk_nash(ar1_full)


@pytest.fixture(scope="module")
def hand_solution(hand):
    return solve_berk_nash(hand)


class TestSolve:
    def test_ar1_correctly_specified(self, ar1_full, ar1_solution):
        rep = ar1_solution
        assert rep.converged
        t = _theta_index(ar1_full, [0.5, 1.0])
        assert rep.nu[t] == pytest.approx(1.0)
        mS = stationary_distribution(ar1_full.Q_true, np.ones((ar1_full.n_states, 1))).marginal
        assert tv(rep.marginal, mS) < 1e-8
        assert rep.singleton_band

    def test_gaps_within_tolerances(self, ar1_solution):
        t = ar1_solution.tolerances
        assert ar1_solution.optimality_gap <= t.optimality * (1 + ar1_solution.value_scale)
        assert ar1_solution.belief_gap <= t.belief * (1 + abs(ar1_solution.kl_min))
        assert ar1_solution.stationarity_residual <= t.stationarity

    def test_dominant_action(self):
        f = discretize_smdp(make_example("ar1-action", {"c0": 1.0}))
        rep = solve_berk_nash(f)
        assert rep.converged
        top = int(np.argmax(f.actions))
        assert rep.m[:, top].sum() == pytest.approx(1.0, abs=1e-12)
        t = _theta_index(f, [0.5, 1.0, 1.0])
        assert rep.nu[t] == pytest.approx(1.0)

    def test_bad_damping(self, hand):
        with pytest.raises(DomainError):
            solve_berk_nash(hand, damping=0.0)

    def test_restarts_deterministic(self, hand):
        a = solve_berk_nash(hand, restarts=2, seed=4)
        b = solve_berk_nash(hand, restarts=2, seed=4)
        np.testing.assert_array_equal(a.m, b.m)
        np.testing.assert_array_equal(a.nu, b.nu)


class TestVerify:
    def test_round_trip(self, ar1_full, ar1_solution):
        again = verify_equilibrium(ar1_full, ar1_solution.m, ar1_solution.nu, ar1_solution.tolerances)
        assert again.converged
        assert abs(again.optimality_gap - ar1_solution.optimality_gap) <= 1e-12
        assert abs(again.belief_gap - ar1_solution.belief_gap) <= 1e-12
        assert abs(again.stationarity_residual - ar1_solution.stationarity_residual) <= 1e-12

    def test_wrong_belief(self, ar1_full, ar1_solution):
        nu = np.zeros(ar1_full.n_theta)
        nu[_theta_index(ar1_full, [0.9, 1.0])] = 1.0
        rep = verify_equilibrium(ar1_full, ar1_solution.m, nu)
        assert rep.belief_gap > 0.01
        assert not rep.converged

    def test_uniform_not_stationary(self, ar1_full, ar1_solution):
        m = np.full((ar1_full.n_states, 1), 1.0 / ar1_full.n_states)
        rep = verify_equilibrium(ar1_full, m, ar1_solution.nu)
        assert rep.stationarity_residual > 0.1

    def test_hand_round_trip(self, hand, hand_solution):
        rep = verify_equilibrium(hand, hand_solution.m, hand_solution.nu)
        assert rep.converged

    def test_payoff_scaling(self, hand, hand_solution):
        for c in (0.1, 3.0, 250.0):
            g = FiniteSMDP.from_dense(HAND_Q, HAND_QM, c * HAND_R, HAND_DELTA)
            rep = verify_equilibrium(g, hand_solution.m, hand_solution.nu)
            assert rep.converged
            assert rep.optimality_gap == pytest.approx(c * hand_solution.optimality_gap, abs=1e-9 * c)

    def test_with_tolerances(self):
        t = with_tolerances(Tolerances(), optimality=1e-4, belief=None)
        assert t.optimality == 1e-4 and t.belief == 1e-8
        assert t.eps_V() == pytest.approx(1e-4 / 8)


def _permute(s_perm, x_perm, t_perm):
    Q = HAND_Q[s_perm][:, x_perm][:, :, s_perm]
    Qm = HAND_QM[t_perm][:, s_perm][:, :, x_perm][:, :, :, s_perm]
    R = HAND_R[s_perm][:, x_perm][:, :, s_perm]
    return FiniteSMDP.from_dense(Q, Qm, R, HAND_DELTA)


@settings(max_examples=16, deadline=None)
@given(
    s_perm=st.permutations([0, 1]),
    x_perm=st.permutations([0, 1]),
    t_perm=st.permutations([0, 1]),
    seed=st.integers(0, 2**32 - 1),
)
def test_permutation_equivariance(s_perm, x_perm, t_perm, seed):
    rng = np.random.default_rng(seed)
    m = rng.dirichlet(np.ones(4)).reshape(2, 2)
    nu = rng.dirichlet(np.ones(2))
    hand = FiniteSMDP.from_dense(HAND_Q, HAND_QM, HAND_R, HAND_DELTA)
    base = verify_equilibrium(hand, m, nu)
    perm = verify_equilibrium(_permute(s_perm, x_perm, t_perm), m[s_perm][:, x_perm], nu[t_perm])
    assert perm.optimality_gap == pytest.approx(base.optimality_gap, abs=1e-9)
    assert perm.belief_gap == pytest.approx(base.belief_gap, abs=1e-12)
    assert perm.stationarity_residual == pytest.approx(base.stationarity_residual, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(0.01, 100))
def test_scaling_keeps_optimal_set(seed, c):
    from berknash.bellman import mix_kernel, optimal_actions, solve_bellman

    rng = np.random.default_rng(seed)
    R = rng.integers(-3, 4, size=(2, 2, 2)).astype(float)
    nu = rng.dirichlet(np.ones(2))
    sets = []
    for scale in (1.0, c):
        f = FiniteSMDP.from_dense(HAND_Q, HAND_QM, scale * R, HAND_DELTA)
        Qbar = mix_kernel(nu, f)
        V = solve_bellman(f, Qbar, 1e-12 * scale)
        sets.append(optimal_actions(f, Qbar, V, 1e-9 * scale).mask)
    np.testing.assert_array_equal(sets[0], sets[1])


@pytest.fixture(scope="module")
def mesh():
    return mesh_equilibria(HAND_Q, HAND_QM, HAND_R, HAND_DELTA, n=200)


class TestHandMesh:
    def test_solver_converged_mixed(self, hand_solution):
        assert hand_solution.converged
        assert 0.05 < hand_solution.nu[1] < 0.95

    def test_matches_mesh(self, hand_solution, mesh):
        grid, score, ms = mesh
        i, j, k = np.unravel_index(np.argmin(score), score.shape)
        h = grid[1] - grid[0]
        assert tv(ms[i, j], hand_solution.m.ravel()) < 2 * h
        assert abs(grid[k] - hand_solution.nu[1]) < 2 * h

    def test_mesh_candidates_cluster(self, hand_solution, mesh):
        # every near-feasible mesh point lies near the solver's answer
        grid, score, ms = mesh
        near = np.argwhere(score <= 10 * score.min() + 1e-3)
        for i, j, k in near:
            assert tv(ms[i, j], hand_solution.m.ravel()) < 0.05
            assert abs(grid[k] - hand_solution.nu[1]) < 0.05


class TestLyapunov:
    def test_stable(self):
        res = lyapunov_check(make_example("ar1"))
        assert res.passed
        assert res.alpha == pytest.approx(0.5, abs=1e-6)
        assert res.beta == pytest.approx(math.sqrt(2 / math.pi), rel=1e-6)

    @pytest.mark.parametrize("a0", [1.0, 1.2])
    def test_unstable(self, a0):
        res = lyapunov_check(make_example("ar1", {"a0": a0}))
        assert not res.passed
        assert res.witness is not None
        state, action, ratio = res.witness
        assert ratio >= 1.0
        if a0 > 1:
            assert ratio > 1.1
            assert abs(state[0]) > 5

    def test_folded_normal_oracle(self):
        from scipy.stats import foldnorm

        res = lyapunov_check(make_example("ar1", {"a0": 1.2}), sample_states=[0.5, 3.0])
        for s, d in zip([0.5, 3.0], res.drift):
            mu = 1.2 * s
            assert d == pytest.approx(foldnorm.mean(mu / 1.0, scale=1.0), rel=1e-10)

    def test_empty_samples(self):
        with pytest.raises(DomainError):
            lyapunov_check(make_example("ar1"), sample_states=[])


class TestLadder:
    def test_stable_equilibrium_found(self):
        rep = ladder_diagnose(make_example("ar1"), n_levels=3, base_radius=5.0)
        assert rep.verdict == "equilibrium-found"
        assert rep.boundary_mass[-1] < 1e-3
        assert rep.boundary_mass[0] > rep.boundary_mass[-1]

    def test_unit_root_escapes(self):
        rep = ladder_diagnose(make_example("ar1", {"a0": 1.0}), n_levels=3, base_radius=5.0)
        assert rep.verdict == "mass-escape"

    def test_compact_single_level(self):
        spec = make_example("cost", {"mean": 1.0, "z_cells": 10, "u_cells": 40, "actions": 21, "theta_points": 41})
        rep = ladder_diagnose(spec, n_levels=4)
        assert len(rep.levels) == 1
        assert rep.verdict == ("equilibrium-found" if rep.top.converged else "undetermined")
