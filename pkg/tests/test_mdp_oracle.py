import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actgrad import mdp_oracle as mo
from actgrad.policy import BehaviorPolicy
from actgrad.verify import fixture_mdps, random_cases, run_suite


def rand_policy(rng, S, A):
    return rng.dirichlet(np.ones(A), size=S)


class TestMdpSpec:
    def test_rejects_bad_tensors(self):
        with pytest.raises(mo.OracleError):
            mo.MdpSpec(np.full((2, 2, 2), 0.6), np.zeros((2, 2)), 0.9)
        with pytest.raises(mo.OracleError):
            mo.MdpSpec(np.full((2, 2, 2), 0.5), np.zeros((2, 3)), 0.9)
        with pytest.raises(mo.OracleError):
            mo.MdpSpec(np.full((2, 2, 2), 0.5), np.zeros((2, 2)), 1.1)

    def test_json_round_trip(self):
        rng = np.random.default_rng(0)
        mdp = mo.random_mdp(rng, 3, 2, gamma=0.8)
        mdp.terminal = np.array([False, False, True])
        back = mo.MdpSpec.from_json(mdp.to_json())
        assert np.array_equal(back.P, mdp.P) and np.array_equal(back.R, mdp.R)
        assert back.gamma == mdp.gamma and np.array_equal(back.terminal, mdp.terminal)
        assert np.array_equal(back.initial, mdp.initial)

    def test_bundled_fixtures_load(self):
        fx = fixture_mdps()
        assert {"random2", "random3", "random4", "chain3"} <= set(fx)
        assert fx["chain3"].terminal.any()


class TestSolveV:
    def test_myopic(self):
        rng = np.random.default_rng(1)
        mdp = mo.random_mdp(rng, 4, 3, gamma=0.0)
        pi = rand_policy(rng, 4, 3)
        assert np.allclose(mo.solve_v(mdp, pi), (pi * mdp.R).sum(axis=1), atol=1e-15)

    def test_geometric_series(self):
        mdp = mo.MdpSpec(np.ones((1, 1, 1)), np.ones((1, 1)), 0.9)
        assert mo.solve_v(mdp, np.ones((1, 1)))[0] == pytest.approx(10.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_value_iteration(self, seed):
        rng = np.random.default_rng(seed)
        mdp = mo.random_mdp(rng, 2, 2)
        pi = rand_policy(rng, 2, 2)
        V = mo.solve_v(mdp, pi)
        Q_vi = mo.value_iteration(mdp, pi)
        assert np.max(np.abs((pi * Q_vi).sum(axis=1) - V)) <= 1e-8
        assert np.max(np.abs(mo.solve_q(mdp, V) - Q_vi)) <= 1e-8

    def test_bellman_residual(self):
        for mdp, theta, _ in random_cases(range(30)):
            pi = mo.tabular_policy(theta, mdp.num_states, mdp.num_actions)
            V = mo.solve_v(mdp, pi)
            Q = mo.solve_q(mdp, V)
            assert np.max(np.abs(Q - (mdp.R + mdp.gamma * mdp.P @ V))) <= 1e-10

    def test_singular_system(self):
        mdp = mo.MdpSpec(np.ones((1, 1, 1)), np.ones((1, 1)), 1.0)
        with pytest.raises(mo.OracleError):
            mo.solve_v(mdp, np.ones((1, 1)))

    def test_gamma_one_with_termination(self):
        P = np.zeros((2, 1, 2))
        P[0, 0, 1] = 1.0
        P[1, 0, 1] = 1.0
        mdp = mo.MdpSpec(P, np.array([[3.0], [0.0]]), 1.0, terminal=[False, True])
        assert np.array_equal(mo.solve_v(mdp, np.ones((2, 1))), [3.0, 0.0])


class TestBehaviorDistribution:
    def test_symmetric_chain(self):
        P = np.zeros((2, 1, 2))
        P[:, 0, :] = [[0.3, 0.7], [0.7, 0.3]]
        d = mo.behavior_distribution_exact(mo.MdpSpec(P, np.zeros((2, 1)), 0.9), np.ones((2, 1)))
        assert np.allclose(d, [0.5, 0.5], atol=1e-12)

    def test_self_loops_with_restart(self):
        P = np.zeros((3, 1, 3))
        for s in range(3):
            P[s, 0, s] = 1.0
        init = np.array([0.2, 0.5, 0.3])
        mdp = mo.MdpSpec(P, np.zeros((3, 1)), 0.9, initial=init)
        d = mo.behavior_distribution_exact(mdp, np.ones((3, 1)), restart=0.1)
        assert np.allclose(d, init, atol=1e-10)
        with pytest.raises(mo.OracleError):
            mo.behavior_distribution_exact(mdp, np.ones((3, 1)))

    def test_rejects_zero_behavior(self):
        mdp = mo.random_mdp(np.random.default_rng(0), 2, 2)
        with pytest.raises(mo.OracleError):
            mo.behavior_distribution_exact(mdp, np.array([[1.0, 0.0], [0.5, 0.5]]))

    def test_monte_carlo_visitation(self):
        rng = np.random.default_rng(3)
        mdp = mo.random_mdp(rng, 4, 2)
        b = rand_policy(rng, 4, 2)
        d = mo.behavior_distribution_exact(mdp, b)
        T = np.einsum("sa,sat->st", b, mdp.P)
        cum = np.cumsum(T, axis=1)
        chains, steps, burn = 2000, 5000, 50
        s = rng.integers(0, 4, size=chains)
        counts = np.zeros(4)
        for k in range(burn + steps):
            u = rng.random(chains)
            s = np.minimum((u[:, None] > cum[s]).sum(axis=1), 3)
            if k >= burn:
                counts += np.bincount(s, minlength=4)
        assert np.max(np.abs(counts / counts.sum() - d)) <= 1e-3

    def test_terminal_states_restart(self):
        mdp = fixture_mdps()["chain3"]
        b = np.full((mdp.num_states, mdp.num_actions), 1.0 / mdp.num_actions)
        d = mo.behavior_distribution_exact(mdp, b)
        assert d.sum() == pytest.approx(1.0, abs=1e-12) and np.all(d > 0)


class TestGradient:
    def test_on_policy_reduction(self):
        rng = np.random.default_rng(4)
        mdp = mo.random_mdp(rng, 3, 2)
        theta = rng.normal(size=6)
        pi = mo.tabular_policy(theta, 3, 2)
        g = mo.offpolicy_gradient_exact(mdp, theta, pi)
        d = mo.behavior_distribution_exact(mdp, pi)
        Q = mo.solve_q(mdp, mo.solve_v(mdp, pi))
        psi = mo.score_tensor(pi)
        direct = np.einsum("s,sa,sak,sa->k", d, pi, psi, Q)
        assert np.max(np.abs(g - direct)) <= 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_importance_cancellation(self, seed):
        rng = np.random.default_rng(seed)
        mdp = mo.random_mdp(rng, 3, 2)
        theta = rng.normal(size=6)
        b = rand_policy(rng, 3, 2) * 0.9 + 0.05
        pi = mo.tabular_policy(theta, 3, 2)
        d = mo.behavior_distribution_exact(mdp, b)
        g = mo.offpolicy_gradient_exact(mdp, theta, b, d_b=d)
        Q = mo.solve_q(mdp, mo.solve_v(mdp, pi))
        assert np.max(np.abs(g - np.einsum("s,sa,sak,sa->k", d, pi, mo.score_tensor(pi), Q))) <= 1e-12

    def test_saturated_optimal_policy(self):
        rng = np.random.default_rng(5)
        mdp = mo.random_mdp(rng, 3, 2)
        best = mo.value_iteration(mdp).argmax(axis=1)
        prefs = np.where(np.arange(2)[None, :] == best[:, None], 20.0, -20.0)
        theta = prefs.T.ravel()
        g = mo.offpolicy_gradient_exact(mdp, theta, BehaviorPolicy("uniform"))
        assert np.linalg.norm(g) <= 1e-6

    def test_decomposition_random(self):
        worst = 0.0
        for mdp, theta, b in random_cases(range(20), states=(3,)):
            worst = max(worst, mo.full_gradient_decomposition_check(mdp, theta, b)["residual"])
        assert worst <= 1e-6

    def test_decomposition_symmetric_zero(self):
        P = np.zeros((2, 2, 2))
        P[:, :, :] = 0.5
        mdp = mo.MdpSpec(P, np.ones((2, 2)), 0.9)
        rep = mo.full_gradient_decomposition_check(mdp, np.zeros(4), BehaviorPolicy("uniform"))
        assert np.max(np.abs(rep["full"])) <= 1e-8
        assert np.max(np.abs(rep["policy_gradient_term"] + rep["action_value_gradient_term"])) <= 1e-8

    def test_decomposition_myopic(self):
        rng = np.random.default_rng(6)
        mdp = mo.random_mdp(rng, 3, 2, gamma=0.0)
        rep = mo.full_gradient_decomposition_check(mdp, rng.normal(size=6), BehaviorPolicy("uniform"))
        assert np.max(np.abs(rep["action_value_gradient_term"])) == 0.0
        assert rep["residual"] <= 1e-8


class TestFisher:
    @pytest.mark.parametrize("p", [0.5, 0.2, 0.9])
    def test_single_state_closed_form(self, p):
        mdp = mo.MdpSpec(np.ones((1, 2, 1)), np.zeros((1, 2)), 0.9)
        theta = np.array([np.log(p / (1 - p)), 0.0])
        G = mo.fisher_exact(mdp, theta, BehaviorPolicy("uniform"))
        ev = np.linalg.eigvalsh(G)
        assert ev[0] == pytest.approx(0.0, abs=1e-15)
        assert ev[1] == pytest.approx(2 * p * (1 - p), rel=1e-12)
        assert np.linalg.matrix_rank(G) == 1

    def test_psd(self):
        for mdp, theta, b in random_cases(range(50)):
            G = mo.fisher_exact(mdp, theta, b)
            assert np.array_equal(G, G.T) or np.max(np.abs(G - G.T)) <= 1e-15
            assert np.linalg.eigvalsh(G).min() >= -1e-12


class TestNaturalGradientIdentity:
    def test_random(self):
        worst = 0.0
        for mdp, theta, b in random_cases(range(100)):
            worst = max(worst, mo.lemma1_check(mdp, theta, b)["residual"])
        assert worst <= 1e-8

    def test_on_policy(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            mdp = mo.random_mdp(rng, 3, 2)
            theta = rng.normal(size=6)
            pi = mo.tabular_policy(theta, 3, 2)
            assert mo.lemma1_check(mdp, theta, pi)["residual"] <= 1e-8

    def test_one_dimensional_span(self):
        mdp = mo.MdpSpec(np.ones((1, 2, 1)), np.array([[1.0, -1.0]]), 0.5)
        rep = mo.lemma1_check(mdp, np.array([0.3, -0.2]), BehaviorPolicy("uniform"))
        assert rep["residual"] <= 1e-12
        # omega* lies in the span of the scores, orthogonal to the constant shift
        assert abs(rep["omega_star"].sum()) <= 1e-12

    def test_identity_rearranged(self):
        for mdp, theta, b in random_cases(range(20)):
            rep = mo.lemma1_check(mdp, theta, b)
            assert np.max(np.abs(rep["fisher"] @ rep["omega_star"] - rep["gradient"])) <= 1e-10


def test_verify_suite_passes():
    checks = run_suite(seeds=20)
    assert all(c.passed for c in checks), [c.line() for c in checks]
