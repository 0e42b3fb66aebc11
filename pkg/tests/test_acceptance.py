"""Acceptance criteria, one test each, at their stated tolerances.

Each test records a ``PASS``/``FAIL`` line that is printed in the pytest
terminal summary (and to stdout when run as ``python tests/test_acceptance.py``).
The two training criteria share one Cart Pole experiment per session.
"""

import math

import numpy as np
import pytest

from actgrad import agents as ag
from actgrad import harness as h
from actgrad import mdp_oracle as mo
from actgrad import policy as pol
from actgrad.features import SparseVec, state_action_features
from actgrad.verify import fixture_mdps, random_cases, run_suite


def _line(ok, label, detail):
    return f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"


@pytest.fixture(scope="module")
def cartpole_stats():
    cfg = h.ExperimentConfig(env="cartpole", agents=[ag.AgentConfig(kind=k) for k in ag.AGENT_KINDS])
    records = h.run_experiment(cfg)
    return {k: h.aggregate(r) for k, r in records.items()}


@pytest.fixture(scope="module")
def lander_runs():
    cfg = h.ExperimentConfig(env="lander", agents=[ag.AgentConfig(kind="actgrad"), ag.AgentConfig(kind="offpac")])
    assert (cfg.trials, cfg.episodes, cfg.train_cap) == (10, 700, 500)
    records = h.run_experiment(cfg)
    return cfg, records


@pytest.mark.slow
def test_criterion_1_cartpole_reproduction(cartpole_stats, report):
    parts, ok = [], True
    for kind in ("offpac", "actgrad"):
        s = cartpole_stats[kind]
        good = s.test_mean >= 190.0 and s.solved_pct >= 95.0
        ok &= good
        parts.append(f"{kind} {s.test_mean:.2f} +- {s.test_stderr:.2f}, solved {s.solved_pct:.1f}%")
    report(_line(ok, "1 cart pole (mean >= 190, solved >= 95%)", "; ".join(parts)))
    assert ok


@pytest.mark.slow
def test_criterion_2_agent_ordering(cartpole_stats, report):
    q = cartpole_stats["qlambda"].test_mean
    gaps = {k: cartpole_stats[k].test_mean - q for k in ("offpac", "actgrad")}
    ok = all(g >= 15.0 for g in gaps.values())
    detail = f"qlambda {q:.2f}; " + ", ".join(f"{k} - qlambda = {g:.2f}" for k, g in gaps.items())
    report(_line(ok, "2 ordering (each actor-critic beats qlambda by >= 15)", detail))
    assert ok


def test_criterion_3_lemma1(report):
    cases = list(random_cases(range(100), states=(2, 3, 4)))
    worst = max(mo.lemma1_check(m, t, b)["residual"] for m, t, b in cases)
    ok = len(cases) >= 100 and worst <= 1e-8
    report(_line(ok, "3 lemma1 |w* - G+ grad|_inf <= 1e-8", f"max {worst:.2e} over {len(cases)} MDPs"))
    assert ok


def test_criterion_4_gradient_decomposition(report):
    cases = list(random_cases(range(50), states=(3,)))
    worst = max(mo.full_gradient_decomposition_check(m, t, b, h=1e-5)["residual"] for m, t, b in cases)
    ok = len(cases) >= 50 and worst <= 1e-6
    report(_line(ok, "4 gradient decomposition residual <= 1e-6 (h = 1e-5)", f"max {worst:.2e} over {len(cases)} seeds"))
    assert ok


def _agent_expected_step(mdp, theta, b, d_b, omega):
    # run the actual agent update on every (s, a, s') and weight by its probability
    S, A = mdp.num_states, mdp.num_actions
    cfg = ag.AgentConfig(kind="actgrad", alpha_theta=1.0, alpha_v=0.0, alpha_w=0.0, gamma=mdp.gamma, lam=0.0)
    total = np.zeros(S * A)
    for s in range(S):
        for a in range(A):
            st = ag.make_agent(cfg, S, A)
            st.theta[:] = theta
            st.critic.omega[:] = omega
            x = SparseVec.onehot(s, S)
            ag.agent_step(st, cfg, ag.Transition(x, a, 0.0, x, True, b[s, a]))
            total += d_b[s] * b[s, a] * (st.theta - theta)
    return total


def test_criterion_5_actgrad_direction(report):
    suite = []
    for i, mdp in enumerate(fixture_mdps().values()):
        rng = np.random.default_rng(1000 + i)
        theta = rng.normal(size=mdp.param_dim)
        pi = mo.tabular_policy(theta, mdp.num_states, mdp.num_actions)
        suite.append((mdp, theta, mo.behavior_matrix(pol.BehaviorPolicy("epsilon-mixture", 0.1), pi)))
    suite += list(random_cases(range(100)))
    worst_closed = worst_agent = 0.0
    for mdp, theta, b in suite:
        q = mo.exact_quantities(mdp, theta, b)
        closed = mo.expected_actgrad_step(mdp, theta, b, q.omega_star, d_b=q.d_b)
        agent = _agent_expected_step(mdp, theta, q.extra["b"], q.d_b, q.omega_star)
        worst_closed = max(worst_closed, float(np.max(np.abs(closed - q.grad))))
        worst_agent = max(worst_agent, float(np.max(np.abs(agent - q.grad))))
    ok = max(worst_closed, worst_agent) <= 1e-8
    report(_line(ok, "5 actgrad E[step | w*] = off-policy gradient within 1e-8",
                 f"closed form {worst_closed:.2e}, agent update {worst_agent:.2e}, {len(suite)} MDPs"))
    assert ok


def test_criterion_6_compatible_features(report):
    rng = np.random.default_rng(6)
    worst_mean = 0.0
    for _ in range(10_000):
        S, A = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        theta = rng.normal(scale=3.0, size=S * A)
        s = int(rng.integers(S))
        feats = [state_action_features(SparseVec.onehot(s, S), a, A) for a in range(A)]
        p = pol.action_probabilities(theta, feats)
        total = sum(p[a] * pol.score(theta, feats, a) for a in range(A))
        worst_mean = max(worst_mean, float(np.max(np.abs(total))))

    worst_fd, h_step = 0.0, 1e-5
    for _ in range(500):
        d, A = 6, int(rng.integers(2, 4))
        feats = [SparseVec.from_dense(rng.normal(size=d)) for _ in range(A)]
        theta = rng.normal(scale=0.5, size=d)
        a = int(rng.integers(A))
        psi = pol.score(theta, feats, a)
        fd = np.empty(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = h_step
            lp = math.log(pol.action_probabilities(theta + e, feats)[a])
            lm = math.log(pol.action_probabilities(theta - e, feats)[a])
            fd[i] = (lp - lm) / (2 * h_step)
        worst_fd = max(worst_fd, float(np.max(np.abs(fd - psi)) / np.max(np.abs(psi))))
    ok = worst_mean <= 1e-12 and worst_fd <= 1e-6
    report(_line(ok, "6 zero-mean scores <= 1e-12 and FD rel. err <= 1e-6",
                 f"zero-mean max {worst_mean:.2e} (10^4 draws), FD max rel {worst_fd:.2e}"))
    assert ok


@pytest.mark.slow
def test_criterion_7_determinism_and_lander(lander_runs, tmp_path, report):
    # byte-identical records: serial vs. maximal concurrency, and a repeat run
    small = h.ExperimentConfig(env="cartpole", agents=[ag.AgentConfig(kind="actgrad")], trials=4,
                               episodes=60, test_episodes=10, seed=11)
    blobs = []
    for i, workers in enumerate((1, 4, 4)):
        recs = h.run_experiment(small, workers=workers)
        path = tmp_path / f"r{i}" / "records.csv"
        h.write_records(recs["actgrad"], path)
        blobs.append(path.read_bytes())
    identical = blobs[0] == blobs[1] == blobs[2]

    cfg, records = lander_runs
    stats = {k: h.aggregate(r) for k, r in records.items()}
    diverged = {k: s.diverged_trials for k, s in stats.items()}
    no_div = not any(diverged.values())
    var = {k: s.trial_variance for k, s in stats.items()}
    variance_note = "met" if var["actgrad"] >= var["offpac"] else "not met (non-blocking)"
    ok = identical and no_div
    detail = (f"records byte-identical {identical}; lander diverged trials {diverged}; "
              f"trial-mean variance actgrad {var['actgrad']:.1f} vs offpac {var['offpac']:.1f}: {variance_note}")
    report(_line(ok, "7 determinism + lander 10x700 without divergence", detail))
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
