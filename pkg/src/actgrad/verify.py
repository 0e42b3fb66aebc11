"""Identity suite over bundled and random tabular MDPs.

Each check returns a :class:`Check` carrying the worst observed error and
its tolerance; :func:`run_suite` is what ``actgrad verify`` prints.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional

import numpy as np

from . import mdp_oracle as mo
from .policy import BehaviorPolicy


@dataclass
class Check:
    name: str
    worst: float
    tol: float
    cases: int

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<34} max={self.worst:.3e}  tol={self.tol:.0e}  cases={self.cases}"


def fixture_mdps() -> dict:
    out = {}
    for entry in sorted(resources.files("actgrad.data").iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".json"):
            out[entry.name[:-5]] = mo.MdpSpec.from_json(entry.read_text())
    return out


def random_cases(seeds: Iterable[int], states=(2, 3, 4), actions=(2, 3)):
    """Yield ``(mdp, theta, behavior_matrix)`` triples, one per seed."""
    for seed in seeds:
        rng = np.random.default_rng(seed)
        S = int(rng.choice(states))
        A = int(rng.choice(actions))
        mdp = mo.random_mdp(rng, S, A, gamma=float(rng.uniform(0.5, 0.95)))
        theta = rng.normal(scale=1.5, size=S * A)
        b = rng.dirichlet(np.full(A, 2.0), size=S)
        yield mdp, theta, b


def lemma1(cases) -> Check:
    worst, n = 0.0, 0
    for mdp, theta, b in cases:
        worst = max(worst, mo.lemma1_check(mdp, theta, b)["residual"])
        n += 1
    return Check("lemma1 |w* - G+ grad|_inf", worst, 1e-8, n)


def actgrad_direction(cases) -> Check:
    worst, n = 0.0, 0
    for mdp, theta, b in cases:
        q = mo.exact_quantities(mdp, theta, b)
        step = mo.expected_actgrad_step(mdp, theta, b, q.omega_star, d_b=q.d_b)
        worst = max(worst, float(np.max(np.abs(step - q.grad))))
        n += 1
    return Check("actgrad E[phi psi psi.w*] = grad", worst, 1e-8, n)


def decomposition(cases, h: float = 1e-5) -> Check:
    worst, n = 0.0, 0
    for mdp, theta, b in cases:
        worst = max(worst, mo.full_gradient_decomposition_check(mdp, theta, b, h=h)["residual"])
        n += 1
    return Check("gradient decomposition residual", worst, 1e-6, n)


def fisher_psd(cases) -> Check:
    worst, n = 0.0, 0
    for mdp, theta, b in cases:
        G = mo.fisher_exact(mdp, theta, b)
        asym = float(np.max(np.abs(G - G.T)))
        neg = max(0.0, -float(np.linalg.eigvalsh(G).min()))
        worst = max(worst, asym, neg)
        n += 1
    return Check("fisher symmetric PSD", worst, 1e-12, n)


def bellman(cases) -> Check:
    worst, n = 0.0, 0
    for mdp, theta, _ in cases:
        pi = mo.tabular_policy(theta, mdp.num_states, mdp.num_actions)
        V = mo.solve_v(mdp, pi)
        Q = mo.solve_q(mdp, V)
        live = ~mdp.terminal
        resid = np.abs((pi * Q).sum(axis=1) - V)[live]
        worst = max(worst, float(resid.max()) if resid.size else 0.0)
        n += 1
    return Check("bellman residual", worst, 1e-10, n)


def run_suite(seeds: int = 100, fixtures: Optional[dict] = None) -> list:
    fixtures = fixture_mdps() if fixtures is None else fixtures
    cases = []
    for i, mdp in enumerate(fixtures.values()):
        rng = np.random.default_rng(1000 + i)
        theta = rng.normal(size=mdp.param_dim)
        pi = mo.tabular_policy(theta, mdp.num_states, mdp.num_actions)
        cases.append((mdp, theta, mo.behavior_matrix(BehaviorPolicy("epsilon-mixture", 0.1), pi)))
    cases += list(random_cases(range(seeds)))
    three_state = [c for c in cases if c[0].num_states == 3]
    return [
        lemma1(cases),
        actgrad_direction(cases),
        decomposition(three_state),
        fisher_psd(cases),
        bellman(cases),
    ]
