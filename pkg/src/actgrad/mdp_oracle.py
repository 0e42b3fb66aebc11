"""Exact tabular computations for checking the gradient identities.

Everything here works on small MDPs with tabular softmax policies: the
state features are one-hot, so under the block layout the preference of
``(s, a)`` is ``theta[a * S + s]`` and the score vector of ``(s, a)`` is
``e_{a*S+s} - sum_b pi(b|s) e_{b*S+s}``.

Behavior policies are passed either as an ``(S, A)`` probability matrix
or as a :class:`~actgrad.policy.BehaviorPolicy`, which is evaluated
against the target at the given ``theta``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.sparse.csgraph import connected_components

from .policy import BehaviorPolicy

__all__ = [
    "OracleError",
    "MdpSpec",
    "ExactQuantities",
    "random_mdp",
    "tabular_policy",
    "score_tensor",
    "behavior_matrix",
    "solve_v",
    "solve_q",
    "behavior_distribution_exact",
    "objective",
    "offpolicy_gradient_exact",
    "full_gradient_decomposition_check",
    "fisher_exact",
    "compatible_least_squares",
    "lemma1_check",
    "expected_actgrad_step",
    "expected_offpac_step",
    "exact_quantities",
    "value_iteration",
]


class OracleError(ValueError):
    pass


@dataclass
class MdpSpec:
    """Tabular MDP.

    ``P[s, a, s']`` transition probabilities, ``R[s, a]`` expected rewards.
    States flagged ``terminal`` have zero value and, for the behavior
    chain, restart from ``initial``.
    """

    P: np.ndarray
    R: np.ndarray
    gamma: float
    terminal: Optional[np.ndarray] = None
    initial: Optional[np.ndarray] = None

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        if self.P.ndim != 3 or self.P.shape[0] != self.P.shape[2]:
            raise OracleError(f"P must have shape (S, A, S), got {self.P.shape}")
        S, A, _ = self.P.shape
        if self.R.shape != (S, A):
            raise OracleError(f"R must have shape {(S, A)}, got {self.R.shape}")
        if np.any(self.P < 0) or np.max(np.abs(self.P.sum(axis=2) - 1.0)) > 1e-12:
            raise OracleError("each P[s, a, :] must be a probability vector")
        if not 0.0 <= self.gamma <= 1.0:
            raise OracleError(f"gamma must lie in [0, 1], got {self.gamma}")
        self.terminal = (
            np.zeros(S, dtype=bool) if self.terminal is None else np.asarray(self.terminal, dtype=bool)
        )
        self.initial = (
            np.full(S, 1.0 / S) if self.initial is None else np.asarray(self.initial, dtype=float)
        )
        if self.terminal.shape != (S,) or self.initial.shape != (S,):
            raise OracleError("terminal and initial must have one entry per state")
        if abs(self.initial.sum() - 1.0) > 1e-12 or np.any(self.initial < 0):
            raise OracleError("initial must be a probability vector")

    @property
    def num_states(self) -> int:
        return self.P.shape[0]

    @property
    def num_actions(self) -> int:
        return self.P.shape[1]

    @property
    def param_dim(self) -> int:
        return self.num_states * self.num_actions

    def to_json(self) -> str:
        S, A = self.num_states, self.num_actions
        return json.dumps(
            {
                "num_states": S,
                "num_actions": A,
                "gamma": self.gamma,
                "P": self.P.ravel().tolist(),
                "R": self.R.ravel().tolist(),
                "terminal": self.terminal.astype(int).tolist(),
                "initial": self.initial.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "MdpSpec":
        d = json.loads(text)
        S, A = int(d["num_states"]), int(d["num_actions"])
        return cls(
            np.array(d["P"], dtype=float).reshape(S, A, S),
            np.array(d["R"], dtype=float).reshape(S, A),
            float(d["gamma"]),
            terminal=np.array(d.get("terminal", [0] * S), dtype=bool),
            initial=np.array(d["initial"]) if "initial" in d else None,
        )


@dataclass
class ExactQuantities:
    V: np.ndarray
    Q: np.ndarray
    d_b: np.ndarray
    grad: np.ndarray
    G: np.ndarray
    omega_star: np.ndarray
    extra: dict = field(default_factory=dict)


def random_mdp(rng: np.random.Generator, num_states: int, num_actions: int, gamma: float = 0.9) -> MdpSpec:
    P = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    # dirichlet rows can miss 1.0 by a few ulps
    P /= P.sum(axis=2, keepdims=True)
    R = rng.uniform(-1.0, 1.0, size=(num_states, num_actions))
    return MdpSpec(P, R, gamma)


# --------------------------------------------------------------------------
# Policies and scores


def tabular_policy(theta: np.ndarray, num_states: int, num_actions: int) -> np.ndarray:
    """pi[s, a] for the tabular softmax with block-layout parameters."""
    prefs = np.asarray(theta, dtype=float).reshape(num_actions, num_states).T
    z = np.exp(prefs - prefs.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def score_tensor(pi: np.ndarray) -> np.ndarray:
    """psi[s, a, :] for tabular softmax features (shape ``(S, A, S*A)``)."""
    S, A = pi.shape
    psi = np.zeros((S, A, S * A))
    for s in range(S):
        cols = np.arange(A) * S + s
        psi[s][:, cols] = np.eye(A) - pi[s][None, :]
    return psi


def behavior_matrix(behavior: Union[np.ndarray, BehaviorPolicy], pi: np.ndarray) -> np.ndarray:
    if isinstance(behavior, BehaviorPolicy):
        S, A = pi.shape
        if behavior.kind == "uniform":
            return np.full((S, A), 1.0 / A)
        if behavior.kind == "fixed-softmax":
            return tabular_policy(behavior.params, S, A)
        return (1.0 - behavior.epsilon) * pi + behavior.epsilon / A
    b = np.asarray(behavior, dtype=float)
    if b.shape != pi.shape:
        raise OracleError(f"behavior matrix must have shape {pi.shape}, got {b.shape}")
    if np.any(b <= 0.0):
        raise OracleError("behavior policy must be strictly positive")
    return b


# --------------------------------------------------------------------------
# Values and visitation


def solve_v(mdp: MdpSpec, policy: np.ndarray) -> np.ndarray:
    """State values of ``policy`` by a direct solve of (I - gamma P_pi) V = R_pi."""
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (mdp.num_states, mdp.num_actions) or np.any(policy < 0):
        raise OracleError("policy must be a nonnegative (S, A) matrix")
    if np.max(np.abs(policy.sum(axis=1) - 1.0)) > 1e-12:
        raise OracleError("policy rows must sum to 1")
    live = ~mdp.terminal
    P_pi = np.einsum("sa,sat->st", policy, mdp.P)
    R_pi = np.einsum("sa,sa->s", policy, mdp.R)
    P_pi[mdp.terminal] = 0.0
    R_pi[mdp.terminal] = 0.0
    P_pi[:, mdp.terminal] = 0.0
    M = np.eye(mdp.num_states) - mdp.gamma * P_pi
    if np.linalg.cond(M) > 1e12:
        raise OracleError("singular evaluation system (gamma = 1 without reachable termination?)")
    V = np.linalg.solve(M, R_pi)
    V[~live] = 0.0
    resid = np.max(np.abs(M @ V - R_pi))
    if resid > 1e-10 * max(1.0, np.max(np.abs(V))):
        raise OracleError(f"Bellman residual {resid:.3e} too large")
    return V


def solve_q(mdp: MdpSpec, V: np.ndarray) -> np.ndarray:
    nxt = np.where(mdp.terminal, 0.0, V)
    Q = mdp.R + mdp.gamma * mdp.P @ nxt
    Q[mdp.terminal] = 0.0
    return Q


def value_iteration(mdp: MdpSpec, policy: Optional[np.ndarray] = None, iters: int = 10**6, tol: float = 1e-14):
    """Iterative evaluation (of ``policy``) or control (``policy=None``); returns Q.

    Used as an independent check on :func:`solve_v`.
    """
    S, A = mdp.num_states, mdp.num_actions
    Q = np.zeros((S, A))
    live = ~mdp.terminal
    for _ in range(iters):
        V = (Q * policy).sum(axis=1) if policy is not None else Q.max(axis=1)
        V = np.where(live, V, 0.0)
        Q_new = mdp.R + mdp.gamma * mdp.P @ V
        Q_new[mdp.terminal] = 0.0
        if np.max(np.abs(Q_new - Q)) < tol:
            return Q_new
        Q = Q_new
    return Q


def _closed_classes(T: np.ndarray) -> int:
    n, labels = connected_components(T > 0, directed=True, connection="strong")
    closed = 0
    for c in range(n):
        members = labels == c
        if not np.any(T[np.ix_(members, ~members)] > 0):
            closed += 1
    return closed


def behavior_distribution_exact(
    mdp: MdpSpec, behavior: np.ndarray, restart: float = 0.0, tol: float = 1e-12, max_iter: int = 10**6
) -> np.ndarray:
    """Stationary distribution of the chain followed under ``behavior``.

    Terminal states jump to ``mdp.initial``; additionally every step restarts
    from ``mdp.initial`` with probability ``restart``.  Computed by power
    iteration on the lazy chain (same stationary law, aperiodic).
    """
    behavior = np.asarray(behavior, dtype=float)
    if np.any(behavior <= 0.0):
        raise OracleError("behavior policy must be strictly positive")
    T = np.einsum("sa,sat->st", behavior, mdp.P)
    T[mdp.terminal] = mdp.initial
    if restart > 0.0:
        T = (1.0 - restart) * T + restart * mdp.initial[None, :]
    if _closed_classes(T) != 1:
        raise OracleError("behavior chain has no unique stationary distribution; add a restart")
    lazy = 0.5 * (T + np.eye(mdp.num_states))
    d = np.full(mdp.num_states, 1.0 / mdp.num_states)
    for _ in range(max_iter):
        d_new = d @ lazy
        if np.max(np.abs(d_new - d)) < tol:
            return d_new / d_new.sum()
        d = d_new
    raise OracleError("power iteration did not converge")


# --------------------------------------------------------------------------
# Gradients


def _setup(mdp: MdpSpec, theta, behavior):
    S, A = mdp.num_states, mdp.num_actions
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (S * A,):
        raise OracleError(f"theta must have {S * A} components")
    pi = tabular_policy(theta, S, A)
    b = behavior_matrix(behavior, pi)
    return pi, b


def objective(mdp: MdpSpec, theta, d_b: np.ndarray) -> float:
    """J(theta) = sum_s d_b(s) V_pi(s) with the visitation weights held fixed."""
    pi = tabular_policy(theta, mdp.num_states, mdp.num_actions)
    return float(d_b @ solve_v(mdp, pi))


def offpolicy_gradient_exact(mdp: MdpSpec, theta, behavior, d_b: Optional[np.ndarray] = None, restart: float = 0.0):
    """Off-policy gradient sum_s d_b(s) sum_a b(a|s) phi(s,a) psi(s,a) Q_pi(s,a)."""
    pi, b = _setup(mdp, theta, behavior)
    if d_b is None:
        d_b = behavior_distribution_exact(mdp, b, restart)
    Q = solve_q(mdp, solve_v(mdp, pi))
    phi = pi / b
    psi = score_tensor(pi)
    w = d_b[:, None] * b * phi * Q
    return np.einsum("sa,sak->k", w, psi)


def _fd(f, x: np.ndarray, h: float):
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def full_gradient_decomposition_check(mdp: MdpSpec, theta, behavior, h: float = 1e-5, restart: float = 0.0) -> dict:
    """Compare the full gradient of J with its two-term decomposition.

    (i) central differences of ``J(theta) = sum_s d_b(s) V_pi(s)`` with
    ``d_b`` (and ``b``) frozen at ``theta``; (ii) the off-policy gradient
    plus ``E_{d_b, b}[phi grad Q_pi]`` with ``grad Q_pi`` by central
    differences.
    """
    theta = np.asarray(theta, dtype=float)
    S, A = mdp.num_states, mdp.num_actions
    pi, b = _setup(mdp, theta, behavior)
    d_b = behavior_distribution_exact(mdp, b, restart)
    full = _fd(lambda t: objective(mdp, t, d_b), theta, h)
    grad_term = offpolicy_gradient_exact(mdp, theta, b, d_b=d_b)
    dQ = _fd(lambda t: solve_q(mdp, solve_v(mdp, tabular_policy(t, S, A))), theta, h)
    phi = pi / b
    q_term = np.einsum("sa,sak->k", d_b[:, None] * b * phi, dQ)
    recombined = grad_term + q_term
    return {
        "full": full,
        "policy_gradient_term": grad_term,
        "action_value_gradient_term": q_term,
        "residual": float(np.max(np.abs(full - recombined))),
    }


def fisher_exact(mdp: MdpSpec, theta, behavior, d_b: Optional[np.ndarray] = None, restart: float = 0.0) -> np.ndarray:
    """G = sum_s d_b(s) sum_a b(a|s) phi(s,a) psi psi^T."""
    pi, b = _setup(mdp, theta, behavior)
    if d_b is None:
        d_b = behavior_distribution_exact(mdp, b, restart)
    psi = score_tensor(pi)
    w = d_b[:, None] * b * (pi / b)
    return np.einsum("sa,saj,sak->jk", w, psi, psi)


def compatible_least_squares(mdp: MdpSpec, theta, behavior, d_b: Optional[np.ndarray] = None, restart: float = 0.0):
    """Minimum-norm minimizer of sum_s d_b(s) sum_a pi(a|s) (A_pi(s,a) - psi.omega)^2.

    Solved as a weighted linear least-squares problem over the (s, a) rows,
    without forming the Fisher matrix.
    """
    pi, b = _setup(mdp, theta, behavior)
    if d_b is None:
        d_b = behavior_distribution_exact(mdp, b, restart)
    V = solve_v(mdp, pi)
    adv = solve_q(mdp, V) - V[:, None]
    psi = score_tensor(pi)
    sw = np.sqrt(d_b[:, None] * pi).ravel()
    X = psi.reshape(-1, psi.shape[-1]) * sw[:, None]
    y = adv.ravel() * sw
    omega, *_ = np.linalg.lstsq(X, y, rcond=1e-10)
    return omega


def _pinv(G: np.ndarray) -> np.ndarray:
    # singular values below 1e-10 (relative) are treated as zero
    return np.linalg.pinv(G, rcond=1e-10, hermitian=True)


def lemma1_check(mdp: MdpSpec, theta, behavior, restart: float = 0.0) -> dict:
    """Least-squares compatible weights versus the natural gradient G^+ grad."""
    pi, b = _setup(mdp, theta, behavior)
    d_b = behavior_distribution_exact(mdp, b, restart)
    omega_star = compatible_least_squares(mdp, theta, b, d_b=d_b)
    grad = offpolicy_gradient_exact(mdp, theta, b, d_b=d_b)
    G = fisher_exact(mdp, theta, b, d_b=d_b)
    natural = _pinv(G) @ grad
    return {
        "omega_star": omega_star,
        "natural_gradient": natural,
        "gradient": grad,
        "fisher": G,
        "residual": float(np.max(np.abs(omega_star - natural))),
    }


def expected_actgrad_step(mdp: MdpSpec, theta, behavior, omega: np.ndarray, d_b=None, restart: float = 0.0):
    """E_{s~d_b, a~b}[phi psi (psi . omega)], summed exactly over (s, a)."""
    pi, b = _setup(mdp, theta, behavior)
    if d_b is None:
        d_b = behavior_distribution_exact(mdp, b, restart)
    psi = score_tensor(pi)
    adv = psi @ omega
    w = d_b[:, None] * b * (pi / b) * adv
    return np.einsum("sa,sak->k", w, psi)


def expected_offpac_step(mdp: MdpSpec, theta, behavior, nu: np.ndarray, d_b=None, restart: float = 0.0):
    """E_{s~d_b, a~b, s'~P}[phi delta psi] for the one-step actor with state values ``nu``."""
    pi, b = _setup(mdp, theta, behavior)
    if d_b is None:
        d_b = behavior_distribution_exact(mdp, b, restart)
    nxt = np.where(mdp.terminal, 0.0, nu)
    exp_delta = mdp.R + mdp.gamma * mdp.P @ nxt - nu[:, None]
    psi = score_tensor(pi)
    w = d_b[:, None] * b * (pi / b) * exp_delta
    return np.einsum("sa,sak->k", w, psi)


def exact_quantities(mdp: MdpSpec, theta, behavior, restart: float = 0.0) -> ExactQuantities:
    pi, b = _setup(mdp, theta, behavior)
    d_b = behavior_distribution_exact(mdp, b, restart)
    V = solve_v(mdp, pi)
    Q = solve_q(mdp, V)
    grad = offpolicy_gradient_exact(mdp, theta, b, d_b=d_b)
    G = fisher_exact(mdp, theta, b, d_b=d_b)
    omega = compatible_least_squares(mdp, theta, b, d_b=d_b)
    return ExactQuantities(V, Q, d_b, grad, G, omega, {"pi": pi, "b": b})
