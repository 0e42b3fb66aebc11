"""Actgrad, Offpac and Watkins Q(lambda) behind one step-wise interface.

All three agents use the block state-action layout of
:func:`actgrad.features.state_action_features`: parameter vectors have
``num_actions * state_dim`` components and their ``(num_actions,
state_dim)`` view is indexed by ``[action, state_feature]``.  Update
rules, per transition ``(s, a, r, s')`` with ``phi = pi(a|s) / b(a|s)``:

Actgrad
    TD(lambda) critic on ``delta``, compatible fit of ``omega`` toward
    ``delta``, then ``theta += alpha_theta * phi * psi * (psi . omega)``.
    The sampled outer product ``phi psi psi^T`` estimates the Fisher matrix,
    so with ``omega`` at its least-squares optimum the expected step is the
    off-policy gradient.  The step is taken with a positive sign (ascent).
Offpac
    Same critic; actor trace ``e <- phi (gamma lambda e + psi)`` and
    ``theta += alpha_theta * delta * e``.
Q(lambda)
    Watkins's rule: the trace is cut whenever the action taken was not
    greedy.  Uses ``alpha_v`` as its step size and epsilon-greedy behavior.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import policy as pol
from .critic import (
    CriticParams,
    TraceState,
    TrainingDiverged,
    check_finite,
    td_error,
    update_critic,
    update_omega,
)
from .features import SparseVec

__all__ = [
    "ConfigError",
    "AGENT_KINDS",
    "AgentConfig",
    "AgentState",
    "Transition",
    "make_agent",
    "start_episode",
    "agent_step",
    "actgrad_update",
    "offpac_update",
    "qlambda_update",
    "act",
]

AGENT_KINDS = ("actgrad", "offpac", "qlambda")


class ConfigError(ValueError):
    pass


@dataclass
class AgentConfig:
    kind: str = "actgrad"
    alpha_theta: float = 0.01
    alpha_v: float = 0.1
    alpha_w: float = 0.01
    gamma: float = 0.99
    lam: float = 0.8
    epsilon_behavior: float = 0.1

    def validate(self) -> "AgentConfig":
        if self.kind not in AGENT_KINDS:
            raise ConfigError(f"kind: unknown agent kind {self.kind!r}")
        for name in ("alpha_theta", "alpha_v", "alpha_w"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be strictly positive, got {getattr(self, name)}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma: must lie in [0, 1], got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda: must lie in [0, 1], got {self.lam}")
        if not 0.0 <= self.epsilon_behavior < 1.0:
            raise ConfigError(f"epsilon_behavior: must lie in [0, 1), got {self.epsilon_behavior}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown agent field")
        return cls(**d)


@dataclass
class Transition:
    x_s: SparseVec
    action: int
    reward: float
    x_next: SparseVec
    terminal: bool
    behavior_prob: float


@dataclass
class AgentState:
    kind: str
    state_dim: int
    num_actions: int
    theta: np.ndarray
    critic: Optional[CriticParams]
    w: Optional[np.ndarray]
    trace: TraceState
    steps: int = 0
    diverged: bool = False
    # (features, steps, probs) from the last act() call; valid while steps is unchanged
    _probs_cache: tuple = field(default=(None, -1, None), repr=False, compare=False)

    def __post_init__(self):
        self.theta_blocks = self.theta.reshape(self.num_actions, self.state_dim)
        self.w_blocks = None if self.w is None else self.w.reshape(self.num_actions, self.state_dim)
        self.block_offsets = np.arange(self.num_actions) * self.state_dim


def make_agent(config: AgentConfig, state_dim: int, num_actions: int) -> AgentState:
    if config.kind not in AGENT_KINDS:
        raise ConfigError(f"kind: unknown agent kind {config.kind!r}")
    if num_actions < 2:
        raise ConfigError("num_actions: need at least 2 actions")
    d = state_dim * num_actions
    trace = TraceState(state_dim, num_actions, config.lam, config.gamma)
    if config.kind == "qlambda":
        return AgentState(config.kind, state_dim, num_actions, np.zeros(d), None, np.zeros(d), trace)
    return AgentState(
        config.kind, state_dim, num_actions, np.zeros(d), CriticParams.zeros(state_dim, num_actions),
        None, trace,
    )


def start_episode(state: AgentState):
    state.trace.reset()


def _block_values(blocks: np.ndarray, x: SparseVec) -> np.ndarray:
    # per-action linear values w . x(s, a) under the block layout
    if x.indices.size == 1:
        return blocks[:, x.indices[0]] * x.values[0]
    return blocks[:, x.indices] @ x.values


def _target_probs(state: AgentState, x: SparseVec) -> np.ndarray:
    cached_x, steps, probs = state._probs_cache
    if cached_x is x and steps == state.steps:
        return probs
    probs = pol.softmax(_block_values(state.theta_blocks, x))
    state._probs_cache = (x, state.steps, probs)
    return probs


def _score(state: AgentState, x: SparseVec, action: int, probs: np.ndarray) -> SparseVec:
    """Score vector psi(s, a) restricted to the nonzero block entries."""
    coef = -probs
    coef[action] += 1.0
    if x.indices.size == 1:
        vals = coef * x.values[0]
        idx = state.block_offsets + x.indices[0]
    else:
        vals = np.outer(coef, x.values).ravel()
        idx = (state.block_offsets[:, None] + x.indices).ravel()
    if not vals.all():
        keep = vals != 0.0
        idx, vals = idx[keep], vals[keep]
    return SparseVec(idx, vals, state.theta.shape[0], check=False)


def _critic_step(state: AgentState, config: AgentConfig, t: Transition):
    """Shared critic part of the actor-critics; returns (probs, phi, delta)."""
    probs = _target_probs(state, t.x_s)
    if not t.behavior_prob > 0.0:
        raise pol.PolicyError(f"behavior probability {t.behavior_prob} must be > 0")
    phi = float(probs[t.action] / t.behavior_prob)
    nu = state.critic.nu
    v_now = t.x_s.dot(nu)
    v_next = 0.0 if t.terminal else t.x_next.dot(nu)
    delta = td_error(t.reward, config.gamma, v_next, v_now, t.terminal)
    update_critic(state.critic, state.trace, phi, t.x_s, delta, config.alpha_v)
    return probs, phi, delta


def actgrad_update(state: AgentState, config: AgentConfig, t: Transition) -> AgentState:
    probs, phi, delta = _critic_step(state, config, t)
    psi = _score(state, t.x_s, t.action, probs)
    update_omega(state.critic, phi, delta, psi, config.alpha_w)
    adv = psi.dot(state.critic.omega)
    state.theta[psi.indices] += config.alpha_theta * phi * adv * psi.values
    check_finite(state.theta[psi.indices])
    return state


def offpac_update(state: AgentState, config: AgentConfig, t: Transition) -> AgentState:
    probs, phi, delta = _critic_step(state, config, t)
    psi = _score(state, t.x_s, t.action, probs)
    tr = state.trace
    act = tr.active
    e = tr.e_theta_blocks
    e[:, act] *= config.gamma * config.lam
    tr.e_theta[psi.indices] += psi.values
    e[:, act] *= phi
    state.theta_blocks[:, act] += config.alpha_theta * delta * e[:, act]
    check_finite(state.theta_blocks[:, act])
    return state


def qlambda_update(state: AgentState, config: AgentConfig, t: Transition) -> AgentState:
    W = state.w_blocks
    q = _block_values(W, t.x_s)
    was_greedy = q[t.action] == q.max()
    q_next = 0.0 if t.terminal else float(_block_values(W, t.x_next).max())
    delta = td_error(t.reward, config.gamma, q_next, float(q[t.action]), t.terminal)
    tr = state.trace
    tr.touch(t.x_s.indices)
    act = tr.active
    e = tr.e_theta_blocks
    if was_greedy:
        e[:, act] *= config.gamma * config.lam
    else:
        e[:, act] = 0.0
    tr.e_theta[t.action * state.state_dim + t.x_s.indices] += t.x_s.values
    W[:, act] += config.alpha_v * delta * e[:, act]
    check_finite(W[:, act])
    return state


_UPDATES = {"actgrad": actgrad_update, "offpac": offpac_update, "qlambda": qlambda_update}


def agent_step(state: AgentState, config: AgentConfig, transition: Transition, rng=None) -> AgentState:
    """Apply the configured agent's update for one transition.

    ``rng`` is accepted for interface symmetry with :func:`act`; none of
    the updates draw random numbers.
    """
    try:
        update = _UPDATES[config.kind]
    except KeyError:
        raise ConfigError(f"kind: unknown agent kind {config.kind!r}") from None
    if config.kind != state.kind:
        raise ConfigError(f"kind: config is {config.kind!r} but state is {state.kind!r}")
    try:
        update(state, config, transition)
    except TrainingDiverged:
        state.diverged = True
        raise
    state.steps += 1
    return state


def act(state: AgentState, config: AgentConfig, x_s: SparseVec, mode: str, rng: np.random.Generator):
    """Choose an action; returns ``(action, target_prob, behavior_prob)``.

    Test mode is greedy and deterministic (ties go to the lowest index).
    Train mode samples from the behavior policy: the epsilon-mixture of the
    target for the actor-critics, epsilon-greedy for Q(lambda).
    """
    n = state.num_actions
    eps = config.epsilon_behavior
    if state.kind == "qlambda":
        q = _block_values(state.w_blocks, x_s)
        if mode == "test":
            return pol.greedy(q), 1.0, 1.0
        best = np.flatnonzero(q == q.max())
        target = np.zeros(n)
        target[best] = 1.0 / best.size
        behavior = (1.0 - eps) * target + eps / n
        a = pol.sample(behavior, rng)
        return a, float(target[a]), float(behavior[a])
    probs = _target_probs(state, x_s)
    if mode == "test":
        return pol.greedy(probs), float(probs.max()), 1.0
    if mode != "train":
        raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")
    behavior = pol.behavior_distribution(pol.BehaviorPolicy("epsilon-mixture", eps), probs, n)
    a = pol.sample(behavior, rng)
    return a, float(probs[a]), float(behavior[a])
