"""Linear critic: state value, compatible advantage, TD error and traces.

Traces are zero at episode start and only ever become nonzero at state
features visited during the episode.  For large feature spaces
:class:`TraceState` therefore keeps the set of touched state columns and
restricts decays and parameter updates to them; the arithmetic is
performed in the same order as the dense recurrences, so results are
bit-identical to updating every component.  Small spaces are updated
densely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .features import SparseVec

__all__ = [
    "TrainingDiverged",
    "CriticParams",
    "TraceState",
    "state_value",
    "advantage",
    "td_error",
    "update_critic",
    "update_omega",
]


# parameter spaces up to this size use dense trace updates
DENSE_LIMIT = 4096


class TrainingDiverged(ArithmeticError):
    """A parameter became non-finite during learning."""


Vector = Union[np.ndarray, SparseVec]


@dataclass
class CriticParams:
    nu: np.ndarray
    omega: np.ndarray

    @classmethod
    def zeros(cls, state_dim: int, num_actions: int) -> "CriticParams":
        return cls(np.zeros(state_dim), np.zeros(state_dim * num_actions))


@dataclass
class TraceState:
    """Critic trace ``e_v`` and actor (or Q) trace ``e_theta``.

    ``e_theta`` uses the block layout, so column ``j`` of its
    ``(num_actions, state_dim)`` view belongs to state feature ``j``.
    """

    state_dim: int
    num_actions: int
    lam: float
    gamma: float
    e_v: np.ndarray = field(init=False)
    e_theta: np.ndarray = field(init=False)
    # state columns that may hold nonzero trace: an index array, or a full
    # slice in dense mode
    active: object = field(init=False)
    dense: bool = field(init=False)
    _seen: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0 or not 0.0 <= self.gamma <= 1.0:
            raise ValueError("lambda and gamma must lie in [0, 1]")
        self.e_v = np.zeros(self.state_dim)
        self.e_theta = np.zeros(self.state_dim * self.num_actions)
        self.e_theta_blocks = self.e_theta.reshape(self.num_actions, self.state_dim)
        self.dense = self.e_theta.size <= DENSE_LIMIT
        self._seen = np.zeros(self.state_dim, dtype=bool)
        self.active = slice(None) if self.dense else np.zeros(0, dtype=np.intp)

    def reset(self):
        if self.dense:
            self.e_v.fill(0.0)
            self.e_theta.fill(0.0)
            return
        self.e_v[self.active] = 0.0
        self.e_theta_blocks[:, self.active] = 0.0
        self._seen[self.active] = False
        self.active = np.zeros(0, dtype=np.intp)

    def touch(self, state_indices: np.ndarray):
        if self.dense:
            return
        if not self._seen[state_indices].all():
            self._seen[state_indices] = True
            self.active = np.flatnonzero(self._seen)


def check_finite(*arrays):
    # a sum is non-finite iff some term is (or it overflows, which counts too)
    for a in arrays:
        if not math.isfinite(a.sum()):
            raise TrainingDiverged("non-finite parameter encountered")


def _dot(vec: Vector, dense: np.ndarray) -> float:
    if isinstance(vec, SparseVec):
        return vec.dot(dense)
    vec = np.asarray(vec, dtype=float)
    if vec.shape != dense.shape:
        raise ValueError(f"dimension mismatch: {vec.shape} vs {dense.shape}")
    return float(vec @ dense)


def state_value(params: CriticParams, x_s: SparseVec) -> float:
    return x_s.dot(params.nu)


def advantage(params: CriticParams, psi: Vector) -> float:
    """Compatible advantage estimate psi . omega."""
    return _dot(psi, params.omega)


def td_error(r: float, gamma: float, v_next: float, v_now: float, terminal: bool) -> float:
    if terminal:
        return r - v_now
    return r + gamma * v_next - v_now


def update_critic(
    params: CriticParams,
    trace: TraceState,
    phi: float,
    x_s: SparseVec,
    delta: float,
    alpha_v: float,
):
    """Off-policy TD(lambda): ``e_v <- phi (gamma lambda e_v + x(s))``, then ``nu += alpha_v delta e_v``.

    Updates in place and returns ``(params, trace)``.
    """
    if alpha_v < 0.0:
        raise ValueError("alpha_v must be non-negative")
    trace.touch(x_s.indices)
    act = trace.active
    e = trace.e_v
    e[act] *= trace.gamma * trace.lam
    e[x_s.indices] += x_s.values
    e[act] *= phi
    params.nu[act] += alpha_v * delta * e[act]
    check_finite(params.nu[act], e[act])
    return params, trace


def update_omega(params: CriticParams, phi: float, delta: float, psi: Vector, alpha_w: float):
    """Stochastic least-squares step ``omega += alpha_w phi (delta - psi.omega) psi``."""
    if alpha_w < 0.0:
        raise ValueError("alpha_w must be non-negative")
    step = alpha_w * phi * (delta - _dot(psi, params.omega))
    if isinstance(psi, SparseVec):
        params.omega[psi.indices] += step * psi.values
        check_finite(params.omega[psi.indices])
    else:
        params.omega += step * np.asarray(psi, dtype=float)
        check_finite(params.omega)
    return params
