"""Softmax policy over linear preferences, its score function, and behavior policies.

Distributions are plain 1-d float arrays.  ``theta`` is a dense vector over
the state-action feature space; preferences are ``theta . x(s, a)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .features import SparseVec

__all__ = [
    "PolicyError",
    "BehaviorPolicy",
    "softmax",
    "preferences",
    "action_probabilities",
    "score",
    "score_sparse",
    "sample",
    "greedy",
    "importance_ratio",
    "behavior_distribution",
]


class PolicyError(ValueError):
    pass


def softmax(prefs) -> np.ndarray:
    """Max-shifted softmax.  Raises on non-finite preferences."""
    prefs = np.asarray(prefs, dtype=float)
    with np.errstate(invalid="ignore"):
        z = prefs - prefs.max()
    # z is all-finite iff prefs is (nan and inf both poison the shift)
    if not math.isfinite(z.sum()):
        raise PolicyError(f"non-finite preference in {prefs}")
    np.exp(z, out=z)
    z /= z.sum()
    return z


def preferences(theta: np.ndarray, per_action_features: Sequence[SparseVec]) -> np.ndarray:
    if len(per_action_features) < 2:
        raise PolicyError("a softmax policy needs at least 2 actions")
    out = np.empty(len(per_action_features))
    for a, x in enumerate(per_action_features):
        if x.dim != theta.shape[0]:
            raise PolicyError(f"feature dim {x.dim} does not match params dim {theta.shape[0]}")
        out[a] = theta[x.indices] @ x.values
    return out


def action_probabilities(theta: np.ndarray, per_action_features: Sequence[SparseVec]) -> np.ndarray:
    return softmax(preferences(theta, per_action_features))


def score_sparse(
    theta: np.ndarray,
    per_action_features: Sequence[SparseVec],
    action: int,
    probs: Optional[np.ndarray] = None,
) -> SparseVec:
    """grad log pi(action|s) = x(s, action) - sum_b pi(b|s) x(s, b), as a SparseVec."""
    if probs is None:
        probs = action_probabilities(theta, per_action_features)
    if not 0 <= action < len(per_action_features):
        raise PolicyError(f"action {action} out of range")
    entries = [(i, v) for i, v in per_action_features[action].entries()]
    for b, x in enumerate(per_action_features):
        entries.extend((i, -probs[b] * v) for i, v in x.entries())
    return SparseVec.from_entries(entries, theta.shape[0])


def score(theta: np.ndarray, per_action_features: Sequence[SparseVec], action: int) -> np.ndarray:
    """Dense score vector (the compatible features) for ``action``."""
    probs = action_probabilities(theta, per_action_features)
    if not 0 <= action < len(per_action_features):
        raise PolicyError(f"action {action} out of range")
    out = per_action_features[action].to_dense()
    for b, x in enumerate(per_action_features):
        out[x.indices] -= probs[b] * x.values
    return out


def sample(dist: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; consumes exactly one uniform from ``rng``."""
    u = rng.random()
    c = 0.0
    last = len(dist) - 1
    for a in range(last):
        c += dist[a]
        if u < c:
            return a
    return last


def greedy(values) -> int:
    """Argmax with ties broken toward the lowest index."""
    return int(np.argmax(values))


def importance_ratio(target: np.ndarray, behavior: np.ndarray, action: int) -> float:
    b = behavior[action]
    if not b > 0.0:
        raise PolicyError(f"behavior probability of action {action} is {b}; must be > 0")
    return float(target[action] / b)


BEHAVIOR_KINDS = ("epsilon-mixture", "uniform", "fixed-softmax")


@dataclass(frozen=True)
class BehaviorPolicy:
    kind: str = "epsilon-mixture"
    epsilon: float = 0.1
    params: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in BEHAVIOR_KINDS:
            raise PolicyError(f"unknown behavior kind {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise PolicyError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.kind == "fixed-softmax" and self.params is None:
            raise PolicyError("fixed-softmax behavior needs frozen params")


def behavior_distribution(
    behavior: BehaviorPolicy,
    target: np.ndarray,
    num_actions: int,
    per_action_features: Optional[Sequence[SparseVec]] = None,
) -> np.ndarray:
    """Distribution the behavior policy uses at a state with target ``target``.

    ``per_action_features`` is only needed for the fixed-softmax kind.
    """
    if behavior.kind == "uniform":
        return np.full(num_actions, 1.0 / num_actions)
    if behavior.kind == "fixed-softmax":
        if per_action_features is None:
            raise PolicyError("fixed-softmax behavior needs the state's action features")
        return action_probabilities(behavior.params, per_action_features)
    eps = behavior.epsilon
    if eps == 0.0:
        return np.asarray(target, dtype=float)
    return (1.0 - eps) * np.asarray(target) + eps / num_actions
