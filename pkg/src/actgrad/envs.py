"""Native episodic environments: Cart Pole, a planar lunar lander, tabular MDPs.

Each environment has a pure step function over an immutable state tuple
(``cartpole_step``, ``lander_step``) and a small stateful wrapper with
``reset(rng) -> observation`` and ``step(action) -> EnvStep`` used by the
experiment harness.  Environments never set ``truncated``; the step cap
is imposed by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import features

__all__ = [
    "EnvError",
    "EnvStep",
    "CartPoleParams",
    "CartPoleState",
    "cartpole_step",
    "cartpole_energy",
    "LanderParams",
    "LanderState",
    "lander_step",
    "lander_shaping",
    "CartPole",
    "LunarLander",
    "TabularEnv",
    "make_env",
    "env_reset",
]


class EnvError(RuntimeError):
    """Usage error, e.g. stepping an environment whose episode has ended."""


class EnvStep(NamedTuple):
    observation: tuple
    reward: float
    terminal: bool
    truncated: bool = False


# --------------------------------------------------------------------------
# Cart Pole


@dataclass(frozen=True)
class CartPoleParams:
    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    force: float = 10.0
    tau: float = 0.02
    x_limit: float = 2.4
    theta_limit: float = 12 * 2 * math.pi / 360


class CartPoleState(NamedTuple):
    x: float = 0.0
    x_dot: float = 0.0
    theta: float = 0.0
    theta_dot: float = 0.0


CARTPOLE = CartPoleParams()


def cartpole_accelerations(s: CartPoleState, force: float, p: CartPoleParams = CARTPOLE):
    total = p.cart_mass + p.pole_mass
    pml = p.pole_mass * p.half_length
    sin, cos = math.sin(s.theta), math.cos(s.theta)
    temp = (force + pml * s.theta_dot * s.theta_dot * sin) / total
    theta_acc = (p.gravity * sin - cos * temp) / (
        p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total)
    )
    x_acc = temp - pml * theta_acc * cos / total
    return x_acc, theta_acc


def cartpole_step(
    state: CartPoleState, action: int, params: CartPoleParams = CARTPOLE, force: Optional[float] = None
):
    """One Euler step.  Action 1 pushes right (+F), action 0 pushes left.

    ``force`` overrides the action-selected force (used for unforced runs).
    Returns ``(next_state, EnvStep)``; reward is 1.0 for every step,
    including the one on which the pole falls or the cart leaves the track.
    """
    if action not in (0, 1):
        raise EnvError(f"cart pole action must be 0 or 1, got {action!r}")
    f = (params.force if action == 1 else -params.force) if force is None else force
    x_acc, theta_acc = cartpole_accelerations(state, f, params)
    tau = params.tau
    nxt = CartPoleState(
        state.x + tau * state.x_dot,
        state.x_dot + tau * x_acc,
        state.theta + tau * state.theta_dot,
        state.theta_dot + tau * theta_acc,
    )
    terminal = abs(nxt.x) > params.x_limit or abs(nxt.theta) > params.theta_limit
    return nxt, EnvStep(tuple(nxt), 1.0, terminal)


def cartpole_energy(s: CartPoleState, p: CartPoleParams = CARTPOLE) -> float:
    """Mechanical energy of cart plus uniform rod (inertia 4/3 m l^2 about the pivot)."""
    m, l = p.pole_mass, p.half_length
    return (
        0.5 * (p.cart_mass + m) * s.x_dot ** 2
        + m * l * s.x_dot * s.theta_dot * math.cos(s.theta)
        + 0.5 * (4.0 / 3.0) * m * l * l * s.theta_dot ** 2
        + m * p.gravity * l * math.cos(s.theta)
    )


# --------------------------------------------------------------------------
# Lunar lander


@dataclass(frozen=True)
class LanderParams:
    """Simplified planar lander; the pad is centred at the origin on flat ground.

    Units are arbitrary but chosen so the observation ranges match the
    lander grid encoder (x in +-1.5, y in [0, 1.5]).
    """

    gravity: float = 0.5
    main_power: float = 1.1
    side_power: float = 0.3
    side_torque: float = 1.0
    tau: float = 0.05
    leg_half_width: float = 0.1
    pad_half_width: float = 0.2
    crash_speed: float = 0.8
    crash_angle: float = 0.6
    rest_speed: float = 0.05
    friction: float = 0.5
    x_limit: float = 1.5
    y_limit: float = 1.5
    start_height: float = 1.4
    initial_impulse: float = 0.3
    main_cost: float = 0.3
    side_cost: float = 0.03


class LanderState(NamedTuple):
    x: float = 0.0
    y: float = 1.4
    vx: float = 0.0
    vy: float = 0.0
    angle: float = 0.0
    omega: float = 0.0
    left: bool = False
    right: bool = False
    landed: bool = False
    crashed: bool = False

    def observation(self) -> tuple:
        return (self.x, self.y, self.vx, self.vy, self.angle, self.omega,
                float(self.left), float(self.right))


LANDER = LanderParams()
NOOP, LEFT_ENGINE, MAIN_ENGINE, RIGHT_ENGINE = range(4)


def lander_shaping(s: LanderState) -> float:
    """Potential used for reward shaping: closer, slower, more level is better."""
    return (
        -100.0 * math.hypot(s.x, s.y)
        - 100.0 * math.hypot(s.vx, s.vy)
        - 100.0 * abs(s.angle)
        + 10.0 * s.left
        + 10.0 * s.right
    )


def _leg_heights(y: float, angle: float, p: LanderParams):
    off = p.leg_half_width * math.sin(angle)
    return y - off, y + off


def lander_step(state: LanderState, action: int, params: LanderParams = LANDER):
    """Advance the lander one step; returns ``(next_state, EnvStep)``.

    The episode ends with -100 on a crash (touchdown too fast or too
    tilted) or on leaving the arena, and with +100 once the lander rests on
    both legs for a step.  Touchdown settles the lander onto the ground.
    """
    if state.landed or state.crashed:
        raise EnvError("lander episode has ended; reset before stepping")
    if action not in (NOOP, LEFT_ENGINE, MAIN_ENGINE, RIGHT_ENGINE):
        raise EnvError(f"lander action must be in 0..3, got {action!r}")
    p = params
    sin, cos = math.sin(state.angle), math.cos(state.angle)
    ax, ay, alpha = 0.0, -p.gravity, 0.0
    cost = 0.0
    if action == MAIN_ENGINE:
        ax -= p.main_power * sin
        ay += p.main_power * cos
        cost = p.main_cost
    elif action == LEFT_ENGINE:
        ax += p.side_power * cos
        ay += p.side_power * sin
        alpha = -p.side_torque
        cost = p.side_cost
    elif action == RIGHT_ENGINE:
        ax -= p.side_power * cos
        ay -= p.side_power * sin
        alpha = p.side_torque
        cost = p.side_cost

    dt = p.tau
    vx = state.vx + ax * dt
    vy = state.vy + ay * dt
    omega = state.omega + alpha * dt
    x = state.x + vx * dt
    y = state.y + vy * dt
    angle = state.angle + omega * dt

    crashed = landed = False
    left_h, right_h = _leg_heights(y, angle, p)
    left = right = False
    if min(left_h, right_h) <= 0.0:
        if math.hypot(vx, vy) > p.crash_speed or abs(angle) > p.crash_angle:
            crashed = True
            left, right = left_h <= 0.0, right_h <= 0.0
        else:
            # gentle touchdown: level out, stop sinking, slide with friction
            angle *= 0.5
            omega *= 0.5
            y = p.leg_half_width * abs(math.sin(angle))
            vy = max(vy, 0.0)
            vx *= 1.0 - p.friction
            left = right = True
            if state.left and state.right and math.hypot(vx, vy) < p.rest_speed and abs(omega) < p.rest_speed:
                landed = True
    if abs(x) > p.x_limit or y > p.y_limit:
        crashed = True

    nxt = LanderState(x, y, vx, vy, angle, omega, left, right, landed, crashed)
    reward = lander_shaping(nxt) - lander_shaping(state) - cost
    if crashed:
        reward -= 100.0
    elif landed:
        reward += 100.0
    return nxt, EnvStep(nxt.observation(), reward, crashed or landed)


# --------------------------------------------------------------------------
# Stateful wrappers


class CartPole:
    name = "cartpole"
    num_actions = 2
    obs_dim = 4

    def __init__(self, params: CartPoleParams = CARTPOLE):
        self.params = params
        self.state: Optional[CartPoleState] = None
        self.done = True

    def default_encoder(self) -> features.Encoder:
        return features.cartpole_boxes()

    def reset(self, rng: np.random.Generator) -> tuple:
        self.state = CartPoleState(*(float(v) for v in rng.uniform(-0.05, 0.05, size=4)))
        self.done = False
        return tuple(self.state)

    def step(self, action: int) -> EnvStep:
        if self.done:
            raise EnvError("episode has ended; call reset() first")
        self.state, out = cartpole_step(self.state, action, self.params)
        self.done = out.terminal
        return out

    def solved(self, terminal: bool, truncated: bool) -> bool:
        # survived to the step cap
        return truncated and not terminal


class LunarLander:
    name = "lander"
    num_actions = 4
    obs_dim = 8

    def __init__(self, params: LanderParams = LANDER):
        self.params = params
        self.state: Optional[LanderState] = None
        self.done = True

    def default_encoder(self) -> features.Encoder:
        return features.lander_grid()

    def reset(self, rng: np.random.Generator) -> tuple:
        p = self.params
        if p.initial_impulse > 0.0:
            vx, vy = (float(v) for v in rng.uniform(-p.initial_impulse, p.initial_impulse, size=2))
        else:
            vx = vy = 0.0
        self.state = LanderState(0.0, p.start_height, vx, vy)
        self.done = False
        return self.state.observation()

    def step(self, action: int) -> EnvStep:
        if self.done:
            raise EnvError("episode has ended; call reset() first")
        self.state, out = lander_step(self.state, action, self.params)
        self.done = out.terminal
        return out

    def solved(self, terminal: bool, truncated: bool) -> bool:
        s = self.state
        return bool(s.landed and abs(s.x) <= self.params.pad_half_width)


class TabularEnv:
    """Samples episodes from an :class:`~actgrad.mdp_oracle.MdpSpec`.

    Observations are ``(state_index,)``.  Terminal states of the MDP end
    the episode; without terminal states episodes run until the step cap.
    """

    name = "tabular"

    def __init__(self, mdp):
        self.mdp = mdp
        self.num_actions = mdp.num_actions
        self.obs_dim = 1
        self.state: Optional[int] = None
        self.done = True
        self._rng: Optional[np.random.Generator] = None

    def default_encoder(self) -> features.Encoder:
        return features.tabular(self.mdp.num_states)

    def reset(self, rng: np.random.Generator) -> tuple:
        self._rng = rng
        self.state = int(rng.choice(self.mdp.num_states, p=self.mdp.initial))
        self.done = False
        return (self.state,)

    def step(self, action: int) -> EnvStep:
        if self.done:
            raise EnvError("episode has ended; call reset() first")
        s = self.state
        r = float(self.mdp.R[s, action])
        s2 = int(self._rng.choice(self.mdp.num_states, p=self.mdp.P[s, action]))
        self.state = s2
        self.done = bool(self.mdp.terminal[s2])
        return EnvStep((s2,), r, self.done)

    def solved(self, terminal: bool, truncated: bool) -> bool:
        return terminal


def make_env(kind: str, **kwargs):
    if kind == "cartpole":
        return CartPole(**kwargs)
    if kind in ("lander", "lunarlander"):
        return LunarLander(**kwargs)
    if kind == "tabular":
        return TabularEnv(**kwargs)
    raise ValueError(f"unknown environment kind {kind!r}")


def env_reset(env, rng: np.random.Generator):
    """Reset ``env``; returns ``(state, observation)``."""
    obs = env.reset(rng)
    return env.state, obs
