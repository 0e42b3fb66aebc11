"""Off-policy actor-critics over linear features, with exact tabular oracles.

Modules
-------
features     sparse vectors and observation encoders (Boxes, grids, one-hot)
policy       softmax target policy, score function, behavior policies
critic       linear state value, compatible advantage, traces and TD updates
agents       Actgrad, Offpac and Watkins Q(lambda)
envs         Cart Pole, a planar lunar lander, tabular MDP environments
mdp_oracle   exact DP, visitation, gradients and Fisher matrices for small MDPs
harness      seeded multi-trial experiments, summaries and output files
"""

from .agents import AgentConfig, Transition, act, agent_step, make_agent
from .features import Encoder, SparseVec, encode, state_action_features
from .harness import ExperimentConfig, aggregate, run_experiment, run_trial

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "Transition",
    "act",
    "agent_step",
    "make_agent",
    "Encoder",
    "SparseVec",
    "encode",
    "state_action_features",
    "ExperimentConfig",
    "aggregate",
    "run_experiment",
    "run_trial",
]
