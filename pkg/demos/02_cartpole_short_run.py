"""
A short Cart Pole comparison
============================

Trains the three agents for a few hundred episodes on Cart Pole with the
Boxes features, tests each greedily, and writes records, a summary and a
learning-curve SVG under ``demo_runs/cartpole``.  The full protocol is
``actgrad train --env cartpole --agent actgrad,offpac,qlambda --out runs/``.
"""

import sys

from actgrad import agents as ag
from actgrad import harness as h

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 300

cfg = h.ExperimentConfig(
    env="cartpole",
    agents=[ag.AgentConfig(kind=k) for k in ag.AGENT_KINDS],
    episodes=episodes,
    trials=2,
    test_episodes=20,
    seed=1,
    smoothing_window=25,
)
print(f"training {len(cfg.agents)} agents x {cfg.trials} trials x {cfg.episodes} episodes ...")
records = h.run_experiment(cfg)
stats = {k: h.aggregate(r) for k, r in records.items()}

for kind, s in stats.items():
    last = s.curve[-50:].mean()
    print(f"{kind:8s} last-50 training mean {last:6.1f}   test {s.test_mean:6.1f} +- {s.test_stderr:4.1f}"
          f"   solved {s.solved_pct:5.1f}%")

paths = h.emit_outputs(stats, records, "demo_runs/cartpole", cfg)
print("wrote", *map(str, paths))
