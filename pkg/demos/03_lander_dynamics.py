"""
The simplified lander
=====================

Steps the planar lander by hand: free fall, a hover with the main engine
balancing gravity, and a few random-action episodes with their outcomes.
"""

import numpy as np

from actgrad import envs

p = envs.LanderParams()
s = envs.LanderState(0.0, 1.0, 0.0, 0.0)
print("free fall, 5 steps of noop:")
for _ in range(5):
    s, out = envs.lander_step(s, envs.NOOP, p)
    print(f"  y={s.y:.4f} vy={s.vy:+.4f} reward={out.reward:+.3f}")

hover = envs.LanderParams(main_power=p.gravity)
s = envs.LanderState(0.0, 1.0, 0.0, 0.0)
s, out = envs.lander_step(s, envs.MAIN_ENGINE, hover)
print(f"\nhovering: vy={s.vy:+.4f} reward={out.reward:+.3f} (engine cost only)")

env = envs.LunarLander()
rng = np.random.default_rng(2)
print("\nrandom-action episodes:")
for ep in range(5):
    env.reset(rng)
    total, steps = 0.0, 0
    while steps < 500:
        out = env.step(int(rng.integers(4)))
        total += out.reward
        steps += 1
        if out.terminal:
            break
    st = env.state
    outcome = "landed" if st.landed else "crashed" if st.crashed else "timed out"
    print(f"  episode {ep}: {outcome:9s} after {steps:3d} steps, return {total:+8.2f}, x={st.x:+.2f}")
