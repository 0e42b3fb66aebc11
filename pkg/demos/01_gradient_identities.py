"""
Exact gradient identities on a small MDP
========================================

Builds a random 3-state, 2-action MDP, picks a softmax target policy and an
epsilon-mixture behavior policy, and shows that the compatible least-squares
weights are the natural gradient and that the expected Actgrad step with
those weights is the off-policy gradient.
"""

import numpy as np

from actgrad import mdp_oracle as mo
from actgrad.policy import BehaviorPolicy

rng = np.random.default_rng(0)
mdp = mo.random_mdp(rng, 3, 2, gamma=0.9)
theta = rng.normal(size=mdp.param_dim)
pi = mo.tabular_policy(theta, 3, 2)
b = mo.behavior_matrix(BehaviorPolicy("epsilon-mixture", 0.1), pi)

print("target policy pi(a|s):\n", pi.round(3))
print("behavior b(a|s):\n", b.round(3))

q = mo.exact_quantities(mdp, theta, b)
print("\nV_pi        :", q.V.round(4))
print("d_b         :", q.d_b.round(4))
print("off-policy gradient:", q.grad.round(5))

# omega* by least squares on the advantages; natural gradient by pinv(G) @ grad
rep = mo.lemma1_check(mdp, theta, b)
print("\nomega*            :", rep["omega_star"].round(5))
print("pinv(G) @ gradient:", rep["natural_gradient"].round(5))
print("max difference    : %.2e" % rep["residual"])

step = mo.expected_actgrad_step(mdp, theta, b, q.omega_star, d_b=q.d_b)
print("\nexpected actgrad step:", step.round(5))
print("max |step - gradient| : %.2e" % np.max(np.abs(step - q.grad)))

# the full gradient also carries an action-value-gradient term
dec = mo.full_gradient_decomposition_check(mdp, theta, b)
print("\nfull gradient (finite differences):", dec["full"].round(5))
print("action-value-gradient term        :", dec["action_value_gradient_term"].round(5))
print("decomposition residual            : %.2e" % dec["residual"])
