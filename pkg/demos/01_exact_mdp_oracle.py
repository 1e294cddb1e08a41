"""Exact tabular-MDP checks, end to end.

Builds a random MDP, evaluates a pair of random policies exactly, and walks
through the chain of identities and bounds the library verifies numerically:
the performance-difference identity, the TV-based sandwich bound, and the two
lower bounds whose gap is the whole point of advantage realignment.
"""

import numpy as np

from laglab.mdp import random_mdp, random_policy
from laglab.oracle import (
    discounted_state_dist,
    exact_q_advantage,
    exact_return,
    exact_value,
    lemma2_lower_bound,
    lemma3_lower_bound,
    perf_diff_exact,
    state_dist_tv_check,
    theorem1_bounds,
    tv_per_state,
)

rng = np.random.default_rng(7)
mdp = random_mdp(rng, num_states=6, num_actions=3, gamma=0.9)
pi = random_policy(rng, 6, 3)
pi_T = random_policy(rng, 6, 3)
beta = random_policy(rng, 6, 3)

# %% Values, advantages, and the discounted state distribution.
V = exact_value(mdp, pi_T)
Q, A = exact_q_advantage(mdp, pi_T)
d = discounted_state_dist(mdp, pi_T)
print("V_pi:", np.round(V, 3))
print("per-state E_pi[A] (should be ~0):", np.abs((pi_T.probs * A).sum(axis=1)).max())
print("d sums to", d.sum())

# %% The performance-difference identity holds to solver precision.
lhs, rhs = perf_diff_exact(mdp, pi, pi_T)
print(f"\nJ(pi) - J(pi_T) = {lhs:+.6f}   identity rhs = {rhs:+.6f}   |gap| = {abs(lhs - rhs):.2e}")

# %% The sandwich bound: surrogate +- a TV penalty encloses the true difference.
lo, diff, hi = theorem1_bounds(mdp, pi, pi_T)
print(f"sandwich: {lo:+.4f} <= {diff:+.4f} <= {hi:+.4f}")

# %% Behavior-anchored vs realigned lower bounds at pi = pi_T.
# The behavior-anchored bound pays an unavoidable backward-lag penalty as soon
# as the behavior mixture differs from the learner; the realigned bound is
# exactly zero there.
b2, _, terms2 = lemma2_lower_bound(mdp, pi_T, pi_T, beta)
b3, _, terms3 = lemma3_lower_bound(mdp, pi_T, pi_T, beta)
mean_tv = float(discounted_state_dist(mdp, beta) @ tv_per_state(beta, pi_T))
print(f"\nmean TV(beta, pi_T) under d^beta = {mean_tv:.3f}")
print(f"behavior-anchored bound at pi = pi_T: {b2:+.5f}   (terms: {terms2})")
print(f"realigned bound at pi = pi_T:         {b3:+.2e}  (zero backward lag)")

# %% State-distribution shift is controlled by policy TV.
lhs, rhs = state_dist_tv_check(mdp, pi, pi_T)
print(f"\n||d^pi - d^pi_T||_1 = {lhs:.4f} <= {rhs:.4f} = 2g/(1-g) E[TV]")

print("\nall checks hold; `laglab verify --suite lemmas` sweeps 1000 such instances")
