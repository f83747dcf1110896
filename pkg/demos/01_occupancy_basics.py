"""Occupancy measures from first principles.

A discounted occupancy measure counts, for every state-action pair, the
expected discounted number of visits under a policy.  This script builds a
two-state chain, computes the measure three ways -- by linear solve, by
truncating the defining series, and in exact rational arithmetic -- and
checks the identities that the rest of the library leans on.
"""

import numpy as np

from occupal import (
    flow_residual,
    make_chain,
    occupancy_of_policy,
    truncated_series_occupancy,
    uniform_policy,
)
from occupal.rational import (
    exact_occupancy,
    exact_series_occupancy,
    random_rational_mdp,
    random_rational_policy,
)

mdp = make_chain(0.5)
policy = uniform_policy(mdp)

print("== A chain MDP and the uniform policy ==")
print(f"states: {mdp.n_states}, actions: {mdp.n_actions}, discount: {mdp.discount}")

mu = occupancy_of_policy(mdp, policy)
print("\nOccupancy by linear solve (one row per state):")
print(mu.mass.reshape(mdp.n_states, mdp.n_actions))

# identity 1: total discounted visits are 1/(1 - discount), independent of
# the policy -- each time step contributes discount^t mass in total
print(f"\ntotal mass  : {mu.total():.15f}")
print(f"1/(1-gamma) : {1.0 / (1.0 - mdp.discount):.15f}")

# identity 2: the measure satisfies the flow balance (what comes into a
# state equals its initial mass plus discounted inflow) and is nonnegative
negative_part, flow_gap = flow_residual(mdp, mu.mass)
print(f"negative part {negative_part:.2e}, flow imbalance {flow_gap:.2e}")

# identity 3: truncating the series sum_t gamma^t P(x_t = x, a_t = a) at
# horizon H leaves exactly the discounted tail, gamma^H / (1 - gamma)
print("\nSeries truncation error halves with every extra step (gamma = 1/2):")
for horizon in (5, 10, 20, 40):
    approx = truncated_series_occupancy(mdp, policy, horizon)
    gap = np.abs(mu.mass - approx.mass).sum()
    tail = mdp.discount**horizon / (1.0 - mdp.discount)
    print(f"  H = {horizon:2d}: ||solve - series||_1 = {gap:.3e}  (exact tail {tail:.3e})")

# the same comparison with no floating point at all: both the solve and the
# series can be carried out over the rationals, where the tail bound is an
# exact inequality between fractions
rng = np.random.default_rng(7)
rational_mdp = random_rational_mdp(rng, 4, 2)
rational_policy = random_rational_policy(rng, rational_mdp)
exact = exact_occupancy(rational_mdp, rational_policy)
series = exact_series_occupancy(rational_mdp, rational_policy, [20])[20]
gap = sum(abs(a - b) for a, b in zip(exact, series))
bound = 2 * rational_mdp.gamma**20
print("\nIn exact rational arithmetic (random 4-state, 2-action MDP):")
print(f"  gap at H = 20: {gap} = {float(gap):.3e}")
print(f"  tail bound   : {bound} = {float(bound):.3e}")
print(f"  gap <= bound : {gap <= bound}")
