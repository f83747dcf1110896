"""What accuracy costs: certified hyperparameter schedules.

Given a target accuracy epsilon and failure probability delta, the library
derives every hyperparameter -- penalty weight, sample size, horizon,
iteration count, step size -- so that the trained policy's performance
guarantee holds with probability at least 1 - delta.  This script prints
the schedule across accuracies and shows how the iteration count reacts
to the parameter-ball radius.
"""

import numpy as np

from occupal import (
    build_feature_matrix,
    make_chain,
    region_indicator_basis,
    sampling_constants,
)
from occupal.expert import default_horizon, hoeffding_sample_size
from occupal.sgd import certified_schedule

mdp = make_chain(0.5)
basis = region_indicator_basis(mdp, 2)
phi = build_feature_matrix(mdp, 3, seed=5)
rho, delta = 2.0, 0.1

print("== The price of accuracy (chain, 2 cost features, d = 3, delta = 0.1) ==")
print(f"{'epsilon':>8} {'lambda':>8} {'m':>10} {'H':>5} {'T':>12} {'eta':>12}")
for epsilon in (0.9, 0.7, 0.5, 0.3, 0.2):
    lam = 1.0 / epsilon
    constants = sampling_constants(phi, mdp, basis, lam)
    schedule = certified_schedule(
        epsilon, delta, rho, phi.d, basis.n_costs, mdp.discount, constants.k
    )
    m = hoeffding_sample_size(basis.n_costs, mdp.discount, epsilon, delta)
    horizon = default_horizon(mdp.discount)
    print(
        f"{epsilon:>8.2f} {schedule.lam:>8.3f} {m:>10d} {horizon:>5d} "
        f"{schedule.iterations:>12d} {schedule.eta:>12.3e}"
    )

print("\nHalving epsilon multiplies the iteration budget by roughly four")
print("(the 1/epsilon^2 rate, inflated slightly by the logarithmic factors")
print("and by the penalty weight lambda = 1/epsilon growing inside K).")

print("\n== Sensitivity to the parameter-ball radius ==")
epsilon = 0.5
lam = 1.0 / epsilon
constants = sampling_constants(phi, mdp, basis, lam)
previous = None
for radius in (1.0, 2.0, 4.0, 8.0):
    schedule = certified_schedule(
        epsilon, delta, radius, phi.d, basis.n_costs, mdp.discount, constants.k
    )
    note = ""
    if previous is not None:
        note = f"  ({schedule.iterations / previous:.2f}x the previous row)"
    previous = schedule.iterations
    print(f"  rho = {radius:>4.1f}: T = {schedule.iterations:>10d}{note}")

print("\nDoubling the radius roughly quadruples T: the regret scales with")
print("rho * K * sqrt(T), so the iteration count must absorb rho squared.")
