"""Policy extraction from arbitrary candidate vectors and its distance bound.

The central inequality: the occupancy measure of the extracted policy is
within (2 * negativity + flow gap) / (1 - g) of the candidate in l1.  A
feasible candidate therefore round-trips exactly, and the zero vector is
the tight case: extraction falls back to the uniform policy, whose
occupancy has mass 1/(1 - g), equal to the bound ||nu0||_1 / (1 - g).
"""

import numpy as np
import pytest

from occupal import (
    Policy,
    build_feature_matrix,
    deterministic_policy,
    evaluate_theta,
    extraction_report,
    feature_expectation,
    l1_feature_gap,
    make_chain,
    make_random_mdp,
    occupancy_of_policy,
    policy_from_vector,
    state_action_indicator_basis,
    uniform_policy,
)

CHAIN = make_chain(0.5)


def test_round_trip_recovers_policy_rows():
    rng = np.random.default_rng(0)
    mdp = make_random_mdp(5, 3, 0.8, seed=1)
    probs = rng.uniform(0.2, 1.0, (5, 3))
    policy = Policy(probs / probs.sum(axis=1, keepdims=True))
    mu = occupancy_of_policy(mdp, policy)
    recovered = policy_from_vector(mu.mass, mdp)
    assert np.abs(recovered.probs - policy.probs).max() < 1e-10


def test_nonpositive_vector_gives_uniform_policy():
    policy = policy_from_vector(-np.ones(4), CHAIN)
    assert np.array_equal(policy.probs, np.full((2, 2), 0.5))
    report = extraction_report(-np.ones(4), CHAIN)
    assert report.uniform_fallback_states == (0, 1)


def test_row_normalization():
    u = np.array([3.0, 1.0, 0.0, -2.0])
    policy = policy_from_vector(u, CHAIN)
    assert policy.probs[0].tolist() == [0.75, 0.25]
    assert policy.probs[1].tolist() == [0.5, 0.5]  # no positive mass: uniform


def test_extraction_is_scale_invariant():
    rng = np.random.default_rng(2)
    mdp = make_random_mdp(4, 3, 0.7, seed=3)
    for _ in range(20):
        u = rng.normal(0.0, 1.0, 12)
        base = policy_from_vector(u, mdp)
        # power-of-two scalings commute with division exactly
        for c in (0.25, 0.5, 2.0, 1024.0):
            assert np.array_equal(policy_from_vector(c * u, mdp).probs, base.probs)
        for c in (1e-6, 7.0, 1e6):
            assert np.abs(policy_from_vector(c * u, mdp).probs - base.probs).max() < 1e-12


def test_negative_parts_do_not_shift_extraction():
    u = np.array([3.0, 1.0, -5.0, 0.5])
    clipped = np.array([3.0, 1.0, 0.0, 0.5])
    assert np.array_equal(
        policy_from_vector(u, CHAIN).probs, policy_from_vector(clipped, CHAIN).probs
    )


# ---------------------------------------------------------------------------
# the distance bound


def test_feasible_candidate_round_trips():
    """Occupancy in, occupancy out: distance and bound both vanish."""
    rng = np.random.default_rng(4)
    for _ in range(10):
        mdp = make_random_mdp(5, 2, 0.75, seed=int(rng.integers(2**31)))
        probs = rng.uniform(0.1, 1.0, (5, 2))
        policy = Policy(probs / probs.sum(axis=1, keepdims=True))
        mu = occupancy_of_policy(mdp, policy)
        report = extraction_report(mu.mass, mdp)
        assert report.l1_distance < 1e-8
        assert report.violation_bound < 1e-8
        assert np.abs(report.mu.mass - mu.mass).sum() < 1e-8


def test_zero_vector_is_the_tight_case():
    report = extraction_report(np.zeros(4), CHAIN)
    assert report.l1_distance == pytest.approx(2.0, abs=1e-10)
    assert report.violation_bound == pytest.approx(2.0, abs=1e-12)
    assert np.array_equal(report.policy.probs, np.full((2, 2), 0.5))


def test_distance_bound_holds_on_random_vectors():
    rng = np.random.default_rng(5)
    for _ in range(20):
        mdp = make_random_mdp(
            int(rng.integers(2, 7)), int(rng.integers(1, 4)),
            float(rng.uniform(0.3, 0.9)), seed=int(rng.integers(2**31)),
        )
        for _ in range(50):
            scale = float(rng.uniform(0.1, 5.0))
            u = rng.normal(0.0, scale, mdp.n_pairs)
            report = extraction_report(u, mdp)
            assert report.l1_distance <= report.violation_bound + 1e-8
            # the intermediate constant bounds the distance to the positive
            # part of the candidate (one triangle step short of u itself)
            dist_to_pos = float(np.abs(report.mu.mass - np.maximum(u, 0.0)).sum())
            assert dist_to_pos <= report.positive_part_bound + 1e-8
            assert report.positive_part_bound <= report.violation_bound + 1e-12


def test_report_bound_formula():
    mdp = make_random_mdp(4, 2, 0.6, seed=6)
    u = np.array([0.5, -0.2, 0.3, 0.1, -0.4, 0.2, 0.6, 0.05])
    report = extraction_report(u, mdp)
    neg = 0.6
    incidence = np.kron(np.eye(4), np.ones(2))
    gap = float(np.abs((incidence - 0.6 * mdp.transition.T) @ u - mdp.initial_dist).sum())
    assert report.violation_bound == pytest.approx((2 * neg + gap) / 0.4, rel=1e-12)
    assert report.positive_part_bound == pytest.approx(
        (1.6 * neg + gap) / 0.4, rel=1e-12
    )


# ---------------------------------------------------------------------------
# evaluating parameter vectors


def test_exact_expert_parameter_has_zero_gap():
    expert = deterministic_policy(CHAIN, [1, 0])
    mu_expert = occupancy_of_policy(CHAIN, expert)
    phi = np.column_stack([mu_expert.mass, np.ones(4)])
    basis = state_action_indicator_basis(CHAIN)
    expert_fe = feature_expectation(mu_expert, basis)
    mu, gap = evaluate_theta(np.array([1.0, 0.0]), phi, basis, CHAIN, expert_fe)
    assert gap < 1e-10
    assert np.abs(mu.mass - mu_expert.mass).sum() < 1e-10


def test_zero_parameter_extracts_uniform_policy():
    phi = build_feature_matrix(CHAIN, 2, seed=7)
    basis = state_action_indicator_basis(CHAIN)
    uniform_mu = occupancy_of_policy(CHAIN, uniform_policy(CHAIN))
    expert_fe = feature_expectation(uniform_mu, basis)
    mu, gap = evaluate_theta(np.zeros(2), phi, basis, CHAIN, expert_fe)
    assert np.abs(mu.mass - uniform_mu.mass).sum() < 1e-10
    assert gap < 1e-10


def test_gap_invariant_to_positive_scaling():
    phi = build_feature_matrix(CHAIN, 2, seed=8)
    basis = state_action_indicator_basis(CHAIN)
    target = feature_expectation(
        occupancy_of_policy(CHAIN, deterministic_policy(CHAIN, [1, 1])), basis
    )
    theta = np.array([0.4, 0.6])  # positive combination: Phi theta > 0
    _, gap = evaluate_theta(theta, phi, basis, CHAIN, target)
    for c in (0.1, 3.0, 250.0):
        _, scaled = evaluate_theta(c * theta, phi, basis, CHAIN, target)
        assert scaled == pytest.approx(gap, abs=1e-12)
