"""End-to-end experiment orchestration.

A single JSON-friendly config describes the environment, the cost basis,
the candidate features, the expert data budget, and the training
hyperparameters; run_experiment derives one seed per stage from the master
seed, runs generate -> expert -> estimate -> train -> extract -> baseline,
and writes nine artifact files into the output directory.  Every file
records the seeds that produced it and nothing time-dependent, so reruns
with the same config are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .baseline import (
    BoundInputs,
    exact_al_solve,
    exact_solution_to_json,
    regret_report,
    regret_report_to_json,
)
from .expert import (
    default_horizon,
    empirical_feature_expectation,
    estimator_to_json,
    sample_trajectories,
    save_trajectories,
)
from .extraction import evaluate_theta, extraction_report
from .features import (
    build_feature_matrix,
    feature_expectation,
    load_basis,
    load_features,
    region_indicator_basis,
    sampling_constants,
    state_action_indicator_basis,
    validate_basis,
)
from .mdp import (
    chain_cost,
    make_chain,
    make_gridworld,
    make_random_mdp,
    mdp_to_json,
    occupancy_of_policy,
    policy_to_json,
    validate_mdp,
    value_iteration,
)
from .sgd import SgdConfig, certified_schedule, run_sgd_al

__all__ = [
    "ExperimentConfig",
    "PipelineError",
    "ARTIFACT_NAMES",
    "stage_seed",
    "run_experiment",
]

ARTIFACT_NAMES = (
    "mdp.json",
    "expert_policy.json",
    "trajectories.txt",
    "expert_fe.json",
    "trace.csv",
    "theta.json",
    "policy.json",
    "baseline.json",
    "regret_report.json",
)

_MASK64 = (1 << 64) - 1


class PipelineError(RuntimeError):
    """Raised when a stage fails; .stage names the failing stage."""

    def __init__(self, stage, message):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage


def _splitmix64(z):
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stage_seed(master_seed, stage):
    """Derive a stage's seed: splitmix64 of the master xor the stage tag.

    The tag is the first eight bytes of sha256(stage name), so stages can
    be rerun independently and adding a stage never shifts the others.
    """
    tag = int.from_bytes(hashlib.sha256(stage.encode()).digest()[:8], "big")
    return _splitmix64((int(master_seed) ^ tag) & _MASK64)


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one full run.

    environment: {"kind": "gridworld", width, height, discount, slip_prob}
                 | {"kind": "random", n_states, n_actions, discount}
                 | {"kind": "chain", discount}
    basis:       {"kind": "state-action-indicator"}
                 | {"kind": "region-indicator", n_blocks}
                 | {"kind": "file", path}
    features:    {"d": int, "beta": float} | {"kind": "file", path}
    expert:      {"vi_tolerance": float, "m": int, "horizon": int | None}
    sgd:         {"rho", "lam", "eta", "iterations", "batch_size"?}
                 | {"epsilon", "delta", "rho"} (hyperparameters are then
                 derived from the accuracy pair)
    """

    environment: dict
    basis: dict
    features: dict
    expert: dict
    sgd: dict
    out_dir: str
    master_seed: int
    scheme: str = "norm"

    @staticmethod
    def from_json(blob, out_dir=None, master_seed=None):
        blob = dict(blob)
        if out_dir is not None:
            blob["out_dir"] = out_dir
        if master_seed is not None:
            blob["master_seed"] = master_seed
        missing = [
            key
            for key in ("environment", "basis", "features", "expert", "sgd",
                        "out_dir", "master_seed")
            if key not in blob
        ]
        if missing:
            raise ValueError(f"config missing fields: {missing}")
        return ExperimentConfig(
            environment=dict(blob["environment"]),
            basis=dict(blob["basis"]),
            features=dict(blob["features"]),
            expert=dict(blob["expert"]),
            sgd=dict(blob["sgd"]),
            out_dir=str(blob["out_dir"]),
            master_seed=int(blob["master_seed"]),
            scheme=str(blob.get("scheme", "norm")),
        )

    def __post_init__(self):
        if self.scheme not in ("norm", "uniform"):
            raise ValueError(f"unknown sampling scheme {self.scheme!r}")
        for name in ("basis", "features"):
            spec = getattr(self, name)
            if spec.get("kind") == "file" and not os.path.exists(spec.get("path", "")):
                raise ValueError(f"{name} file not found: {spec.get('path')}")


def _require(spec, what, *keys):
    missing = [key for key in keys if key not in spec]
    if missing:
        raise ValueError(f"{what} spec missing fields: {missing}")


def _build_environment(spec, seed):
    kind = spec.get("kind")
    if kind == "gridworld":
        _require(spec, "environment", "width", "height", "discount")
        mdp, cost = make_gridworld(
            int(spec["width"]),
            int(spec["height"]),
            float(spec["discount"]),
            float(spec.get("slip_prob", 0.1)),
            seed=seed,
        )
    elif kind == "random":
        _require(spec, "environment", "n_states", "n_actions", "discount")
        mdp = make_random_mdp(
            int(spec["n_states"]),
            int(spec["n_actions"]),
            float(spec["discount"]),
            seed=seed,
        )
        rng = np.random.default_rng(seed)
        cost = rng.uniform(0.0, 1.0, size=(mdp.n_states, mdp.n_actions))
    elif kind == "chain":
        mdp = make_chain(float(spec.get("discount", 0.5)))
        cost = chain_cost()
    else:
        raise ValueError(f"unknown environment kind {kind!r}")
    problems = validate_mdp(mdp)
    if problems:
        raise ValueError(f"generated environment invalid: {problems}")
    return mdp, cost


def _build_basis(spec, mdp):
    kind = spec.get("kind")
    if kind == "state-action-indicator":
        basis = state_action_indicator_basis(mdp)
    elif kind == "region-indicator":
        _require(spec, "basis", "n_blocks")
        basis = region_indicator_basis(mdp, int(spec["n_blocks"]))
    elif kind == "file":
        _require(spec, "basis", "path")
        basis = load_basis(spec["path"])
    else:
        raise ValueError(f"unknown basis kind {kind!r}")
    problems = [p for p in validate_basis(basis, mdp) if not p.startswith("warning:")]
    if problems:
        raise ValueError(f"basis invalid: {problems}")
    return basis


def _build_features(spec, mdp, seed):
    if spec.get("kind") == "file":
        _require(spec, "features", "path")
        return load_features(spec["path"])
    _require(spec, "features", "d")
    return build_feature_matrix(
        mdp, int(spec["d"]), seed=seed, beta=float(spec.get("beta", 1.0e-3))
    )


def _resolve_sgd(spec, seed, phi, basis, mdp, scheme):
    """Explicit hyperparameters, or derive them from (epsilon, delta, rho)."""
    if "epsilon" in spec and "eta" not in spec:
        _require(spec, "sgd", "epsilon", "delta", "rho")
        epsilon = float(spec["epsilon"])
        delta = float(spec["delta"])
        rho = float(spec["rho"])
        lam = 1.0 / epsilon
        constants = sampling_constants(phi, mdp, basis, lam, scheme=scheme)
        schedule = certified_schedule(
            epsilon, delta, rho, phi.d, basis.n_costs, mdp.discount, constants.k
        )
        config = SgdConfig(
            rho=rho,
            lam=schedule.lam,
            eta=schedule.eta,
            iterations=schedule.iterations,
            seed=seed,
            epsilon=epsilon,
            delta=delta,
        )
        return config, constants
    _require(spec, "sgd", "rho", "lam", "eta", "iterations")
    config = SgdConfig(
        rho=float(spec["rho"]),
        lam=float(spec["lam"]),
        eta=float(spec["eta"]),
        iterations=int(spec["iterations"]),
        seed=seed,
        batch_size=int(spec.get("batch_size", 1)),
    )
    constants = sampling_constants(phi, mdp, basis, config.lam, scheme=scheme)
    return config, constants


def _dump_json(path, blob):
    with open(path, "w") as fh:
        json.dump(blob, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_trace_csv(path, trace, master_seed, seed):
    with open(path, "w") as fh:
        fh.write(f"# master_seed={master_seed} stage_seed={seed}\n")
        fh.write("iteration,loss_total,loss_objective,v1,v2,grad_norm\n")
        for i in range(trace.iteration.size):
            fh.write(
                f"{int(trace.iteration[i])},{float(trace.loss_total[i])!r},"
                f"{float(trace.loss_objective[i])!r},{float(trace.v1[i])!r},"
                f"{float(trace.v2[i])!r},{float(trace.grad_norm[i])!r}\n"
            )


def run_experiment(config):
    """Run every stage and write the nine artifact files.

    Returns {artifact name: path}.  On any failure the partially written
    artifacts are removed and a PipelineError naming the stage is raised.
    """
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    paths = {name: os.path.join(out, name) for name in ARTIFACT_NAMES}
    master = config.master_seed
    seeds = {
        name: stage_seed(master, name)
        for name in ("environment", "features", "expert-trajectories", "sgd")
    }
    stage = "environment"
    try:
        mdp, true_cost = _build_environment(config.environment, seeds["environment"])
        blob = mdp_to_json(mdp)
        blob.update(master_seed=master, stage_seed=seeds["environment"])
        _dump_json(paths["mdp.json"], blob)

        stage = "expert-policy"
        expert_policy, _ = value_iteration(
            mdp, true_cost, tolerance=float(config.expert.get("vi_tolerance", 1e-10))
        )
        blob = policy_to_json(expert_policy)
        blob.update(master_seed=master, stage_seed=None)
        _dump_json(paths["expert_policy.json"], blob)

        stage = "basis"
        basis = _build_basis(config.basis, mdp)

        stage = "features"
        phi = _build_features(config.features, mdp, seeds["features"])

        stage = "expert-trajectories"
        _require(config.expert, "expert", "m")
        horizon = config.expert.get("horizon")
        if horizon is None:
            horizon = default_horizon(mdp.discount)
        horizon = int(horizon)
        m = int(config.expert["m"])
        trajectories = sample_trajectories(
            mdp, expert_policy, m, horizon, seeds["expert-trajectories"]
        )
        save_trajectories(
            paths["trajectories.txt"],
            trajectories,
            header=f"master_seed={master} stage_seed={seeds['expert-trajectories']}",
        )
        estimate = empirical_feature_expectation(
            trajectories, basis, mdp.discount, mdp.n_actions
        )
        blob = estimator_to_json(estimate)
        blob.update(master_seed=master, stage_seed=seeds["expert-trajectories"])
        _dump_json(paths["expert_fe.json"], blob)

        stage = "sgd"
        sgd_config, constants = _resolve_sgd(
            config.sgd, seeds["sgd"], phi, basis, mdp, config.scheme
        )
        trace, trained_policy = run_sgd_al(
            sgd_config, phi, basis, mdp, estimate, constants
        )
        _write_trace_csv(paths["trace.csv"], trace, master, seeds["sgd"])
        _dump_json(
            paths["theta.json"],
            {
                "theta": trace.theta_avg.tolist(),
                "sgd": {
                    "rho": sgd_config.rho,
                    "lam": sgd_config.lam,
                    "eta": sgd_config.eta,
                    "iterations": sgd_config.iterations,
                    "batch_size": sgd_config.batch_size,
                    "epsilon": sgd_config.epsilon,
                    "delta": sgd_config.delta,
                },
                "scheme": config.scheme,
                "master_seed": master,
                "stage_seed": seeds["sgd"],
            },
        )

        stage = "policy-extraction"
        candidate = np.asarray(phi.phi) @ trace.theta_avg
        report = extraction_report(candidate, mdp)
        blob = policy_to_json(trained_policy)
        blob.update(
            l1_distance_bound=report.violation_bound,
            uniform_fallback_states=list(report.uniform_fallback_states),
            master_seed=master,
            stage_seed=seeds["sgd"],
        )
        _dump_json(paths["policy.json"], blob)

        stage = "baseline"
        expert_mu = occupancy_of_policy(mdp, expert_policy)
        true_fe = feature_expectation(expert_mu, basis)
        exact = exact_al_solve(mdp, basis, true_fe)
        blob = exact_solution_to_json(exact)
        blob.update(master_seed=master, stage_seed=None)
        _dump_json(paths["baseline.json"], blob)

        stage = "regret-report"
        trained = evaluate_theta(trace.theta_avg, phi, basis, mdp, true_fe)
        epsilon = sgd_config.epsilon
        if epsilon is None:
            epsilon = 1.0 / sgd_config.lam if sgd_config.lam > 0 else float("inf")
        inputs = BoundInputs(
            epsilon=epsilon,
            lam=sgd_config.lam,
            rho=sgd_config.rho,
            d=phi.d,
            n_costs=basis.n_costs,
            gamma=mdp.discount,
            psi_inf_norm=float(np.abs(basis.psi).max()),
            phi_one_norm=float(np.abs(np.asarray(phi.phi)).sum(axis=0).max()),
        )
        rep = regret_report(trained, exact, inputs)
        blob = regret_report_to_json(rep)
        blob.update(master_seed=master, stage_seed=None)
        _dump_json(paths["regret_report.json"], blob)
    except Exception as exc:
        for path in paths.values():
            if os.path.exists(path):
                os.remove(path)
        if isinstance(exc, PipelineError):
            raise
        raise PipelineError(stage, str(exc)) from exc
    return paths
