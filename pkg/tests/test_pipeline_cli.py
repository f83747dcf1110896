"""End-to-end pipeline runs and the command-line front end.

run_experiment must write all nine artifacts, be byte-reproducible from
(config, master seed) alone, name the failing stage and clean up after
itself on errors, and record the derived hyperparameters exactly when the
config gives an accuracy pair instead of explicit settings.  The CLI must
expose every stage as a stateless subcommand whose outputs match a full
run, and report validation failures and internal errors through its exit
code.
"""

import hashlib
import json
import os

import numpy as np
import pytest

from occupal import (
    build_feature_matrix,
    empirical_feature_expectation,
    load_trajectories,
    make_chain,
    region_indicator_basis,
    sampling_constants,
)
from occupal.cli import main
from occupal.pipeline import (
    ARTIFACT_NAMES,
    ExperimentConfig,
    PipelineError,
    run_experiment,
    stage_seed,
)
from occupal.sgd import certified_schedule


def chain_config(out_dir, seed=7, **overrides):
    blob = {
        "environment": {"kind": "chain", "discount": 0.5},
        "basis": {"kind": "region-indicator", "n_blocks": 2},
        "features": {"d": 2},
        "expert": {"m": 50},
        "sgd": {"rho": 2.0, "lam": 5.0, "eta": 0.01, "iterations": 100},
        "out_dir": str(out_dir),
        "master_seed": seed,
    }
    blob.update(overrides)
    return blob


def write_config(tmp_path, blob, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(blob))
    return str(path)


def read_artifacts(out_dir):
    return {name: (out_dir / name).read_bytes() for name in ARTIFACT_NAMES}


# ---------------------------------------------------------------------------
# full pipeline runs

def test_smoke_run_writes_all_artifacts(tmp_path):
    out = tmp_path / "run"
    paths = run_experiment(ExperimentConfig.from_json(chain_config(out)))
    assert set(paths) == set(ARTIFACT_NAMES)
    for name, path in paths.items():
        assert os.path.exists(path), name
        assert os.path.getsize(path) > 0, name

    mdp_blob = json.loads((out / "mdp.json").read_text())
    assert mdp_blob["master_seed"] == 7
    assert "stage_seed" in mdp_blob

    report = json.loads((out / "regret_report.json").read_text())
    for key in ("lhs", "comparator_gap", "violation_term",
                "approximation_term", "epsilon_term", "rhs", "holds"):
        assert key in report
    assert isinstance(report["holds"], bool)
    assert report["lhs"] >= 0.0 and report["rhs"] >= report["comparator_gap"]

    baseline = json.loads((out / "baseline.json").read_text())
    assert baseline["method"] == "lp-simplex"
    assert baseline["objective"] >= 0.0

    trace_lines = (out / "trace.csv").read_text().splitlines()
    assert trace_lines[0].startswith("# master_seed=7 stage_seed=")
    assert trace_lines[1] == "iteration,loss_total,loss_objective,v1,v2,grad_norm"
    assert len(trace_lines) == 2 + 100


def test_rerun_is_byte_identical(tmp_path):
    run_experiment(ExperimentConfig.from_json(chain_config(tmp_path / "a")))
    run_experiment(ExperimentConfig.from_json(chain_config(tmp_path / "b")))
    first = read_artifacts(tmp_path / "a")
    second = read_artifacts(tmp_path / "b")
    for name in ARTIFACT_NAMES:
        assert first[name] == second[name], f"{name} differs between reruns"


def test_accuracy_pair_config_records_derived_schedule(tmp_path):
    out = tmp_path / "run"
    config = chain_config(out, seed=11, sgd={"epsilon": 0.9, "delta": 0.5, "rho": 2.0})
    run_experiment(ExperimentConfig.from_json(config))
    blob = json.loads((out / "theta.json").read_text())

    # independent recomputation of the certified hyperparameters
    mdp = make_chain(0.5)
    basis = region_indicator_basis(mdp, 2)
    phi = build_feature_matrix(mdp, 2, seed=stage_seed(11, "features"), beta=1e-3)
    constants = sampling_constants(phi, mdp, basis, 1.0 / 0.9)
    schedule = certified_schedule(0.9, 0.5, 2.0, 2, 2, 0.5, constants.k)

    assert blob["sgd"]["lam"] == schedule.lam
    assert blob["sgd"]["eta"] == schedule.eta
    assert blob["sgd"]["iterations"] == schedule.iterations
    assert blob["sgd"]["epsilon"] == 0.9
    assert blob["sgd"]["delta"] == 0.5
    assert blob["sgd"]["rho"] == 2.0
    assert len(blob["theta"]) == 2


def test_partial_outputs_removed_on_stage_failure(tmp_path):
    out = tmp_path / "run"
    config = chain_config(
        out, sgd={"rho": 2.0, "lam": -5.0, "eta": 0.01, "iterations": 100}
    )
    with pytest.raises(PipelineError, match="stage 'sgd'") as excinfo:
        run_experiment(ExperimentConfig.from_json(config))
    assert excinfo.value.stage == "sgd"
    assert isinstance(excinfo.value.__cause__, ValueError)
    # the stages before sgd had already written their files; all are gone
    assert not any((out / name).exists() for name in ARTIFACT_NAMES)


def test_trajectories_round_trip(tmp_path):
    out = tmp_path / "run"
    run_experiment(ExperimentConfig.from_json(chain_config(out)))
    header = (out / "trajectories.txt").read_text().splitlines()[0]
    assert header.startswith("# master_seed=7 stage_seed=")

    loaded = load_trajectories(out / "trajectories.txt")
    estimate_blob = json.loads((out / "expert_fe.json").read_text())
    assert loaded.shape == (50, estimate_blob["horizon"], 2)

    mdp = make_chain(0.5)
    basis = region_indicator_basis(mdp, 2)
    recomputed = empirical_feature_expectation(loaded, basis, 0.5, mdp.n_actions)
    assert np.array_equal(recomputed.values, np.array(estimate_blob["values"]))
    assert recomputed.m == estimate_blob["m"]
    assert recomputed.truncation_bound == estimate_blob["truncation_bound"]


def test_stage_seed_derivation():
    # documented rule: splitmix64 of (master xor first8(sha256(stage name)))
    def splitmix64(z):
        mask = (1 << 64) - 1
        z = (z + 0x9E3779B97F4A7C15) & mask
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        return z ^ (z >> 31)

    for master in (0, 7, 2**63):
        for stage in ("environment", "features", "expert-trajectories", "sgd"):
            tag = int.from_bytes(hashlib.sha256(stage.encode()).digest()[:8], "big")
            expected = splitmix64((master ^ tag) & ((1 << 64) - 1))
            assert stage_seed(master, stage) == expected

    seeds = [stage_seed(7, s) for s in ("environment", "features", "sgd")]
    assert len(set(seeds)) == 3
    assert stage_seed(7, "sgd") != stage_seed(8, "sgd")


# ---------------------------------------------------------------------------
# the command line

def test_cli_run_and_staged_subcommands_agree(tmp_path, capsys):
    full = tmp_path / "full"
    staged = tmp_path / "staged"
    config_path = write_config(tmp_path, chain_config(full))

    assert main(["run", "--config", config_path]) == 0
    for command in ("generate", "expert", "train", "baseline"):
        assert main([command, "--config", config_path, "--out", str(staged)]) == 0

    # every artifact a subcommand writes is byte-identical to the full run
    staged_names = [n for n in ARTIFACT_NAMES if n != "regret_report.json"]
    for name in staged_names:
        assert (staged / name).read_bytes() == (full / name).read_bytes(), name

    capsys.readouterr()
    code = main([
        "evaluate", "--config", config_path,
        "--theta", str(staged / "theta.json"),
    ])
    assert code == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["feature_gap_vs_expert"] >= 0.0
    assert summary["occupancy_mass"] == pytest.approx(2.0, abs=1e-9)
    assert summary["loss_total"] >= summary["loss_objective"]


def test_cli_overrides(tmp_path):
    out = tmp_path / "other"
    config_path = write_config(tmp_path, chain_config(tmp_path / "ignored"))
    assert main([
        "run", "--config", config_path, "--out", str(out), "--seed", "21",
        "--scheme", "uniform",
    ]) == 0
    mdp_blob = json.loads((out / "mdp.json").read_text())
    assert mdp_blob["master_seed"] == 21
    theta_blob = json.loads((out / "theta.json").read_text())
    assert theta_blob["scheme"] == "uniform"
    assert theta_blob["master_seed"] == 21


def test_cli_parallel_seeds(tmp_path):
    parent = tmp_path / "sweep"
    config_path = write_config(tmp_path, chain_config(parent))
    assert main(["run", "--config", config_path, "--parallel-seeds", "2"]) == 0
    for seed in (7, 8):
        sub = parent / f"seed-{seed}"
        for name in ARTIFACT_NAMES:
            assert (sub / name).exists(), f"seed-{seed}/{name}"

    # each sweep member equals a directly seeded run
    direct = tmp_path / "direct"
    run_experiment(ExperimentConfig.from_json(chain_config(direct, seed=8)))
    assert (parent / "seed-8" / "trace.csv").read_bytes() == (
        direct / "trace.csv"
    ).read_bytes()


def test_cli_verify_passes():
    assert main(["verify"]) == 0


def test_cli_validation_exit_codes(tmp_path):
    # missing config file
    assert main(["run", "--config", str(tmp_path / "absent.json")]) == 1
    # malformed JSON
    broken = tmp_path / "broken.json"
    broken.write_text("{ not json")
    assert main(["run", "--config", str(broken)]) == 1
    # structurally incomplete config
    assert main(["run", "--config", write_config(
        tmp_path, {"environment": {"kind": "chain"}}, "incomplete.json"
    )]) == 1
    # unknown environment kind fails the environment stage as validation
    bad_kind = chain_config(tmp_path / "x")
    bad_kind["environment"] = {"kind": "hexworld"}
    assert main(["run", "--config", write_config(tmp_path, bad_kind, "kind.json")]) == 1
    # missing per-kind fields are validation failures, not internal errors
    bad_grid = chain_config(tmp_path / "y")
    bad_grid["environment"] = {"kind": "gridworld", "discount": 0.9}
    assert main(["run", "--config", write_config(tmp_path, bad_grid, "grid.json")]) == 1
    # referenced basis file must exist
    bad_file = chain_config(tmp_path / "z")
    bad_file["basis"] = {"kind": "file", "path": str(tmp_path / "nope.npz")}
    assert main(["run", "--config", write_config(tmp_path, bad_file, "file.json")]) == 1


def test_cli_internal_error_exit_codes(tmp_path, monkeypatch):
    config_path = write_config(tmp_path, chain_config(tmp_path / "run"))

    def explode(config):
        raise RuntimeError("synthetic crash")

    monkeypatch.setattr("occupal.cli.run_experiment", explode)
    assert main(["run", "--config", config_path]) == 2


def test_cli_internal_stage_failure_cleans_up(tmp_path, monkeypatch):
    out = tmp_path / "run"
    config_path = write_config(tmp_path, chain_config(out))

    def explode(mdp, cost, tolerance=1e-10):
        raise RuntimeError("synthetic solver crash")

    monkeypatch.setattr("occupal.pipeline.value_iteration", explode)
    assert main(["run", "--config", config_path]) == 2
    assert not any((out / name).exists() for name in ARTIFACT_NAMES)
