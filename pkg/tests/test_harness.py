import json
import logging
import os

import pytest
from pydantic import ValidationError

from loopsoup_lab.errors import ConfigurationError
from loopsoup_lab.harness import cli, io
from loopsoup_lab.harness.experiments import CRITERION_OWNERS, EXPERIMENTS
from loopsoup_lab.harness.models import (
    EXPERIMENT_IDS, CutoffSpec, DomainSpec, ExperimentConfig, ExperimentOptions, FieldSpec, SuiteConfig,
)
from loopsoup_lab.harness.pipeline import run_experiment
from loopsoup_lab.logging import structured_logger


@pytest.fixture
def quiet_log(tmp_path, monkeypatch):
    monkeypatch.setattr(structured_logger, "LOG_FILE", str(tmp_path / "logs" / "run.jsonl"))
    monkeypatch.setattr(structured_logger, "REDIS_URL", "")
    yield
    root = logging.getLogger("loopsoup_lab")
    for handler in list(root.handlers):
        handler.close()
    root.handlers.clear()


# ==================== models ====================


def test_unknown_keys_are_rejected():
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({"experiment": "onepoint", "n_reps": 10})
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({"experiment": "sixpoint"})


def test_cutoff_deltas_must_be_positive():
    with pytest.raises(ValidationError):
        CutoffSpec(deltas=[])
    with pytest.raises(ValidationError):
        CutoffSpec(deltas=[0.1, -0.1])


def test_suite_defaults_cover_every_experiment():
    suite = SuiteConfig(seed=7)
    assert [c.experiment for c in suite.experiments] == list(EXPERIMENT_IDS)
    assert len(suite.experiments) == 11
    assert all(c.seed == 7 for c in suite.experiments)


def test_every_criterion_has_an_owner():
    assert sorted(CRITERION_OWNERS) == list(range(1, 16))
    assert set(EXPERIMENTS) == set(EXPERIMENT_IDS)
    assert set(CRITERION_OWNERS.values()) - {"suite"} <= set(EXPERIMENT_IDS)


# ==================== io ====================


def test_csv_cells_round_trip_exactly(tmp_path):
    path = io.write_csv(str(tmp_path / "a.csv"), ["x", "ok", "n"], [[0.1 + 0.2, True, 3]])
    row = io.read_csv(path)[0]
    assert float(row["x"]) == 0.1 + 0.2
    assert row["ok"] == "1" and row["n"] == "3"


def test_identical_csv_trees(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        io.write_csv(str(d / "sub" / "x.csv"), ["v"], [[1.5]])
    assert io.identical_csv_trees(str(a), str(b)) == (True, [])
    io.write_csv(str(b / "sub" / "x.csv"), ["v"], [[1.25]])
    assert io.identical_csv_trees(str(a), str(b)) == (False, [os.path.join("sub", "x.csv")])
    io.write_csv(str(b / "y.csv"), ["v"], [])
    same, names = io.identical_csv_trees(str(a), str(b))
    assert not same and names == ["y.csv"]


def test_config_hash_tracks_content():
    a = ExperimentConfig(experiment="onepoint")
    assert io.config_hash(a) == io.config_hash(ExperimentConfig(experiment="onepoint"))
    assert io.config_hash(a) != io.config_hash(a.model_copy(update={"seed": 1}))


def test_bad_config_file_raises_configuration_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"experiment": "onepoint", "unknown": 1}))
    with pytest.raises(ConfigurationError):
        io.load_experiment_config(str(path))
    path.write_text("{not json")
    with pytest.raises(ConfigurationError):
        io.load_suite_config(str(path))


# ==================== cli ====================


def test_parser_accepts_alpha_action():
    args = cli.build_parser().parse_args(["alpha", "build", "--seed", "4"])
    assert args.command == "alpha" and args.action == "build" and args.seed == 4
    args = cli.build_parser().parse_args(["onepoint", "--out", "x"])
    assert args.out == "x" and not hasattr(args, "action")
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["alpha", "rebuild"])


def test_cli_overrides_seed_and_action(tmp_path):
    path = tmp_path / "alpha.json"
    path.write_text(ExperimentConfig(experiment="alpha").model_dump_json())
    args = cli.build_parser().parse_args(["alpha", "check", "--config", str(path), "--seed", "9"])
    config = cli._experiment_config(args)
    assert config.seed == 9 and config.options.action == "check"


def test_cli_rejects_config_for_other_experiment(tmp_path, quiet_log):
    path = tmp_path / "onepoint.json"
    path.write_text(ExperimentConfig(experiment="onepoint").model_dump_json())
    assert cli.main(["twopoint", "--config", str(path), "--out", str(tmp_path / "out")]) == 2


# ==================== pipeline ====================


def _square_conformal() -> ExperimentConfig:
    return ExperimentConfig(experiment="conformal", domain=DomainSpec(kind="square", side=2.0))


def test_library_errors_end_up_in_the_manifest(tmp_path):
    manifest = run_experiment(_square_conformal(), str(tmp_path))
    assert manifest.status == "error"
    assert "ConfigurationError" in manifest.error
    written = json.loads((tmp_path / "manifest.json").read_text())
    assert written["status"] == "error"
    assert written["config_hash"] == manifest.config_hash


def test_cli_exit_status_reflects_manifest(tmp_path, quiet_log):
    path = tmp_path / "conformal.json"
    path.write_text(_square_conformal().model_dump_json())
    assert cli.main(["conformal", "--config", str(path), "--out", str(tmp_path / "out")]) == 1
    assert (tmp_path / "out" / "manifest.json").exists()


@pytest.mark.slow
def test_onepoint_rerun_is_bit_identical(tmp_path):
    config = ExperimentConfig(
        experiment="onepoint", n_rep=20, seed=3,
        cutoffs=CutoffSpec(deltas=[0.2], R=0.5),
        options=ExperimentOptions(skellam_n_rep=200),
    )
    first = run_experiment(config, str(tmp_path / "a"))
    second = run_experiment(config, str(tmp_path / "b"))
    assert first.files == second.files and first.files
    assert io.identical_csv_trees(str(tmp_path / "a"), str(tmp_path / "b")) == (True, [])


def test_isometry_needs_six_chaos_orders():
    with pytest.raises(ValidationError):
        ExperimentOptions(q_max=4)
    assert ExperimentOptions().q_max == 6


@pytest.mark.slow
def test_conformal_covariance_under_mobius_map(tmp_path):
    config = ExperimentConfig(
        experiment="conformal", n_rep=2000, lam_probe=4.0, seed=5,
        field=FieldSpec(lam=1.0, betas=[0.8]),
        options=ExperimentOptions(mobius_a=(0.4, 0.0)),
    )
    manifest = run_experiment(config, str(tmp_path))
    (result,) = manifest.criteria
    assert result.id == 6
    assert result.measured["identity_ratio"] == 1.0
    assert result.measured["mobius"]["relative_gap"] <= 0.05
    assert manifest.status == "passed"
