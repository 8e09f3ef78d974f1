import json
import math

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from lassokmeans.cli.commands import cli
from lassokmeans.config import BOUND_COLUMNS, PATH_COLUMNS, RECOVERY_COLUMNS, SCREEN_COLUMNS
from lassokmeans.core import Dataset
from lassokmeans.estimators.weights import lambda_theory, plain_weights
from lassokmeans.utils.data_loader import load_dataset, read_frame, save_dataset_csv


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def square_csv(tmp_path, square_dataset):
    path = tmp_path / "square.csv"
    save_dataset_csv(square_dataset, path)
    return path


@pytest.fixture
def clusters_csv(tmp_path, gaussian_dataset):
    points = np.column_stack([gaussian_dataset.points, np.zeros(gaussian_dataset.n)])
    path = tmp_path / "clusters.csv"
    save_dataset_csv(Dataset.from_points(points), path)
    return path


def test_generate_is_reproducible(runner, tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (first, second):
        result = runner.invoke(cli, ["generate", "--n", "1000", "--seed", "3", "--out", str(out)])
        assert result.exit_code == 0, result.output
    assert first.read_bytes() == second.read_bytes()
    assert (tmp_path / "a.spec.json").read_bytes() == (tmp_path / "b.spec.json").read_bytes()
    X = load_dataset(first)
    sidecar = json.loads((tmp_path / "a.spec.json").read_text())
    assert X.n == 1000
    assert np.all(np.linalg.norm(X.points, axis=1) <= sidecar["spec"]["radius"])
    assert sidecar["config"]["command"] == "generate"


def test_generate_rejects_empty_sample(runner, tmp_path):
    result = runner.invoke(cli, ["generate", "--n", "0", "--out", str(tmp_path / "x.csv")])
    assert result.exit_code == 2


def test_fit_writes_report_and_trace(runner, tmp_path, clusters_csv):
    out, trace = tmp_path / "fit.json", tmp_path / "trace.csv"
    result = runner.invoke(cli, ["fit", str(clusters_csv), "--k", "2", "--lambda", "0.2",
                                 "--restarts", "4", "--out", str(out), "--trace", str(trace)])
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text())
    assert report["result"]["lambda"] == 0.2
    assert 3 not in report["result"]["active_set"]
    assert report["config"]["params"]["restarts"] == 4
    assert len(report["config"]["inputs_sha256"]) == 1
    assert len(pd.read_csv(trace)) == len(report["result"]["trace"])


def test_fit_huge_lambda_has_empty_active_set(runner, tmp_path, clusters_csv):
    out = tmp_path / "fit.json"
    result = runner.invoke(cli, ["fit", str(clusters_csv), "--k", "2", "--lambda", "1000", "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert json.loads(out.read_text())["result"]["active_set"] == []


def test_fit_with_theory_lambda(runner, tmp_path, clusters_csv):
    out = tmp_path / "fit.json"
    result = runner.invoke(cli, ["fit", str(clusters_csv), "--k", "2", "--lambda-theory", "--out", str(out)])
    assert result.exit_code == 0, result.output
    X = load_dataset(clusters_csv)
    theory = lambda_theory(2, X.d, X.n, plain_weights(X.d, X.bounds), math.log(X.n))
    assert json.loads(out.read_text())["lambda"] == pytest.approx(theory.lambda1 / 0.5)


def test_fit_needs_exactly_one_lambda(runner, tmp_path, clusters_csv):
    out = str(tmp_path / "fit.json")
    assert runner.invoke(cli, ["fit", str(clusters_csv), "--k", "2", "--out", out]).exit_code == 2
    both = ["fit", str(clusters_csv), "--k", "2", "--lambda", "1", "--lambda-theory", "--out", out]
    assert runner.invoke(cli, both).exit_code == 2


def test_fit_rejects_too_many_clusters(runner, tmp_path, square_csv):
    result = runner.invoke(cli, ["fit", str(square_csv), "--k", "9", "--lambda", "0",
                                 "--out", str(tmp_path / "fit.json")])
    assert result.exit_code == 2


def test_fit_with_threshold_weights(runner, tmp_path, clusters_csv):
    out = tmp_path / "fit.json"
    result = runner.invoke(cli, ["fit", str(clusters_csv), "--k", "2", "--lambda", "0.1",
                                 "--weights", "threshold:0.1", "--out", str(out)])
    assert result.exit_code == 0, result.output
    weights = json.loads(out.read_text())["weights"]
    assert weights["scheme"] == "threshold"
    assert weights["w"][3] == pytest.approx(10.0)


def test_unknown_weight_scheme(runner, tmp_path, clusters_csv):
    result = runner.invoke(cli, ["fit", str(clusters_csv), "--k", "2", "--lambda", "0.1",
                                 "--weights", "lasso", "--out", str(tmp_path / "fit.json")])
    assert result.exit_code == 2


def test_screen_flags_zero_coordinate(runner, tmp_path, clusters_csv):
    out = tmp_path / "screen.csv"
    result = runner.invoke(cli, ["screen", str(clusters_csv), "--k", "2", "--lambda", "0.5", "--out", str(out)])
    assert result.exit_code == 0, result.output
    table = read_frame(out, SCREEN_COLUMNS)
    assert bool(table.loc[3, "screened"])
    assert set(table["coordinate"]) <= {0, 1, 2, 3}
    assert (tmp_path / "screen.config.json").exists()


def test_screen_at_zero_lambda(runner, tmp_path, clusters_csv):
    out = tmp_path / "screen.csv"
    runner.invoke(cli, ["screen", str(clusters_csv), "--k", "2", "--lambda", "0", "--out", str(out)])
    assert not read_frame(out, SCREEN_COLUMNS)["screened"].any()


def test_path_command(runner, tmp_path, clusters_csv):
    out, full = tmp_path / "path.csv", tmp_path / "path.json"
    result = runner.invoke(cli, ["path", str(clusters_csv), "--k", "2", "--num-lambdas", "4", "--include-zero",
                                 "--restarts", "2", "--out", str(out), "--json", str(full)])
    assert result.exit_code == 0, result.output
    frame = read_frame(out, PATH_COLUMNS)
    assert len(frame) == 5
    assert frame["n_active"].iloc[0] == 0
    assert frame["lambda"].iloc[-1] == 0.0
    assert len(json.loads(full.read_text())["fits"]) == 5


def test_oracle_check_square(runner, tmp_path, square_csv):
    out = tmp_path / "oracle.json"
    result = runner.invoke(cli, ["oracle-check", str(square_csv), "--k", "2", "--lambda", "0",
                                 "--kappa0-samples", "50", "--out", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text())
    assert report["objective_gap"] == pytest.approx(0.0, abs=1e-9)
    assert report["optimal_set"]["risk"] == 1.0
    assert report["optimal_set"]["support_plus"] == [0, 1]
    assert report["screening_sound"]
    assert report["sml_consequence"]["holds"]
    assert report["config"]["command"] == "oracle-check"


def test_oracle_check_budget_exit_code(runner, tmp_path, rng):
    path = tmp_path / "big.csv"
    save_dataset_csv(Dataset.from_points(rng.standard_normal((25, 2))), path)
    result = runner.invoke(cli, ["oracle-check", str(path), "--k", "2", "--lambda", "0.1",
                                 "--out", str(tmp_path / "oracle.json")])
    assert result.exit_code == 3


def test_mc_recovery_small_run(runner, tmp_path):
    out = tmp_path / "recovery.csv"
    result = runner.invoke(cli, ["mc-recovery", "--n-list", "60,120", "--replicates", "2", "--reference-n", "300",
                                 "--evaluation-n", "300", "--restarts", "2", "--out", str(out)])
    assert result.exit_code == 0, result.output
    frame = read_frame(out, RECOVERY_COLUMNS)
    assert list(frame["n"]) == [60, 120]
    assert frame["false_inclusion"].between(0.0, 1.0).all()
    assert frame["false_exclusion"].between(0.0, 1.0).all()
    assert (tmp_path / "recovery.config.json").exists()


def test_mc_recovery_single_replicate(runner, tmp_path):
    out = tmp_path / "recovery.csv"
    runner.invoke(cli, ["mc-recovery", "--n-list", "80", "--replicates", "1", "--reference-n", "200",
                        "--evaluation-n", "200", "--restarts", "1", "--out", str(out)])
    frame = read_frame(out, RECOVERY_COLUMNS)
    assert len(frame) == 1
    assert frame["false_inclusion"].iloc[0] in (0.0, 1.0)


@pytest.mark.parametrize("alpha", ["0", "0.5", "0.7"])
def test_mc_recovery_rejects_alpha(runner, tmp_path, alpha):
    result = runner.invoke(cli, ["mc-recovery", "--alpha", alpha, "--out", str(tmp_path / "r.csv")])
    assert result.exit_code == 2


@pytest.mark.slow
def test_recovery_errors_do_not_grow_with_n(runner, tmp_path):
    out = tmp_path / "recovery.csv"
    result = runner.invoke(cli, ["--threads", "8", "mc-recovery", "--alpha", "0.25", "--n-list", "250,2000",
                                 "--replicates", "200", "--seed", "1", "--restarts", "4", "--out", str(out)])
    assert result.exit_code == 0, result.output
    frame = read_frame(out, RECOVERY_COLUMNS).set_index("n")
    assert (frame["replicates"] == 200).all()
    for column in ("false_inclusion", "false_exclusion"):
        assert frame.loc[2000, column] <= frame.loc[250, column]
        assert frame.loc[2000, column] <= 0.05


def test_bounds_command(runner, tmp_path):
    out = tmp_path / "bounds.csv"
    result = runner.invoke(cli, ["bounds", "--eta", "0.0", "--out", str(out)])
    assert result.exit_code == 0, result.output
    frame = read_frame(out, BOUND_COLUMNS)
    assert list(frame["name"]) == ["eta", "means_risk", "risk_lower", "margin",
                                   "uniqueness_radius", "localization_certified"]
    assert frame.loc[1, "value"] == pytest.approx(0.1)


def test_bounds_command_rejects_bad_tau(runner, tmp_path):
    result = runner.invoke(cli, ["bounds", "--eta", "0.0", "--tau", "0.3", "--out", str(tmp_path / "b.csv")])
    assert result.exit_code == 2
