import json

import pandas as pd
import pytest

from pacile.cli.main import main
from pacile.config import settings
from pacile.models import CertificateFlag

SMALL_DATA = ["--set", "synthetic_m=40", "--set", "synthetic_support=6", "--set", "synthetic_labels=2"]


def _run(command, tmp_path, *extra):
    return main([command, "--out-dir", str(tmp_path), "--seed", "3", *SMALL_DATA, *extra])


def _manifest(tmp_path, command, seed=3):
    return json.loads((tmp_path / f"{command}_manifest_{seed}.json").read_text(encoding="utf-8"))


def test_version(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["--version"])
    assert excinfo.value.code == 0
    assert settings.VERSION in capsys.readouterr().out


def test_validate_subset(tmp_path):
    assert main(["validate", "kl_curve", "exp_identity", "--out-dir", str(tmp_path), "--seed", "1"]) == 0
    assert (tmp_path / "kl_curve_1.csv").is_file()
    assert json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))["passed"] is True


def test_unknown_experiment_is_a_config_error(tmp_path):
    assert main(["validate", "bogus", "--out-dir", str(tmp_path)]) == 2


def test_unknown_config_key(tmp_path):
    assert _run("train", tmp_path, "--set", "no_such_key=1") == 2


def test_invalid_config_value(tmp_path):
    assert _run("train", tmp_path, "--set", "t=1.5") == 2


def test_config_file(tmp_path):
    config = tmp_path / "train.conf"
    config.write_text("# ridge grid\nlambdas = 0.1\nalgorithm = ile\n", encoding="utf-8")
    assert _run("train", tmp_path, "--config", str(config)) == 0
    assert _manifest(tmp_path, "train")["config"]["lambdas"] == [0.1]


def test_train_then_certify(tmp_path):
    assert _run("train", tmp_path, "--set", "algorithm=ile") == 0
    train_manifest = _manifest(tmp_path, "train")
    assert CertificateFlag.DATA_DEPENDENT_SELECTION.value in train_manifest["flags"]
    assert "posterior_3.txt" in train_manifest["files"]

    candidates = pd.read_csv(tmp_path / "candidates_3.csv")
    assert (candidates["status"] == "selected").sum() == 1

    posterior = str(tmp_path / "posterior_3.txt")
    assert _run("certify", tmp_path, "--set", f"posterior={posterior}", "--set", "mc_samples=100") == 0
    first = (tmp_path / "certificates_3.csv").read_bytes()
    frame = pd.read_csv(tmp_path / "certificates_3.csv")
    assert frame["bound_kind"].tolist() == ["classification", "augmented-excess"]

    assert _run("certify", tmp_path, "--set", f"posterior={posterior}", "--set", "mc_samples=100") == 0
    assert (tmp_path / "certificates_3.csv").read_bytes() == first


def test_cosine_kernel_adds_kde_bound(tmp_path):
    assert _run("train", tmp_path, "--set", "kernel=cosine", "--set", "lambdas=0.1") == 0
    posterior = str(tmp_path / "posterior_3.txt")
    assert _run("certify", tmp_path, "--set", f"posterior={posterior}", "--set", "mc_samples=50") == 0
    frame = pd.read_csv(tmp_path / "certificates_3.csv")
    assert frame["bound_kind"].tolist() == ["classification", "augmented-excess", "kde"]


def test_certify_rejects_other_dataset(tmp_path):
    assert _run("train", tmp_path, "--set", "lambdas=0.1") == 0
    posterior = str(tmp_path / "posterior_3.txt")
    assert _run("certify", tmp_path, "--set", f"posterior={posterior}", "--set", "synthetic_seed=9") == 2


def test_relax_pb_single_rate(tmp_path):
    code = _run(
        "train", tmp_path,
        "--set", "algorithm=relax-pb", "--set", "learning_rates=0.01", "--set", "max_iter=20", "--set", "eval_samples=20",
    )
    assert code == 0
    manifest = _manifest(tmp_path, "train")
    assert manifest["flags"] == []
    assert manifest["files"]["trace_3.csv"] is None
    assert len(pd.read_csv(tmp_path / "trace_3.csv")) <= 20


def test_sweep_lambda_column(tmp_path):
    code = _run(
        "sweep", tmp_path,
        "--set", "lambdas=0.1", "--set", "alphas=0.3,0.5", "--set", "ts=0.25,0.5", "--set", "kappa=1", "--threads", "2",
    )
    assert code == 0
    frame = pd.read_csv(tmp_path / "sweep_3.csv")
    assert len(frame) == 4
    m = 40
    expected = 1.0 / (2.0 * frame["t"] * m ** (1.0 - frame["alpha"]))
    pd.testing.assert_series_equal(frame["lambda"], expected, check_names=False, rtol=1e-12)
    assert _manifest(tmp_path, "sweep")["cells"] == 4


def test_standardize_flag(tmp_path):
    default, off, on = tmp_path / "default", tmp_path / "off", tmp_path / "on"
    assert _run("train", default, "--set", "lambdas=0.1") == 0
    assert _run("train", off, "--set", "lambdas=0.1", "--set", "standardize=false") == 0
    assert _run("train", on, "--set", "lambdas=0.1", "--set", "standardize=true") == 0

    posterior = (default / "posterior_3.txt").read_bytes()
    assert (off / "posterior_3.txt").read_bytes() == posterior
    assert (on / "posterior_3.txt").read_bytes() != posterior
    assert _manifest(default, "train")["dataset"]["standardized"] is False
    manifest = _manifest(on, "train")
    assert manifest["config"]["standardize"] is True
    assert manifest["dataset"]["standardized"] is True

    standardized = str(on / "posterior_3.txt")
    assert _run("certify", on, "--set", f"posterior={standardized}", "--set", "standardize=true", "--set", "mc_samples=50") == 0
    assert _run("certify", on, "--set", f"posterior={standardized}", "--set", "mc_samples=50") == 2


def test_sweep_does_not_depend_on_thread_count(tmp_path):
    grid = ["--set", "lambdas=0.1", "--set", "alphas=0.3,0.5", "--set", "ts=0.25,0.5"]
    assert _run("sweep", tmp_path / "one", *grid, "--threads", "1") == 0
    assert _run("sweep", tmp_path / "two", *grid, "--threads", "2") == 0
    assert (tmp_path / "one" / "sweep_3.csv").read_bytes() == (tmp_path / "two" / "sweep_3.csv").read_bytes()
