import json

import numpy as np
import pandas as pd
import pytest

from pacile.errors import ConfigError
from pacile.optimizers import absolute_losses
from pacile.validation_suite import (
    EXPERIMENTS,
    resolve_names,
    run_all,
    run_correlation_study,
    run_exp_identity_curves,
    run_kl_curve,
    run_penalty_curve,
    run_relaxation_gap,
)


def _failed(result):
    return [c.name for c in result.checks if not c.passed]


def test_relaxation_gap():
    result = run_relaxation_gap(0, mc_samples=20_000)
    assert not _failed(result)
    assert list(result.frame.columns) == ["sigma", "lhs_mc", "lhs_se", "rhs", "rel_gap"]
    assert result.frame.loc[0, "rel_gap"] == 0.0


def test_correlation_columns_and_range():
    result = run_correlation_study(1, sizes=(10, 50), n_experiments=5, mc_samples=100)
    assert list(result.frame.columns) == ["m", "mean_corr", "corr_std"]
    assert result.frame["m"].tolist() == [10, 50]
    assert np.all(result.frame["mean_corr"].between(-1.0, 1.0))


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_correlation_baseline_hook(sign):
    result = run_correlation_study(
        2, sizes=(10,), n_experiments=3, mc_samples=50, baseline_fn=lambda batch, p: sign * absolute_losses(batch, p)
    )
    assert result.frame.loc[0, "mean_corr"] == pytest.approx(sign, abs=1e-9)


def test_penalty_curve():
    result = run_penalty_curve()
    assert not _failed(result)
    argmins = result.frame.loc[result.frame.groupby("kappa")["epsilon_prime"].idxmin(), "t"].to_numpy()
    assert np.all(np.diff(argmins) > 0)
    assert set(result.frame["kappa"]) == {0.5, 1.0, 2.0}


def test_kl_curve():
    result = run_kl_curve()
    assert not _failed(result)
    assert result.frame.loc[result.frame["kl"].idxmin(), "sigma"] == 1.0


def test_exp_identity_curves():
    result = run_exp_identity_curves(3, n_random=10_000)
    assert not _failed(result)
    assert result.frame.groupby("a").size().tolist() == [101] * 4


def test_experiments_are_deterministic():
    first = run_relaxation_gap(5, sigmas=(0.1, 0.5), mc_samples=1000)
    second = run_relaxation_gap(5, sigmas=(0.1, 0.5), mc_samples=1000)
    pd.testing.assert_frame_equal(first.frame, second.frame)


def test_resolve_names():
    assert resolve_names(None) == list(EXPERIMENTS)
    assert resolve_names(["all"]) == list(EXPERIMENTS)
    assert resolve_names(["kl_curve"]) == ["kl_curve"]
    with pytest.raises(ConfigError):
        resolve_names(["kl_curve", "bogus"])


def test_run_all_subset_writes_manifest(tmp_path):
    results = run_all(tmp_path, seed=4, names=["kl_curve", "exp_identity"])
    assert [r.name for r in results] == ["kl_curve", "exp_identity"]
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["passed"] is True
    assert [e["file"] for e in manifest["experiments"]] == ["kl_curve_4.csv", "exp_identity_4.csv"]
    assert (tmp_path / "kl_curve_4.csv").is_file()


@pytest.mark.slow
def test_full_suite(tmp_path):
    results = run_all(tmp_path, seed=0, threads=2)
    assert all(r.passed for r in results), {r.name: _failed(r) for r in results}
    assert len(list(tmp_path.glob("*_0.csv"))) == len(EXPERIMENTS)
