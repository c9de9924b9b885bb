import numpy as np
import pandas as pd
import pytest

from pacile.errors import DatasetParseError
from pacile.gaussian_posterior import GaussianPosterior, PriorConfig
from pacile.kernel_features import Kernel
from pacile.models import KernelKind, Parametrization
from pacile.storage import (
    atomic_write_text,
    digest_files,
    load_posterior,
    load_regressor,
    save_posterior,
    save_regressor,
    write_frame,
)
from pacile.surrogate_regression import LinearRegressor
from pacile.utils import file_sha256


def test_posterior_round_trip_is_bitwise(tmp_path, rng):
    mean = LinearRegressor(rng.standard_normal((5, 3)) * 1e3, Kernel(KernelKind.COSINE), lam=0.125, dataset_sha256="ab" * 32)
    q = GaussianPosterior(mean, 1.0 / 3.0, Parametrization.UNIT)
    prior = PriorConfig(alpha=0.35, t=0.6, kappa=1.7, m=123)
    path = save_posterior(tmp_path / "posterior.txt", q, prior)

    loaded, loaded_prior = load_posterior(path)
    np.testing.assert_array_equal(loaded.mean.w, mean.w)
    assert loaded.variance == q.variance
    assert loaded.parametrization is Parametrization.UNIT
    assert loaded.mean.kernel == mean.kernel
    assert loaded.mean.lam == 0.125
    assert loaded.mean.dataset_sha256 == mean.dataset_sha256
    assert loaded_prior.as_dict() == prior.as_dict()


def test_posterior_without_prior(tmp_path):
    q = GaussianPosterior(LinearRegressor(np.eye(2)), 0.5)
    _, prior = load_posterior(save_posterior(tmp_path / "q.txt", q))
    assert prior is None


def test_regressor_round_trip(tmp_path):
    regressor = LinearRegressor(np.array([[0.1, -2.0e-300]]), Kernel(KernelKind.GAUSSIAN, 0.5))
    loaded = load_regressor(save_regressor(tmp_path / "w.txt", regressor))
    np.testing.assert_array_equal(loaded.w, regressor.w)
    assert loaded.kernel.bandwidth == 0.5
    assert loaded.lam is None


def test_regressor_is_not_a_posterior(tmp_path):
    path = save_regressor(tmp_path / "w.txt", LinearRegressor(np.eye(2)))
    with pytest.raises(DatasetParseError):
        load_posterior(path)


def test_unsupported_version(tmp_path):
    path = save_regressor(tmp_path / "w.txt", LinearRegressor(np.eye(2)))
    path.write_text(path.read_text(encoding="utf-8").replace("version=1", "version=9"), encoding="utf-8")
    with pytest.raises(DatasetParseError):
        load_regressor(path)


def test_truncated_weights(tmp_path):
    path = save_regressor(tmp_path / "w.txt", LinearRegressor(np.eye(3)))
    text = path.read_text(encoding="utf-8").rstrip("\n").rsplit("\n", 1)[0]
    path.write_text(text + "\n", encoding="utf-8")
    with pytest.raises(DatasetParseError):
        load_regressor(path)


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = tmp_path / "nested" / "out.txt"
    atomic_write_text(target, "first")
    atomic_write_text(target, "second")
    assert target.read_text(encoding="utf-8") == "second"
    assert sorted(p.name for p in target.parent.iterdir()) == ["out.txt"]


def test_write_frame_round_trip(tmp_path):
    frame = pd.DataFrame({"a": [0.1, 1.0 / 3.0], "b": ["x", "y"]})
    path = write_frame(tmp_path / "frame.csv", frame)
    pd.testing.assert_frame_equal(pd.read_csv(path, float_precision="round_trip"), frame)
    assert digest_files([path]) == {"frame.csv": file_sha256(path)}
