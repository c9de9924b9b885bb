import numpy as np
import pytest

from pacile.datasets import (
    MultiLabelDataset,
    SyntheticTask,
    load_csv,
    make_synthetic,
    oracle_expected_posterior_risk,
    oracle_f_star_and_bayes_risk,
    oracle_f_star_direct,
    oracle_g_star,
    oracle_g_star_all,
    oracle_g_star_weights,
    oracle_population_quadratic_risk,
    oracle_true_risk,
    sample_training_set,
    sidecar_path,
    standardize_dataset,
    support_indices,
    write_csv,
)
from pacile.errors import DatasetParseError, InputError
from pacile.gaussian_posterior import GaussianPosterior
from pacile.kernel_features import Kernel
from pacile.loss_embedding import build_hamming_embedding, decode_rows, enumerate_labels, label_indices
from pacile.surrogate_regression import LinearRegressor
from pacile.utils import safe_json_dumps


# ========== CSV ingestion ==========

def test_load_tiny_csv(tiny_csv):
    dataset = load_csv(tiny_csv)
    np.testing.assert_array_equal(dataset.xs, [[0.5, -1.25], [2.0, 0.3]])
    np.testing.assert_array_equal(dataset.ys, [[1, 0], [0, 1]])
    assert dataset.name == "tiny"
    assert (dataset.m, dataset.n_features, dataset.n_labels) == (2, 2, 2)


def test_csv_round_trip_preserves_digest(tmp_path, rng):
    original = MultiLabelDataset(rng.standard_normal((15, 4)), rng.integers(0, 2, size=(15, 3)), name="rt")
    path = write_csv(original, tmp_path / "rt.csv")
    assert sidecar_path(path).is_file()
    loaded = load_csv(path)
    assert loaded.digest == original.digest
    np.testing.assert_array_equal(loaded.xs, original.xs)


def test_non_binary_label_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x_0,label_0\n0.1,1\n0.2,2\n", encoding="utf-8")
    with pytest.raises(DatasetParseError) as excinfo:
        load_csv(path)
    assert excinfo.value.line == 3
    assert "line 3" in str(excinfo.value)
    assert excinfo.value.exit_code == 2


def test_ragged_row_reports_line(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("x_0,label_0\n0.1,1\n0.2,0,9\n", encoding="utf-8")
    with pytest.raises(DatasetParseError) as excinfo:
        load_csv(path)
    assert excinfo.value.line == 3


def test_non_numeric_feature(tmp_path):
    path = tmp_path / "text.csv"
    path.write_text("x_0,label_0\nabc,1\n", encoding="utf-8")
    with pytest.raises(DatasetParseError) as excinfo:
        load_csv(path)
    assert excinfo.value.line == 2


def test_missing_label_columns(tmp_path):
    path = tmp_path / "nolabels.csv"
    path.write_text("x_0,x_1\n1,2\n", encoding="utf-8")
    with pytest.raises(DatasetParseError):
        load_csv(path)


def test_missing_file(tmp_path):
    with pytest.raises(InputError):
        load_csv(tmp_path / "absent.csv")


def test_sidecar_mismatch(tmp_path, tiny_csv):
    dataset = load_csv(tiny_csv)
    path = write_csv(dataset, tmp_path / "copy.csv")
    path.write_text(path.read_text(encoding="utf-8").replace("0.5", "0.75"), encoding="utf-8")
    with pytest.raises(DatasetParseError):
        load_csv(path)


def test_sidecar_name_is_used(tmp_path, tiny_csv):
    meta = load_csv(tiny_csv).metadata()
    meta["name"] = "renamed"
    sidecar_path(tiny_csv).write_text(safe_json_dumps(meta), encoding="utf-8")
    assert load_csv(tiny_csv).name == "renamed"


def test_dataset_is_read_only(tiny_csv):
    dataset = load_csv(tiny_csv)
    with pytest.raises(ValueError):
        dataset.xs[0, 0] = 1.0


# ========== Synthetic tasks ==========

def _deterministic_task(labels):
    n = len(labels)
    embedding = build_hamming_embedding(len(labels[0]))
    table = np.zeros((n, 2 ** embedding.n_labels))
    table[np.arange(n), label_indices(np.array(labels))] = 1.0
    return SyntheticTask(np.eye(n), table, embedding)


def test_make_synthetic_is_deterministic():
    first = make_synthetic(3, n_support=5, n_labels=2)
    second = make_synthetic(3, n_support=5, n_labels=2)
    np.testing.assert_array_equal(first.conditional_table, second.conditional_table)
    assert not np.array_equal(first.conditional_table, make_synthetic(4, n_support=5, n_labels=2).conditional_table)


def test_concentration_controls_label_noise():
    sharp = make_synthetic(1, n_support=10, n_labels=3, concentration=1e-3)
    flat = make_synthetic(1, n_support=10, n_labels=3, concentration=1e4)
    assert np.all(sharp.conditional_table.max(axis=1) > 0.9)
    np.testing.assert_allclose(flat.conditional_table, 1.0 / 8, atol=0.02)
    assert np.all(np.isfinite(sharp.conditional_table))


@pytest.mark.parametrize("kwargs", [dict(n_labels=0), dict(n_labels=9), dict(n_support=0), dict(concentration=0.0)])
def test_make_synthetic_rejects(kwargs):
    with pytest.raises(InputError):
        make_synthetic(0, **kwargs)


def test_invalid_task_tables():
    embedding = build_hamming_embedding(1)
    with pytest.raises(InputError):
        SyntheticTask(np.eye(2), np.array([[0.5, 0.4], [0.5, 0.5]]), embedding)
    with pytest.raises(InputError):
        SyntheticTask(np.eye(2), np.full((2, 2), 0.5), embedding, marginal=[1.0, 0.5])


# ========== Oracles ==========

def test_g_star_of_deterministic_labels():
    labels = [[0, 1], [1, 1], [0, 0]]
    task = _deterministic_task(labels)
    np.testing.assert_allclose(oracle_g_star_all(task), task.embedding.phi_matrix(np.array(labels)))
    np.testing.assert_allclose(oracle_g_star(task, np.eye(3)[1]), task.embedding.phi(np.array([1, 1])))


def test_g_star_of_two_label_mixture():
    embedding = build_hamming_embedding(2)
    table = np.array([[0.5, 0.0, 0.0, 0.5]])
    task = SyntheticTask(np.eye(1), table, embedding)
    labels = enumerate_labels(2)
    expected = 0.5 * (embedding.phi(labels[0]) + embedding.phi(labels[3]))
    np.testing.assert_allclose(oracle_g_star_all(task)[0], expected)


def test_g_star_outside_support(small_task):
    with pytest.raises(InputError):
        oracle_g_star(small_task, np.zeros(small_task.x_support.shape[1]))
    with pytest.raises(InputError):
        oracle_g_star(small_task, np.eye(8)[:2])


def test_g_star_weights_reproduce_g_star(small_task):
    w = oracle_g_star_weights(small_task, Kernel())
    np.testing.assert_allclose(small_task.x_support @ w.T, oracle_g_star_all(small_task), atol=1e-10)


def test_f_star_formulations_agree(small_task):
    f_star, bayes = oracle_f_star_and_bayes_risk(small_task)
    direct = oracle_f_star_direct(small_task)
    assert oracle_true_risk(small_task, direct) == pytest.approx(bayes, abs=1e-12)
    np.testing.assert_array_equal(f_star, direct)


def test_bayes_predictor_is_optimal(small_task, rng):
    _, bayes = oracle_f_star_and_bayes_risk(small_task)
    for _ in range(100):
        guess = rng.integers(0, 2, size=(small_task.n_support, small_task.n_labels))
        assert oracle_true_risk(small_task, guess) >= bayes - 1e-12


def test_g_star_minimizes_quadratic_risk(small_task, rng):
    g_star = oracle_g_star_all(small_task)
    best = oracle_population_quadratic_risk(small_task, g_star)
    for _ in range(20):
        assert oracle_population_quadratic_risk(small_task, g_star + 0.1 * rng.standard_normal(g_star.shape)) > best


def test_true_risk_limits():
    embedding = build_hamming_embedding(3)
    uniform = SyntheticTask(np.eye(2), np.full((2, 8), 1.0 / 8), embedding)
    assert oracle_true_risk(uniform, np.zeros((2, 3), dtype=int)) == pytest.approx(0.5)

    task = _deterministic_task([[0, 1, 1], [1, 0, 0]])
    assert oracle_true_risk(task, np.array([[1, 0, 0], [0, 1, 1]])) == pytest.approx(1.0)
    assert oracle_true_risk(task, lambda xs: np.array([[0, 1, 1], [1, 0, 0]])) == 0.0
    with pytest.raises(InputError):
        oracle_true_risk(task, np.zeros((3, 3), dtype=int))


def test_posterior_risk_at_zero_variance(small_task):
    w = oracle_g_star_weights(small_task, Kernel())
    q = GaussianPosterior(LinearRegressor(w), 0.0)
    risk, se = oracle_expected_posterior_risk(small_task, q, 10, 0)
    predictions = decode_rows(small_task.embedding, small_task.x_support @ w.T)
    assert se == 0.0
    assert risk == pytest.approx(oracle_true_risk(small_task, predictions))


# ========== Sampling ==========

def test_sampling_frequencies(small_task):
    m = 100_000
    data = sample_training_set(small_task, m, 7)
    cells = support_indices(small_task, data.xs) * 8 + label_indices(data.ys)
    observed = np.bincount(cells, minlength=64) / m
    expected = (small_task.marginal[:, None] * small_task.conditional_table).ravel()
    se = np.sqrt(expected * (1 - expected) / m)
    assert np.all(np.abs(observed - expected) <= 4 * se + 1e-12)


def test_sampling_is_reproducible(small_task):
    first = sample_training_set(small_task, 50, 2)
    assert first.digest == sample_training_set(small_task, 50, 2).digest
    assert first.digest != sample_training_set(small_task, 50, 3).digest


def test_single_sample(small_task):
    data = sample_training_set(small_task, 1, 0)
    assert data.m == 1 and data.n_labels == 3
    with pytest.raises(InputError):
        sample_training_set(small_task, 0, 0)


# ========== Preprocessing ==========

def test_standardize_dataset_maps_the_support(small_task, small_dataset):
    dataset, task = standardize_dataset(small_dataset, small_task)
    np.testing.assert_allclose(dataset.xs.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_array_equal(dataset.ys, small_dataset.ys)
    assert dataset.digest != small_dataset.digest

    indices = support_indices(task, dataset.xs)
    np.testing.assert_array_equal(indices, support_indices(small_task, small_dataset.xs))
    np.testing.assert_array_equal(task.conditional_table, small_task.conditional_table)


def test_standardize_csv_dataset(tiny_csv):
    dataset, task = standardize_dataset(load_csv(tiny_csv))
    assert task is None
    np.testing.assert_allclose(dataset.xs, [[-1.0, -1.0], [1.0, 1.0]])
