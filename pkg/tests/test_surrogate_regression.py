import numpy as np
import pytest

from pacile.errors import InputError, NumericalError
from pacile.kernel_features import Kernel
from pacile.loss_embedding import build_hamming_embedding, build_zeroone_embedding, enumerate_labels
from pacile.models import KernelKind
from pacile.surrogate_regression import (
    LinearRegressor,
    decode_loss_trick,
    empirical_absolute_risk,
    empirical_quadratic_risk,
    empirical_task_risk,
    fit_krr,
    fit_krr_dual,
    predict_embedding,
    solve_ridge,
    task_predict,
)


# ========== Ridge ==========

def test_solve_ridge_scalar():
    w = solve_ridge(np.array([[1.0]]), np.array([[2.5]]), lam=2.0)
    assert w[0, 0] == pytest.approx(2.5 / 3.0)


def test_solve_ridge_uses_the_mean_convention():
    # (1/2) sum (w - t_i)^2 + lam w^2 with t = (2, 3), lam = 1/2
    w = solve_ridge(np.ones((2, 1)), np.array([[2.0], [3.0]]), lam=0.5)
    assert w[0, 0] == pytest.approx(5.0 / 3.0)


@pytest.mark.parametrize("m,d", [(12, 4), (4, 12)])
def test_primal_and_dual_branches_agree(rng, m, d):
    features = rng.standard_normal((m, d))
    targets = rng.standard_normal((m, 3))
    lam = 0.3
    expected = np.linalg.solve(features.T @ features + m * lam * np.eye(d), features.T @ targets).T
    np.testing.assert_allclose(solve_ridge(features, targets, lam), expected, rtol=1e-9, atol=1e-12)


def test_solve_ridge_rejects_bad_inputs():
    with pytest.raises(InputError):
        solve_ridge(np.ones((3, 2)), np.ones((2, 1)), 1.0)
    with pytest.raises(InputError):
        solve_ridge(np.ones((3, 2)), np.ones((3, 1)), 0.0)


def test_ill_conditioned_system():
    features = np.ones((3, 2))
    with pytest.raises(NumericalError) as excinfo:
        solve_ridge(features, np.ones((3, 1)), 1e-16)
    assert excinfo.value.exit_code == 1


# ========== KRR ==========

def test_fit_krr_primal_matches_dual(rng, hamming3):
    xs = rng.standard_normal((25, 4))
    ys = rng.integers(0, 2, size=(25, 3))
    primal = fit_krr(hamming3, Kernel(), xs, ys, 0.05)
    dual = fit_krr_dual(hamming3, Kernel(), xs, ys, 0.05)
    queries = rng.standard_normal((7, 4))
    np.testing.assert_allclose(primal.predict(queries), dual.predict(queries), atol=1e-9)
    assert dual.rkhs_norm_sq() == pytest.approx(primal.frobenius_norm() ** 2, rel=1e-8)


def _ridge_objective(w, embedding, xs, ys, lam):
    residuals = xs @ w.T - embedding.phi_matrix(ys)
    return np.mean(np.sum(residuals ** 2, axis=1)) + lam * np.sum(w ** 2)


def test_fit_krr_is_optimal_under_perturbation(rng, hamming3):
    xs = rng.standard_normal((30, 5))
    ys = rng.integers(0, 2, size=(30, 3))
    fitted = fit_krr(hamming3, Kernel(), xs, ys, 0.1).w
    best = _ridge_objective(fitted, hamming3, xs, ys, 0.1)
    scale = 1e-3 * np.linalg.norm(fitted)
    for _ in range(100):
        direction = rng.standard_normal(fitted.shape)
        perturbed = fitted + scale * direction / np.linalg.norm(direction)
        assert _ridge_objective(perturbed, hamming3, xs, ys, 0.1) >= best


def test_weight_norm_shrinks_with_lambda(rng, hamming3):
    xs = rng.standard_normal((20, 6))
    ys = rng.integers(0, 2, size=(20, 3))
    norms = [fit_krr(hamming3, Kernel(), xs, ys, lam).frobenius_norm() for lam in np.logspace(-4, 2, 13)]
    assert np.all(np.diff(norms) <= 1e-12)


def test_fit_krr_needs_explicit_features(rng, hamming3):
    with pytest.raises(InputError):
        fit_krr(hamming3, Kernel(KernelKind.GAUSSIAN, 1.0), rng.standard_normal((5, 2)), np.zeros((5, 3)), 0.1)


def test_loss_trick_decoding_minimizes_the_surrogate_score(rng):
    embedding = build_zeroone_embedding(3)
    xs = rng.standard_normal((30, 3))
    ys = rng.integers(0, 2, size=(30, 3))
    model = fit_krr_dual(embedding, Kernel(KernelKind.GAUSSIAN, 1.5), xs, ys, 0.01)
    queries = rng.standard_normal((10, 3))

    decoded = decode_loss_trick(embedding, model.loss_trick_weights(queries), ys)
    scores = model.predict(queries) @ embedding.psi_matrix(enumerate_labels(3)).T
    chosen = np.einsum("ij,ij->i", embedding.psi_matrix(decoded), model.predict(queries))
    np.testing.assert_allclose(chosen, scores.min(axis=1), atol=1e-9)


def test_loss_trick_weight_count_mismatch(hamming3):
    with pytest.raises(InputError):
        decode_loss_trick(hamming3, np.ones(3), np.zeros((4, 3), dtype=int))


# ========== Risks ==========

def test_perfect_regressor_has_zero_risks():
    embedding = build_hamming_embedding(2)
    ys = enumerate_labels(2)
    xs = np.eye(4)
    regressor = LinearRegressor(embedding.phi_matrix(ys).T)

    assert empirical_quadratic_risk(regressor, embedding, xs, ys) == 0.0
    assert empirical_absolute_risk(regressor, embedding, xs, ys) == 0.0
    assert empirical_task_risk(regressor, embedding, xs, ys) == 0.0
    np.testing.assert_array_equal(task_predict(regressor, embedding, xs), ys)
    np.testing.assert_allclose(predict_embedding(regressor, xs[2]), embedding.phi(ys[2]))


def test_absolute_risk_is_below_root_quadratic_risk(rng, hamming3):
    xs = rng.standard_normal((20, 4))
    ys = rng.integers(0, 2, size=(20, 3))
    regressor = LinearRegressor(rng.standard_normal((7, 4)))
    absolute = empirical_absolute_risk(regressor, hamming3, xs, ys)
    assert absolute <= np.sqrt(empirical_quadratic_risk(regressor, hamming3, xs, ys)) + 1e-12


def test_regressor_is_read_only(rng):
    regressor = LinearRegressor(rng.standard_normal((3, 2)))
    with pytest.raises(ValueError):
        regressor.w[0, 0] = 1.0
    with pytest.raises(InputError):
        LinearRegressor(np.array([[np.inf]]))
