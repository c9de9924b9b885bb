import math

import numpy as np
import pytest

from pacile.config import settings
from pacile.errors import InputError, PacIleWarning
from pacile.gaussian_posterior import (
    GaussianPosterior,
    PriorConfig,
    gaussian_kl,
    kl_gaussian_full,
    kl_isotropic,
    kl_unit_parametrization,
    kl_wide_parametrization,
    log_density,
    log_density_gradient,
    mc_values,
    parametrization_gap,
    parametrization_threshold,
    posterior_variance_for,
    sample_regressor,
    sample_weights,
)
from pacile.models import Parametrization
from pacile.rng import SeedStream
from pacile.surrogate_regression import LinearRegressor


# ========== Prior ==========

def test_prior_closed_forms():
    prior = PriorConfig(alpha=0.3, t=0.4, kappa=2.0, m=1000)
    sigma_sq = 1000 ** 0.4 / 4.0
    assert prior.sigma_sq == pytest.approx(sigma_sq)
    assert prior.sigma0_sq == pytest.approx(0.4 * sigma_sq)
    assert prior.f_ratio == pytest.approx(1.5)
    assert prior.penalty_lambda == pytest.approx(1.0 / (2 * 0.4 * sigma_sq * 1000 ** 0.3))


def test_half_alpha_variance_is_constant_in_m():
    values = [PriorConfig(alpha=0.5, t=0.5, kappa=1.0, m=m).sigma0_sq for m in (10, 1000, 10 ** 6)]
    assert values == pytest.approx([0.5, 0.5, 0.5])


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(alpha=0.0, t=0.5, kappa=1.0, m=10),
        dict(alpha=0.5, t=1.0, kappa=1.0, m=10),
        dict(alpha=0.5, t=0.5, kappa=0.0, m=10),
        dict(alpha=0.5, t=0.5, kappa=1.0, m=0),
    ],
)
def test_invalid_prior(kwargs):
    with pytest.raises(InputError):
        PriorConfig(**kwargs)


def test_large_alpha_warns():
    with pytest.warns(PacIleWarning):
        PriorConfig(alpha=0.8, t=0.5, kappa=1.0, m=10)


def test_posterior_variance_for():
    prior = PriorConfig(alpha=0.3, t=0.5, kappa=1.0, m=100)
    assert posterior_variance_for(Parametrization.UNIT, prior) == 1.0
    assert posterior_variance_for(Parametrization.WIDE, prior) == pytest.approx(prior.sigma_sq)
    assert posterior_variance_for(Parametrization.CUSTOM, prior, 0.25) == 0.25
    with pytest.raises(InputError):
        posterior_variance_for(Parametrization.CUSTOM, prior)


# ========== KL ==========

def test_isotropic_kl_matches_full_covariance(rng):
    prior = PriorConfig(alpha=0.4, t=0.3, kappa=1.5, m=50)
    mean = rng.standard_normal((3, 2))
    q = GaussianPosterior(LinearRegressor(mean), 0.7)
    n = mean.size
    full = kl_gaussian_full(mean.ravel(), 0.7 * np.eye(n), np.zeros(n), prior.sigma0_sq * np.eye(n))
    assert kl_isotropic(q, prior) == pytest.approx(full, rel=1e-10)


def test_kl_is_zero_between_equal_gaussians():
    assert gaussian_kl(0.0, 7, 1.3, 1.3) == 0.0
    assert kl_gaussian_full(np.zeros(2), np.eye(2), np.zeros(2), np.eye(2)) == pytest.approx(0.0, abs=1e-15)


def test_kl_rejects_degenerate_variances():
    with pytest.raises(InputError):
        gaussian_kl(1.0, 3, 0.0, 1.0)
    with pytest.raises(InputError):
        kl_gaussian_full(np.zeros(2), np.zeros((2, 2)), np.zeros(2), np.eye(2))


def test_parametrization_kls_match_general_kl():
    prior = PriorConfig(alpha=0.3, t=0.6, kappa=0.8, m=400)
    mean_norm_sq, n = 3.7, 24
    unit = gaussian_kl(mean_norm_sq, n, 1.0, prior.sigma0_sq)
    wide = gaussian_kl(mean_norm_sq, n, prior.sigma_sq, prior.sigma0_sq)
    assert kl_unit_parametrization(prior, mean_norm_sq, n) == pytest.approx(unit, rel=1e-12)
    assert kl_wide_parametrization(prior, mean_norm_sq, n) == pytest.approx(wide, rel=1e-12)
    assert parametrization_gap(prior, n) == pytest.approx(unit - wide, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("sigma_sq", [0.5, 2.0, math.e])
def test_gap_sign_follows_threshold(sigma_sq):
    t0 = parametrization_threshold(sigma_sq)
    for t in np.linspace(0.02, 0.98, 49):
        if abs(t - t0) < 1e-6:
            continue
        # alpha = 1/2 makes sigma^2 = 1 / kappa^2
        prior = PriorConfig(alpha=0.5, t=float(t), kappa=1.0 / math.sqrt(sigma_sq), m=100)
        gap = parametrization_gap(prior, 10)
        expected_positive = t > t0 if sigma_sq > 1 else t < t0
        assert (gap > 0) == expected_positive


def test_threshold_limits_and_closed_form():
    for offset in (1e-6, -1e-6, 1e-4, -1e-4):
        assert parametrization_threshold(1.0 + offset) == pytest.approx(1.0, abs=offset)
    assert parametrization_threshold(math.e) == pytest.approx(1.0 - 1.0 / math.e, rel=1e-12)
    assert parametrization_threshold(math.e) == pytest.approx(0.632, abs=1e-3)


def test_kl_is_positive_between_distinct_gaussians(rng):
    for _ in range(50):
        n = int(rng.integers(1, 30))
        variance, prior_variance = rng.uniform(0.1, 3.0, size=2)
        assert gaussian_kl(float(rng.uniform(0.01, 10.0)), n, variance, variance) > 0
        assert gaussian_kl(0.0, n, variance, prior_variance) > 0
        assert gaussian_kl(float(rng.uniform(0.01, 10.0)), n, variance, prior_variance) > 0

    mean = rng.standard_normal(3)
    assert kl_gaussian_full(mean, np.eye(3), np.zeros(3), 2.0 * np.eye(3)) > 0


def test_threshold_undefined_at_one():
    with pytest.raises(InputError):
        parametrization_threshold(1.0)


# ========== Sampling ==========

def test_zero_variance_is_a_point_mass(rng):
    mean = LinearRegressor(rng.standard_normal((2, 3)))
    q = GaussianPosterior(mean, 0.0)
    assert sample_regressor(q, 5) is mean
    np.testing.assert_array_equal(sample_weights(q, 4, rng), np.broadcast_to(mean.w, (4, 2, 3)))
    np.testing.assert_allclose(mc_values(q, lambda batch: batch.sum(axis=(1, 2)), 6, 0), mean.w.sum())


def test_negative_variance_rejected(rng):
    with pytest.raises(InputError):
        GaussianPosterior(LinearRegressor(np.ones((1, 1))), -1e-3)


def test_mc_values_do_not_depend_on_chunk_size(monkeypatch, rng):
    q = GaussianPosterior(LinearRegressor(rng.standard_normal((2, 2))), 0.5)
    fn = lambda batch: np.abs(batch).sum(axis=(1, 2))
    reference = mc_values(q, fn, 50, SeedStream(3))
    monkeypatch.setattr(settings, "MC_CHUNK_SIZE", 7)
    np.testing.assert_array_equal(mc_values(q, fn, 50, SeedStream(3)), reference)


def test_sample_moments(rng):
    q = GaussianPosterior(LinearRegressor(np.array([[1.0, -2.0]])), 0.25)
    draws = sample_weights(q, 100_000, rng)
    np.testing.assert_allclose(draws.mean(axis=0), q.mean.w, atol=0.01)
    np.testing.assert_allclose(draws.var(axis=0), 0.25, rtol=0.02)


def test_log_density_gradient_finite_differences(rng):
    for _ in range(10):
        q = GaussianPosterior(LinearRegressor(rng.standard_normal((2, 3))), float(rng.uniform(0.2, 2.0)))
        v = rng.standard_normal((2, 3))
        analytic = log_density_gradient(q, v)
        numeric = np.zeros_like(analytic)
        step = 1e-6
        for index in np.ndindex(*q.shape):
            shift = np.zeros(q.shape)
            shift[index] = step
            numeric[index] = (log_density(q.with_mean(q.mean.w + shift), v) - log_density(q.with_mean(q.mean.w - shift), v)) / (2 * step)
        assert np.linalg.norm(numeric - analytic) <= 1e-4 * max(np.linalg.norm(analytic), 1.0)
