"""Synthetic data law: AR(1) covariates, rectified factor demand, stream
separation between replications and the test set."""

import numpy as np
import pytest
from scipy import stats

from prescriptor import InputError
from prescriptor.bench.generators import (GeneratorConfig, demand_formula,
                                          generate_covariates, generate_demand,
                                          generate_test, generate_training,
                                          roll_ar1, stage_loadings)


def test_config_validation():
    with pytest.raises(InputError):
        GeneratorConfig(horizon=0, n_samples=10)
    with pytest.raises(InputError):
        GeneratorConfig(horizon=2, n_samples=0)
    with pytest.raises(InputError):
        GeneratorConfig(horizon=2, n_samples=10, ar_coeff=1.0)


def test_ar1_zero_noise_decay():
    v = np.array([2.0, -1.0, 0.5])
    path = roll_ar1(v, np.zeros((4, 3)), coeff=0.7)
    for t in range(5):
        assert np.allclose(path[t], 0.7 ** t * v)


def test_ar1_stationary_moments():
    """Started from the stationary law, every stage shares variance
    1 / (1 - 0.49) and adjacent stages correlate at the AR coefficient."""
    config = GeneratorConfig(horizon=2, n_samples=100_000, seed=3)
    x = generate_covariates(config)
    target_var = 1.0 / (1.0 - 0.7 ** 2)
    for t in range(2):
        assert abs(x[:, t].var() - target_var) < 0.05
    for j in range(3):
        rho = np.corrcoef(x[:, 0, j], x[:, 1, j])[0, 1]
        assert abs(rho - 0.7) < 0.02


def test_demand_formula_intercept_only():
    config = GeneratorConfig(horizon=1, n_samples=1)
    a = np.array([0.8, 1.0, 1.0])
    b = np.array([-1.0, 1.0, 0.0])
    out = demand_formula(np.zeros(3), a, b, np.zeros(3), np.array(7.0), config)
    assert np.isclose(out, 50.0)


def test_demand_formula_hand_value():
    config = GeneratorConfig(horizon=1, n_samples=1)
    a = np.array([0.8, 1.0, 1.0])
    b = np.array([-1.0, 1.0, 0.0])
    out = demand_formula(np.ones(3), a, b, np.zeros(3), np.array(0.0), config)
    assert np.isclose(out, 50.0 + 12.0 * 2.8)


def test_demand_formula_rectification_and_cap():
    config = GeneratorConfig(horizon=1, n_samples=1, demand_cap=200.0)
    a = np.array([0.8, 1.0, 1.0])
    b = np.array([-1.0, 1.0, 0.0])
    low = demand_formula(np.full(3, -10.0), a, b, np.zeros(3),
                         np.array(0.0), config)
    assert low == 0.0
    high = demand_formula(np.full(3, 10.0), a, b, np.zeros(3),
                          np.array(0.0), config)
    assert high == 200.0


def clipped_normal_mean(mu, sigma, cap):
    """E[min(max(L, 0), cap)] for L ~ N(mu, sigma^2)."""
    alpha = (0.0 - mu) / sigma
    beta = (cap - mu) / sigma
    return (sigma * (stats.norm.pdf(alpha) - stats.norm.pdf(beta))
            + mu * (stats.norm.cdf(beta) - stats.norm.cdf(alpha))
            + cap * (1.0 - stats.norm.cdf(beta)))


@pytest.mark.parametrize("cap", [np.inf, 12.0])
def test_demand_mean_matches_closed_form(cap):
    """With Gaussian noise the pre-clip level is normal; compare the Monte
    Carlo mean against the clipped-normal formula."""
    config = GeneratorConfig(horizon=1, n_samples=1, demand_cap=cap)
    a = np.array([0.8, 1.0, 1.0])
    b = np.array([-1.0, 1.0, 0.0])
    x = np.array([-1.5, -1.2, -1.05])
    mu = 50.0 + 12.0 * float(x @ a)
    sigma = np.sqrt((12.0 * 0.25) ** 2 * float(a @ a)
                    + (5.0 * float(x @ b)) ** 2)
    rng = np.random.default_rng(11)
    m = 400_000
    phi = rng.normal(size=(m, 3))
    theta = rng.normal(size=m)
    draws = demand_formula(np.tile(x, (m, 1)), a, b, phi, theta, config)
    want = clipped_normal_mean(mu, sigma, cap if np.isfinite(cap) else 1e9)
    assert abs(draws.mean() - want) < 0.005 * max(1.0, want)


def test_stage_loadings_are_permutations():
    config = GeneratorConfig(horizon=6, n_samples=10, seed=4)
    a, b = stage_loadings(config)
    assert a.shape == b.shape == (6, 3)
    for t in range(6):
        assert sorted(a[t]) == [0.8, 1.0, 1.0]
        assert sorted(b[t]) == [-1.0, 0.0, 1.0]


def test_stage_loadings_fixed_by_seed_alone():
    base = GeneratorConfig(horizon=4, n_samples=10, seed=9)
    a1, b1 = stage_loadings(base)
    a2, b2 = stage_loadings(GeneratorConfig(horizon=4, n_samples=999, seed=9))
    assert np.array_equal(a1, a2) and np.array_equal(b1, b2)
    with pytest.raises(InputError):
        stage_loadings(GeneratorConfig(horizon=4, n_samples=10, d=2))


def test_generate_demand_shapes_and_support():
    config = GeneratorConfig(horizon=3, n_samples=40, demand_cap=200.0, seed=1)
    x = generate_covariates(config)
    y = generate_demand(x, config)
    assert y.shape == (40, 3, 1)
    assert y.min() >= 0.0 and y.max() <= 200.0
    with pytest.raises(InputError):
        generate_demand(x[:, :2], config)


def test_training_reps_and_test_are_disjoint():
    config = GeneratorConfig(horizon=2, n_samples=30, seed=5)
    r0 = generate_training(config, rep=0)
    r0_again = generate_training(config, rep=0)
    r1 = generate_training(config, rep=1)
    test = generate_test(config)
    assert np.array_equal(r0.covariates, r0_again.covariates)
    assert np.array_equal(r0.uncertainties, r0_again.uncertainties)
    assert not np.array_equal(r0.covariates, r1.covariates)
    assert not np.array_equal(r0.covariates, test.covariates)
    assert r0.metadata["kind"] == "train" and r0.metadata["replication"] == 0
    assert test.metadata["kind"] == "test"


def test_generate_test_path_count_override():
    config = GeneratorConfig(horizon=2, n_samples=30, seed=5)
    test = generate_test(config, n_paths=7)
    assert test.covariates.shape[0] == 7
    assert test.metadata["n_samples"] == 7
