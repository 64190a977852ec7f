import numpy as np
import pytest
from numpy.polynomial import hermite_e as He

from fracmil.fbm import FbmPath, derive_seed, sample_path
from fracmil.powervar import (EVEN, ODD_HALF, ODD_LARGE_H, ODD_SMALL_H, RegimeError,
                              gaussian_moment, hermite, hermite_coefficients,
                              hermite_expand_odd_monomial, regime, s_statistic,
                              scaled_variation, variation_exponent,
                              variation_half_sample, variation_limit,
                              weighted_power_variation)


def test_moments():
    assert [gaussian_moment(k) for k in range(9)] == [1, 0, 1, 0, 3, 0, 15, 0, 105]
    rng = np.random.default_rng(0)
    z = rng.standard_normal(400_000)
    assert np.mean(z ** 6) == pytest.approx(15, rel=0.05)


@pytest.mark.parametrize("q", range(8))
def test_hermite_against_numpy(q):
    ref = He.herme2poly([0] * q + [1])
    assert np.array_equal(np.array(hermite_coefficients(q), dtype=float), ref)
    xs = np.linspace(-3, 3, 13)
    assert np.allclose(hermite(q, xs), He.hermeval(xs, [0] * q + [1]))


def test_hermite_recurrence_integer():
    for q in range(1, 12):
        a, b, c = hermite_coefficients(q + 1), hermite_coefficients(q), hermite_coefficients(q - 1)
        rhs = [0] * (q + 2)
        for i, v in enumerate(b):
            rhs[i + 1] += v
        for i, v in enumerate(c):
            rhs[i] -= q * v
        assert list(a) == rhs


@pytest.mark.parametrize("kappa,want", [(3, {3: 1}), (5, {5: 1, 3: 10}),
                                        (7, {7: 1, 5: 21, 3: 105})])
def test_odd_monomial_expansion(kappa, want):
    got = hermite_expand_odd_monomial(kappa)
    assert got == want
    total = [0] * (kappa + 1)
    for d, a in got.items():
        for i, v in enumerate(hermite_coefficients(d)):
            total[i] += a * v
    target = [0] * (kappa + 1)
    target[kappa], target[1] = 1, -gaussian_moment(kappa + 1)
    assert total == target
    with pytest.raises(ValueError):
        hermite_expand_odd_monomial(4)


def test_variation_basics():
    p = sample_path(0.5, 2 ** 12, 1)
    assert abs(weighted_power_variation("1", p, 2) - 1) < 0.1
    assert weighted_power_variation("0", p, 3) == 0
    assert weighted_power_variation("1", p, 1) == pytest.approx(p.endpoint)


def test_regimes_and_exponents():
    assert regime(2, 0.3) == EVEN and regime(3, 0.4) == ODD_SMALL_H
    assert regime(3, 0.5) == ODD_HALF and regime(3, 0.7) == ODD_LARGE_H
    assert variation_exponent(2, 0.5) == 0
    assert variation_exponent(3, 0.4) == pytest.approx(0.6)
    assert variation_exponent(3, 0.7) == pytest.approx(1.4)
    p = sample_path(0.4, 16, 1)
    with pytest.raises(RegimeError):
        scaled_variation("1", p, 3, expected_regime=EVEN)
    with pytest.raises(RegimeError):
        variation_limit("1", sample_path(0.5, 16, 1), 3)


def test_large_h_limit_quadrature():
    p = FbmPath(0.7, 2, [0.0, 0.3, 1.0])
    # mu_4 * int_0^1 (2 + cos x) dx
    assert variation_limit("2+cos(x)", p, 3) == pytest.approx(3 * (2 + np.sin(1.0)))


def test_half_sample_conditional_mean():
    p = sample_path(0.5, 256, 4)
    draws = np.array([variation_half_sample("2+cos(x)", p, 3, derive_seed(9, i))
                      for i in range(1000)])
    w = 2 + np.cos(p.values[:-1])
    mean = 3 * np.sum(w * p.increments)
    assert abs(draws.mean() - mean) < 4 * draws.std() / np.sqrt(draws.size)


def test_s_statistic():
    p = sample_path(0.5, 64, 2)
    assert s_statistic("0", p, 3) == 0
    z = 64 ** 0.5 * p.increments[0]
    assert s_statistic("1", p, 4, k=1) == pytest.approx(z ** 4 - 6 * z ** 2 + 3)
    with pytest.raises(ValueError):
        s_statistic("1", p, 1)


def test_s_statistic_mean_zero():
    vals = np.array([s_statistic("1", sample_path(0.5, 32, derive_seed(4, i)), 2)
                     for i in range(10_000)])
    assert abs(vals.mean()) < 4 * vals.std() / np.sqrt(vals.size)


def test_mixed_noise_scale_matches_residual_variance():
    from fracmil.powervar import mixed_noise_scale
    assert mixed_noise_scale(3) == pytest.approx(np.sqrt(6))
    assert mixed_noise_scale(5) == pytest.approx(np.sqrt(945 - 225))
    # g = 1: n * sum dB^3 - 3 B_1 has variance E[(G^3 - 3G)^2] = 6
    r = np.array([scaled_variation("1", p := sample_path(0.5, 256, derive_seed(8, i)), 3)
                  - 3 * p.endpoint for i in range(4000)])
    assert abs(r.var() - 6) < 4 * r.var() * np.sqrt(2 / r.size)
