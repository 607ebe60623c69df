# test_gibbs_sampler.py
"""
Tests de l'échantillonneur gaussien et des poids de Gibbs.

Tests:
1. Constantes de Wick σ_1, σ_2
2. Ensembles: restriction cohérente, ensemble dégénéré, rayon trop petit
3. Puissance de Wick quartique: forme directe contre Hermite
4. Poids de Gibbs bornés par σ²/2
5. Taille d'échantillon effective
6. Moyennes nulles des puissances de Wick (Monte Carlo)
7. Estimation du rapport de fonctions de partition
. Coefficients de μ: variance ⟨n⟩^{−2}, décorrélation entre modes
"""
import math

import numpy as np
import pytest

from gibbs_sampler import (
    GaussianEnsemble,
    chaos_moment_ratio,
    effective_sample_size,
    gaussian_tail_frequency,
    gibbs_log_weight,
    mean_with_standard_error,
    partition_function_ratio_estimate,
    sample_mu,
    sample_mu_batch,
    sample_seeds,
    sigma,
    weighted_sample_batch,
    wick_quadratic,
    wick_quartic,
    wick_quartic_hermite,
    wick_quartic_integrals,
)
from spectral_core import disc_mask, japanese_bracket


def test_sigma_constants():
    """Test 1: σ_1 = 3, σ_2 = 77/15"""
    assert sigma(1).sigma_N == pytest.approx(3.0, rel=1e-14)
    assert sigma(2).sigma_N == pytest.approx(77.0 / 15.0, rel=1e-14)
    # σ_N ≈ 2π log N à une constante près
    assert sigma(32).sigma_N - sigma(16).sigma_N == pytest.approx(2.0 * math.pi * math.log(2.0), rel=0.05)
    with pytest.raises(ValueError):
        sigma(0)


def test_ensembles():
    """Test 2: Restriction cohérente et ensemble dégénéré"""
    big = GaussianEnsemble.draw(1234, 8)
    small = GaussianEnsemble.draw(1234, 4)
    np.testing.assert_array_equal(np.where(disc_mask(4), big.g[4:13, 4:13], 0), small.g)
    assert big.value((0, 0)) == small.value((0, 0))

    u = sample_mu(4, big)
    np.testing.assert_allclose(u.coeffs, sample_mu(4, small).coeffs)
    with pytest.raises(ValueError):
        sample_mu(8, small)

    zero = GaussianEnsemble.degenerate(4)
    assert np.all(sample_mu(4, zero).coeffs == 0)


def test_wick_quartic_hermite():
    """Test 3: :|w|⁴: = He_4(Re) + 2He_2(Re)He_2(Im) + He_4(Im)"""
    u = sample_mu(4, GaussianEnsemble.draw(99, 4))
    direct, integral = wick_quartic(u, 4)
    np.testing.assert_allclose(wick_quartic_hermite(u, 4), direct, rtol=1e-9, atol=1e-9)
    assert integral == pytest.approx(float(np.mean(direct)))
    batch = wick_quartic_integrals(u.coeffs[None], 4)
    assert batch[0] == pytest.approx(integral, rel=1e-10)


def test_log_weight_upper_bound():
    """Test 4: −¼∫:|w|⁴: ≤ σ²/2 puisque x² − 4σx + 2σ² ≥ −2σ²"""
    s = sigma(4).sigma_N
    for seed in sample_seeds(5, 20):
        u = sample_mu(4, GaussianEnsemble.draw(seed, 4))
        assert gibbs_log_weight(u, 4) <= 0.5 * s * s + 1e-9


def test_effective_sample_size():
    """Test 5: ESS"""
    assert effective_sample_size(np.zeros(50)) == pytest.approx(50.0)
    assert effective_sample_size([0.0, -np.inf, -np.inf]) == pytest.approx(1.0)
    assert 1.0 <= effective_sample_size([0.0, -1.0, -2.0]) <= 3.0
    with pytest.raises(ValueError):
        effective_sample_size([])
    with pytest.raises(ValueError):
        effective_sample_size([-np.inf, -np.inf])


def test_wick_means_vanish():
    """Test 6: E_μ[∫:|P_N u|²:] = E_μ[∫:|P_N u|⁴:] = 0"""
    N = 4
    coeffs = sample_mu_batch(N, sample_seeds(2024, 2000))
    quadratic = np.sum(np.abs(coeffs) ** 2, axis=(-2, -1)) - sigma(N).sigma_N
    mean, se = mean_with_standard_error(quadratic)
    assert abs(mean) < 4.0 * se

    quartic = wick_quartic_integrals(coeffs, N)
    mean, se = mean_with_standard_error(quartic)
    assert abs(mean) < 4.0 * se


def test_partition_ratio():
    """Test 7: Rapport de fonctions de partition et intervalle bootstrap"""
    est = partition_function_ratio_estimate(2, 200, seed=3)
    assert est["samples"] == 200
    assert est["ci_lo"] <= est["estimate"] <= est["ci_hi"]
    assert est["estimate"] > 0.0
    assert 1.0 <= est["ess"] <= 200.0

    coeffs, lw = weighted_sample_batch(2, 10, seed=3)
    assert coeffs.shape == (10, 5, 5)
    assert lw.shape == (10,)


def test_tail_and_chaos():
    """Test 8: Fréquence de queue extrême et rapport L⁴/L² du second chaos"""
    assert gaussian_tail_frequency(3, 20, threshold=0.0, seed=1) == 1.0
    assert gaussian_tail_frequency(3, 20, threshold=50.0, seed=1) == 0.0

    # hypercontractivité: ‖X‖_4 ≤ 3‖X‖_2 au second chaos
    ratio = chaos_moment_ratio(2, 500, seed=5)
    assert 1.0 <= ratio <= 3.0

    u = sample_mu(4, GaussianEnsemble.draw(2, 4))
    low = np.where(disc_mask(2), u.coeffs[2:7, 2:7], 0.0)
    assert wick_quadratic(u, 2) == pytest.approx(float(np.sum(np.abs(low) ** 2)) - sigma(2).sigma_N)


def test_mu_coefficient_covariance():
    """Test 9: E|û(n)|² = ⟨n⟩^{−2}, E û(n)conj(û(n′)) = 0 et E û(n)² = 0"""
    radius, count = 2, 4000
    seeds = sample_seeds(17, count)
    batch = sample_mu_batch(radius, seeds)
    np.testing.assert_array_equal(batch[0], sample_mu(radius, GaussianEnsemble.draw(seeds[0], radius)).coeffs)

    mask = disc_mask(radius)
    assert np.all(batch[:, ~mask] == 0)
    # coefficients normalisés: gaussiennes complexes standard
    z = (batch * japanese_bracket(radius))[:, mask]
    se = 1.0 / math.sqrt(count)

    second = np.mean(np.abs(z) ** 2, axis=0)
    np.testing.assert_allclose(second, 1.0, atol=5 * se)

    cov = z.T @ np.conj(z) / count
    off = cov[~np.eye(len(cov), dtype=bool)]
    assert np.max(np.abs(off)) < 6 * se
    pseudo = np.mean(z * z, axis=0)
    assert np.max(np.abs(pseudo)) < 6 * math.sqrt(2.0) * se
