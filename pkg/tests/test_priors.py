import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from ebcr import (
    EstimateSummary,
    GaussianParams,
    GaussianPrior,
    KernelMixturePrior,
    NumericalError,
    deconvolution_char,
    deconvolution_density,
    default_deconv_bandwidth,
    default_zeta_sq,
    fit_deconv_prior,
    fit_gaussian_prior,
    fit_kde_prior,
    silverman_bandwidth_sq,
    tabulate_prior,
)
from ebcr.gaussian import phi
from ebcr.priors import _profile_gaussian_mle


def _summaries(theta_hats, noise_var, n=100):
    return [
        EstimateSummary(id=str(k), theta_hat=float(t), sigma_hat_sq=noise_var * n, n=n)
        for k, t in enumerate(theta_hats)
    ]


# ---------------------------------------------------------------------------
# Gaussian MLE prior


def test_gaussian_prior_two_point_arithmetic():
    prior = fit_gaussian_prior(_summaries([-1.0, 1.0], 0.5), zeta_sq=1e-6)
    assert prior.params.mean == pytest.approx(0.0, abs=1e-12)
    assert prior.params.variance == pytest.approx(0.5, abs=1e-12)


def test_gaussian_prior_clamps_at_floor():
    prior = fit_gaussian_prior(_summaries([0.4] * 10, 0.2), zeta_sq=1e-3)
    assert prior.params.variance == 1e-3
    assert prior.params.mean == pytest.approx(0.4)


def test_gaussian_prior_floor_always_respected():
    rng = np.random.default_rng(0)
    for _ in range(20):
        theta = rng.normal(0, rng.uniform(0.01, 2), size=rng.integers(2, 30))
        zeta = float(rng.uniform(1e-6, 0.5))
        prior = fit_gaussian_prior(_summaries(theta, 0.3), zeta_sq=zeta)
        assert prior.params.variance >= zeta


def test_gaussian_prior_monte_carlo_recovery():
    # K = 200 per replication; average over replications to tame the
    # ~10% sampling noise of a single variance estimate
    rng = np.random.default_rng(42)
    means, variances = [], []
    for _ in range(5):
        theta = rng.normal(1.0, math.sqrt(0.1), 200) + rng.normal(0, 0.1, 200)
        prior = fit_gaussian_prior(_summaries(theta, 0.01), zeta_sq=1e-8)
        means.append(prior.params.mean)
        variances.append(prior.params.variance)
    assert abs(np.mean(means) - 1.0) <= 0.05
    assert float(np.mean(variances)) == pytest.approx(0.1, rel=0.25)


def test_gaussian_prior_needs_two_populations():
    with pytest.raises(ValueError):
        fit_gaussian_prior(_summaries([1.0], 0.1))


def test_profile_path_matches_closed_form_at_equal_n():
    rng = np.random.default_rng(11)
    theta = rng.normal(0.5, 0.8, 60)
    noise = np.full(60, 0.04)
    mu_p, v_p = _profile_gaussian_mle(theta, noise)
    mu_c = float(theta.mean())
    v_c = max(float(np.mean((theta - mu_c) ** 2)) - 0.04, 0.0)
    assert mu_p == pytest.approx(mu_c, abs=1e-8)
    assert v_p == pytest.approx(v_c, abs=1e-8)


def test_profile_path_used_for_unequal_n():
    rng = np.random.default_rng(12)
    summaries = [
        EstimateSummary(id=str(k), theta_hat=float(rng.normal(0, 1)),
                        sigma_hat_sq=1.0, n=50 + 10 * k)
        for k in range(20)
    ]
    prior = fit_gaussian_prior(summaries, zeta_sq=1e-10)
    # profile optimum: the weighted score must vanish (interior optimum)
    theta = np.array([s.theta_hat for s in summaries])
    noise = np.array([s.sigma_hat_sq / s.n for s in summaries])
    v = prior.params.variance
    w = 1.0 / (v + noise)
    mu = float(np.dot(w, theta) / w.sum())
    score = float(np.dot(w**2, (theta - mu) ** 2) - w.sum())
    assert abs(score) <= 1e-6 * w.sum()


def test_default_zeta_sq_scale():
    summaries = _summaries(np.linspace(-1, 1, 50), 0.02)
    # median variance 2.0, median n 100, K 50
    assert default_zeta_sq(summaries) == pytest.approx(2.0 / (100 * 50), rel=1e-12)


# ---------------------------------------------------------------------------
# kernel density prior


def test_kde_density_midpoint_value():
    prior = KernelMixturePrior(centers=np.array([0.0, 2.0]), bandwidth_sq=1.0)
    # symmetric midpoint: both kernels contribute phi(1|0,1)
    assert float(prior.density(1.0)) == pytest.approx(0.2419707, abs=1e-7)


def test_kde_integrates_to_one():
    rng = np.random.default_rng(3)
    prior = fit_kde_prior(_summaries(rng.normal(0, 1, 30), 0.05))
    g = tabulate_prior(prior).grid
    raw_mass = float(np.sum(prior.density(g.centers())) * g.step)
    assert raw_mass == pytest.approx(1.0, abs=1e-6)


def test_kde_small_bandwidth_peak_scaling():
    centers = np.array([0.0, 1.0, 2.5])
    b_sq = 1e-10
    prior = KernelMixturePrior(centers=centers, bandwidth_sq=b_sq)
    expected_peak = 1.0 / (centers.size * math.sqrt(2 * math.pi * b_sq))
    assert float(prior.density(1.0)) == pytest.approx(expected_peak, rel=1e-6)


def test_kde_silverman_default():
    rng = np.random.default_rng(4)
    theta = rng.normal(0, 1, 100)
    sd = theta.std()
    iqr = np.subtract(*np.percentile(theta, [75, 25]))
    expected = (0.9 * min(sd, iqr / 1.34) * 100 ** (-0.2)) ** 2
    assert silverman_bandwidth_sq(theta) == pytest.approx(expected, rel=1e-12)
    prior = fit_kde_prior(_summaries(theta, 0.05))
    assert prior.bandwidth_sq == pytest.approx(expected, rel=1e-12)


def test_kde_validation():
    with pytest.raises(ValueError):
        KernelMixturePrior(centers=np.array([1.0]), bandwidth_sq=1.0)
    with pytest.raises(ValueError):
        fit_kde_prior(_summaries([0.0, 1.0], 0.1), bandwidth_sq=0.0)


# ---------------------------------------------------------------------------
# deconvolution prior


def test_deconv_noiseless_limit_is_sinc_kernel():
    rng = np.random.default_rng(5)
    theta = rng.normal(0, 1, 40)
    noise = np.zeros(40)
    b = 0.7
    x = np.array([-2.0, -0.3, 0.0, 0.9, 3.1])
    got = deconvolution_density(x, theta, noise, b)
    u = x[:, None] - theta[None, :]
    oracle = np.mean(np.sin(u / b) / (np.pi * u), axis=1)
    np.testing.assert_allclose(got, oracle, atol=1e-8)


def test_deconv_matches_quad_oracle_pointwise():
    rng = np.random.default_rng(6)
    theta = rng.normal(0, 1, 15)
    noise = np.full(15, 0.09)
    b = 0.6
    for x in (-1.3, 0.2, 2.4):
        got = float(deconvolution_density(np.array([x]), theta, noise, b))

        def integrand(z):
            return float(
                np.mean(np.cos(z * (x - theta)) * np.exp(0.5 * noise * z * z))
            ) / math.pi

        oracle, err = quad(integrand, 0.0, 1.0 / b, limit=400)
        assert abs(got - oracle) <= 1e-8 + 10 * err


def test_deconv_char_identity_at_probe_frequencies():
    rng = np.random.default_rng(7)
    theta = rng.normal(0, 1, 200)
    noise = np.full(200, 0.04)
    zs = np.linspace(-2.0, 2.0, 20)
    got = deconvolution_char(zs, theta, noise)
    # independent restatement of the construction
    ref = np.array(
        [np.mean(np.exp(1j * z * theta) * np.exp(0.5 * noise * z * z)) for z in zs]
    )
    np.testing.assert_allclose(got, ref, atol=1e-6)


def test_deconv_kappa_zero_returns_fallback():
    summaries = _summaries(np.linspace(-2, 2, 20), 0.05)
    fallback = GaussianParams(0.3, 0.8)
    prior = fit_deconv_prior(summaries, b=0.5, kappa=0.0, fallback=fallback)
    g = prior.grid
    expected = phi(g.centers(), fallback.mean, fallback.variance)
    expected = expected / (expected.sum() * g.step)
    np.testing.assert_allclose(g.values, expected, rtol=1e-9)


def test_deconv_recovers_standard_normal_prior():
    # mean quadrature-L1 error over replications at the stated design
    K, r = 500, 0.25
    l1 = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        theta_hat = rng.normal(0, 1, K) + rng.normal(0, math.sqrt(r), K)
        prior = fit_deconv_prior(_summaries(theta_hat, r))
        g = prior.grid
        l1.append(float(np.sum(np.abs(g.values - phi(g.centers(), 0, 1))) * g.step))
    assert float(np.mean(l1)) <= 0.15


def test_deconv_bandwidth_overflow_guard():
    summaries = _summaries([0.0, 1.0, -1.0, 0.5], noise_var=5.0)
    with pytest.raises(NumericalError, match="bandwidth too small"):
        fit_deconv_prior(summaries, b=0.01)


def test_deconv_default_bandwidth_never_exceeds_inflation_bound():
    rng = np.random.default_rng(8)
    summaries = _summaries(rng.normal(0, 1, 80), 0.2)
    b = default_deconv_bandwidth(summaries)
    r_med = 0.2
    assert 1.0 / b**2 <= math.log(80) / r_med + 1e-9
    assert 0.2 / (2 * b * b) <= 30.0 + 1e-9


def test_deconv_prior_is_normalized_and_positive():
    rng = np.random.default_rng(9)
    prior = fit_deconv_prior(_summaries(rng.normal(0, 1, 60), 0.1))
    g = prior.grid
    assert abs(g.total_mass() - 1.0) <= 1e-9
    assert np.all(g.values >= 0.0)
    # the Gaussian fallback keeps every cell strictly positive
    assert np.all(g.values > 0.0)


# ---------------------------------------------------------------------------
# cross-backend invariants


def test_all_backends_integrate_to_one():
    rng = np.random.default_rng(10)
    summaries = _summaries(rng.normal(0.5, 0.7, 50), 0.05)
    for prior in (
        fit_gaussian_prior(summaries),
        fit_kde_prior(summaries),
        fit_deconv_prior(summaries),
    ):
        g = tabulate_prior(prior).grid
        mass = float(np.sum(prior.density(g.centers())) * g.step)
        assert mass == pytest.approx(1.0, abs=1e-6)


def test_tabulate_gaussian_prior_matches_density():
    prior = GaussianPrior(GaussianParams(1.0, 0.25))
    g = tabulate_prior(prior).grid
    np.testing.assert_allclose(
        g.values, phi(g.centers(), 1.0, 0.25), rtol=1e-10, atol=1e-12
    )


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    k=st.integers(2, 40),
    spread=st.floats(0.05, 2.0),
)
def test_gaussian_fit_variance_floor_property(seed, k, spread):
    rng = np.random.default_rng(seed)
    theta = rng.normal(0, spread, k)
    zeta = 0.01
    prior = fit_gaussian_prior(_summaries(theta, 0.1), zeta_sq=zeta)
    assert prior.params.variance >= zeta
