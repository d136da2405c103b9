import math

import numpy as np
import pytest

from ebcr import (
    EstimateSummary,
    NumericalError,
    PopulationData,
    anova_variance_components,
    debiased_lasso,
    debiased_lasso_batch,
    lasso_cd,
    ols_fit,
    smooth_estimate,
)
from ebcr.gaussian import two_sided_z
from ebcr.linear import _cd_lasso_gram


def _orthonormal_design(rng, n, p):
    """Columns with X'X/n = I exactly (up to fp), via QR."""
    q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    return q * math.sqrt(n)


# ---------------------------------------------------------------------------
# least squares


def test_ols_noiseless_interpolation():
    rng = np.random.default_rng(0)
    X = _orthonormal_design(rng, 40, 5)
    y = X @ np.array([1.0, 0, 0, 0, 0])
    fit = ols_fit(PopulationData(id="a", X=X, y=y), 0)
    assert fit.summary.theta_hat == pytest.approx(1.0, abs=1e-10)
    assert fit.summary.sigma_hat_sq <= 1e-20
    np.testing.assert_allclose(fit.coef, [1, 0, 0, 0, 0], atol=1e-10)


def test_ols_monte_carlo_coverage_of_truth():
    # theta_hat within 3 se of 1 in >= 99% of 1000 seeded replications
    hits = 0
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((100, 5))
        y = X @ np.array([1.0, 0, 0, 0, 0]) + rng.standard_normal(100)
        s = ols_fit(PopulationData(id="a", X=X, y=y), 0).summary
        if abs(s.theta_hat - 1.0) <= 3.0 * math.sqrt(s.sigma_hat_sq / s.n):
            hits += 1
    assert hits >= 990


def test_ols_unbiased_over_noise_draws():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((60, 4))
    beta = np.array([0.7, -0.2, 0.0, 1.5])
    draws = 10_000
    estimates = np.empty(draws)
    for i in range(draws):
        y = X @ beta + rng.standard_normal(60)
        estimates[i] = ols_fit(PopulationData(id="a", X=X, y=y), 0).summary.theta_hat
    se_of_mean = estimates.std() / math.sqrt(draws)
    assert abs(estimates.mean() - 0.7) <= 4.0 * se_of_mean


def test_ols_preconditions():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((5, 5))
    with pytest.raises(ValueError, match="debiased_lasso"):
        ols_fit(PopulationData(id="a", X=X, y=np.zeros(5)), 0)
    Xdup = rng.standard_normal((30, 3))
    Xdup = np.column_stack([Xdup, Xdup[:, 0]])
    with pytest.raises(NumericalError, match="singular design"):
        ols_fit(PopulationData(id="a", X=Xdup, y=np.zeros(30)), 0)


# ---------------------------------------------------------------------------
# lasso


def test_lasso_zero_penalty_matches_ols():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((80, 6))
    y = X @ rng.normal(0, 1, 6) + rng.standard_normal(80)
    pop = PopulationData(id="a", X=X, y=y)
    np.testing.assert_allclose(lasso_cd(pop, 0.0), ols_fit(pop, 0).coef, atol=1e-6)


def test_lasso_full_shrinkage_threshold():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((50, 8))
    y = rng.standard_normal(50)
    lam_max = float(np.max(np.abs(X.T @ y / 50)))
    beta = lasso_cd(PopulationData(id="a", X=X, y=y), lam_max + 1e-12)
    np.testing.assert_array_equal(beta, 0.0)


def test_lasso_orthonormal_soft_threshold_oracle():
    rng = np.random.default_rng(9)
    n, p = 64, 6
    X = _orthonormal_design(rng, n, p)
    y = X @ rng.normal(0, 1, p) + rng.standard_normal(n)
    lam = 0.3
    c = X.T @ y / n
    oracle = np.sign(c) * np.maximum(np.abs(c) - lam, 0.0)
    got = lasso_cd(PopulationData(id="a", X=X, y=y), lam)
    np.testing.assert_allclose(got, oracle, atol=1e-8)


def test_lasso_objective_monotone_per_sweep():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((60, 30))
    y = X[:, 0] * 1.5 + rng.standard_normal(60)
    sink: list = []
    _cd_lasso_gram(X.T @ X / 60, X.T @ y / 60, 0.05, objective_sink=sink, yty=float(y @ y) / 60)
    objs = np.array([o[0] for o in sink])
    assert np.all(np.diff(objs) <= 1e-10 * np.maximum(np.abs(objs[:-1]), 1.0))


def test_lasso_sweep_budget_error():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((40, 10))
    y = rng.standard_normal(40)
    with pytest.raises(NumericalError, match="lasso diverged"):
        _cd_lasso_gram(X.T @ X / 40, X.T @ y / 40, 0.001, max_sweeps=1)


def test_lasso_kkt_residual_small():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((70, 25))
    y = X[:, :3] @ np.ones(3) + rng.standard_normal(70)
    lam = 0.1
    beta = lasso_cd(PopulationData(id="a", X=X, y=y), lam)
    grad = X.T @ (y - X @ beta) / 70
    active = beta != 0.0
    assert np.max(np.abs(grad[active] - lam * np.sign(beta[active]))) <= 1e-7
    assert np.max(np.abs(grad[~active])) <= lam + 1e-7


# ---------------------------------------------------------------------------
# debiased lasso


def test_debiased_reduces_to_ols_without_penalty():
    rng = np.random.default_rng(13)
    X = rng.standard_normal((90, 7))
    y = X @ rng.normal(0, 1, 7) + rng.standard_normal(90)
    pop = PopulationData(id="a", X=X, y=y)
    ols = ols_fit(pop, 2).summary
    dl = debiased_lasso(pop, 2, 0.0, 0.0)
    assert dl.theta_hat == pytest.approx(ols.theta_hat, abs=1e-6)
    assert dl.sigma_hat_sq == pytest.approx(ols.sigma_hat_sq, rel=1e-6)


def test_debiased_nodewise_degenerate_error():
    rng = np.random.default_rng(14)
    base = rng.standard_normal((50, 3))
    X = np.column_stack([base[:, 0], base])  # column 0 duplicated
    y = rng.standard_normal(50)
    with pytest.raises(NumericalError, match="degenerate"):
        debiased_lasso(PopulationData(id="a", X=X, y=y), 0, 0.1, 0.0)


@pytest.fixture(scope="module")
def highdim_p500_mc():
    """300 replications of the p=500, n=100, s=3 design, batched in chunks.

    Tracks the debiased estimate of the signal coefficient (beta_1 = 1) and of
    a pure-noise coefficient (beta_500 = 0) with its classical interval.
    """
    rng = np.random.default_rng(606)
    n, p, s, reps, chunk = 100, 500, 3, 300, 50
    z = two_sided_z(0.05)
    signal_est, null_covered = [], []
    beta = np.zeros(p)
    beta[:s] = 1.0
    for _ in range(reps // chunk):
        Xs = rng.standard_normal((chunk, n, p))
        ys = np.einsum("bij,j->bi", Xs, beta) + rng.standard_normal((chunk, n))
        th_sig, _ = debiased_lasso_batch(Xs, ys, 0)
        th_null, var_null = debiased_lasso_batch(Xs, ys, p - 1)
        signal_est.extend(th_sig.tolist())
        half = z * np.sqrt(var_null / n)
        null_covered.extend((np.abs(th_null) <= half).tolist())
    return np.array(signal_est), np.array(null_covered)


def test_debiased_bias_at_paper_design(highdim_p500_mc):
    signal_est, _ = highdim_p500_mc
    assert abs(signal_est.mean() - 1.0) <= 0.05


def test_debiased_pure_noise_coverage(highdim_p500_mc):
    _, null_covered = highdim_p500_mc
    assert 0.90 <= null_covered.mean() <= 0.98


def test_debiased_batch_matches_single():
    rng = np.random.default_rng(15)
    Xs = rng.standard_normal((4, 60, 20))
    ys = np.einsum("bij,j->bi", Xs, np.r_[np.ones(3), np.zeros(17)]) + rng.standard_normal((4, 60))
    th, var = debiased_lasso_batch(Xs, ys, 0, lam=0.2, lambda_node=0.2)
    for b in range(4):
        single = debiased_lasso(PopulationData(id=str(b), X=Xs[b], y=ys[b]), 0, 0.2, 0.2)
        assert single.theta_hat == pytest.approx(th[b], abs=1e-10)
        assert single.sigma_hat_sq == pytest.approx(var[b], rel=1e-10)


# ---------------------------------------------------------------------------
# smoothing


def test_smoothing_zero_variance_is_flag_only():
    e = EstimateSummary(id="a", theta_hat=1.5, sigma_hat_sq=2.0, n=50)
    out = smooth_estimate(e, 0.0, np.random.default_rng(0))
    assert out.theta_hat == e.theta_hat
    assert out.sigma_hat_sq == e.sigma_hat_sq
    assert out.smoothed and out.varsigma_sq == 0.0


def test_smoothing_deterministic_given_seed():
    e = EstimateSummary(id="a", theta_hat=0.0, sigma_hat_sq=1.0, n=100)
    a = smooth_estimate(e, 1.0, np.random.default_rng(77))
    b = smooth_estimate(e, 1.0, np.random.default_rng(77))
    assert a == b
    assert a.sigma_hat_sq == 2.0
    assert a.smoothed


def test_smoothing_moment_check():
    e = EstimateSummary(id="a", theta_hat=0.0, sigma_hat_sq=1.0, n=100)
    rng = np.random.default_rng(123)
    draws = np.array([smooth_estimate(e, 1.0, rng).theta_hat for _ in range(100_000)])
    assert draws.var() == pytest.approx(1.0 / 100, rel=0.03)


# ---------------------------------------------------------------------------
# variance components


def _one_way_populations(rng, K, n, p, sigma_pi_sq, sigma_eps=1.0):
    slope = np.linspace(0.5, -0.5, p)
    pops, thetas = [], []
    for k in range(K):
        X = rng.standard_normal((n, p))
        theta = rng.normal(0.0, math.sqrt(sigma_pi_sq))
        y = theta + X @ slope + sigma_eps * rng.standard_normal(n)
        pops.append(PopulationData(id=f"P{k}", X=X, y=y))
        thetas.append(theta)
    return pops, np.array(thetas)


def test_anova_zero_noise_residuals_vanish():
    rng = np.random.default_rng(21)
    pops = []
    for k in range(5):
        X = rng.standard_normal((30, 3))
        theta = rng.normal(0, 1)
        pops.append(PopulationData(id=f"P{k}", X=X, y=theta + X @ np.array([1.0, -1.0, 0.5])))
    eps_sq, _ = anova_variance_components(pops)
    assert eps_sq <= 1e-18


def test_anova_recovers_components():
    rng = np.random.default_rng(22)
    pops, _ = _one_way_populations(rng, K=200, n=100, p=5, sigma_pi_sq=0.1)
    eps_sq, pi_sq = anova_variance_components(pops)
    assert eps_sq == pytest.approx(1.0, rel=0.15)
    assert pi_sq == pytest.approx(0.1, rel=0.15)


def test_anova_single_population_is_single_term():
    rng = np.random.default_rng(23)
    X = rng.standard_normal((40, 2))
    y = 0.7 + X @ np.array([1.0, 2.0]) + rng.standard_normal(40)
    pop = PopulationData(id="only", X=X, y=y)
    eps_sq, pi_sq = anova_variance_components([pop])
    Z = np.column_stack([np.ones(40), X])
    coef = np.linalg.solve(Z.T @ Z, Z.T @ y)
    ones = np.ones(40)
    denom = 40 - ones @ X @ np.linalg.solve(X.T @ X, X.T @ ones)
    assert pi_sq == pytest.approx(coef[0] ** 2 - eps_sq / denom, rel=1e-10)


def test_anova_preconditions():
    rng = np.random.default_rng(24)
    X = rng.standard_normal((4, 3))
    with pytest.raises(ValueError, match="n > p"):
        anova_variance_components([PopulationData(id="small", X=X, y=np.zeros(4))])
    Xd = rng.standard_normal((30, 2))
    bad = PopulationData(id="dup", X=np.column_stack([Xd[:, 0], Xd[:, 0]]), y=np.zeros(30))
    with pytest.raises(NumericalError, match="dup"):
        anova_variance_components([bad])
