"""Per-population asymptotically linear estimators.

Provides least squares for the low-dimensional regime, a coordinate-descent
lasso plus the nodewise debiased lasso for the high-dimensional regime,
Gaussian smoothing of an estimate, and the pooled one-way variance-component
estimators.  ``sigma_hat_sq`` always refers to the asymptotic variance of
``sqrt(n) * (estimate - truth)``, so a classical interval has half-width
``z * sqrt(sigma_hat_sq / n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._validation import check_array, check_nonnegative
from .errors import NumericalError

#: XtX condition-number gate for direct solves.
CONDITION_LIMIT = 1e12
MAX_SWEEPS = 10_000
KKT_TOL = 1e-7


@dataclass(frozen=True)
class PopulationData:
    """Design matrix and response vector for one population."""

    id: str
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = check_array(f"X[{self.id}]", self.X, ndim=2)
        y = check_array(f"y[{self.id}]", self.y, ndim=1)
        if X.shape[0] < 1:
            raise ValueError(f"population {self.id!r} has no rows")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"population {self.id!r}: X has {X.shape[0]} rows, y has {y.shape[0]}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class EstimateSummary:
    """Sufficient summary (theta_hat, sigma_hat_sq, n) of one population."""

    id: str
    theta_hat: float
    sigma_hat_sq: float
    n: int
    smoothed: bool = False
    varsigma_sq: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.theta_hat):
            raise ValueError(f"summary {self.id!r}: theta_hat is not finite")
        if not (self.sigma_hat_sq > 0.0 and math.isfinite(self.sigma_hat_sq)):
            raise ValueError(f"summary {self.id!r}: sigma_hat_sq must be > 0")
        if self.n < 1:
            raise ValueError(f"summary {self.id!r}: n must be >= 1")
        if not self.varsigma_sq >= 0.0:
            raise ValueError(f"summary {self.id!r}: varsigma_sq must be >= 0")


@dataclass(frozen=True)
class OlsFit:
    summary: EstimateSummary
    coef: np.ndarray


def _condition_check(X: np.ndarray, label: str) -> None:
    svals = np.linalg.svd(X, compute_uv=False)
    if svals[-1] <= 0.0 or (svals[0] / svals[-1]) ** 2 >= CONDITION_LIMIT:
        raise NumericalError(f"singular design in population {label!r}")


def ols_fit(data: PopulationData, target_index: int = 0) -> OlsFit:
    """Least-squares fit; the summary tracks the ``target_index`` coefficient.

    ``sigma_hat_sq = n * sigma_eps^2 * [(X'X)^-1]_jj`` with
    ``sigma_eps^2 = ||y - X beta||^2 / (n - p)``.
    """
    X, y = data.X, data.y
    n, p = X.shape
    if n <= p:
        raise ValueError(f"population {data.id!r}: n <= p, use debiased_lasso")
    if not 0 <= target_index < p:
        raise ValueError(f"target_index {target_index} out of range for p={p}")
    _condition_check(X, data.id)
    gram = X.T @ X
    coef = np.linalg.solve(gram, X.T @ y)
    resid = y - X @ coef
    sigma_eps_sq = float(resid @ resid) / (n - p)
    unit = np.zeros(p)
    unit[target_index] = 1.0
    inv_jj = float(np.linalg.solve(gram, unit)[target_index])
    summary = EstimateSummary(
        id=data.id,
        theta_hat=float(coef[target_index]),
        sigma_hat_sq=max(n * sigma_eps_sq * inv_jj, np.finfo(float).tiny),
        n=n,
    )
    return OlsFit(summary=summary, coef=coef)


def _soft_threshold(x: np.ndarray, lam) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def _cd_lasso_gram(
    gram: np.ndarray,
    xty: np.ndarray,
    lam,
    *,
    objective_sink: list | None = None,
    yty: float | np.ndarray = 0.0,
    max_sweeps: int = MAX_SWEEPS,
) -> np.ndarray:
    """Coordinate descent on 0.5 b'Gb - c'b + lam ||b||_1, batched over axis 0.

    ``gram`` is (B, p, p) = X'X/n and ``xty`` is (B, p) = X'y/n.  ``lam`` may be
    a scalar or a length-B vector.  Convergence is certified by the KKT
    residual of the stated objective (<= KKT_TOL).
    """
    gram = np.asarray(gram, dtype=float)
    xty = np.asarray(xty, dtype=float)
    squeeze = gram.ndim == 2
    if squeeze:
        gram = gram[None]
        xty = xty[None]
    B, p = xty.shape
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (B,)).copy()
    if np.any(lam < 0.0):
        raise ValueError("lambda must be >= 0")
    diag = np.einsum("bjj->bj", gram).copy()
    if np.any(diag <= 0.0):
        raise NumericalError("zero-variance column in lasso design")
    beta = np.zeros((B, p))
    fitted = np.zeros((B, p))  # G @ beta, updated incrementally
    scale = np.maximum(np.max(np.abs(xty), axis=1), 1e-12)
    for sweep in range(max_sweeps):
        max_delta = np.zeros(B)
        for j in range(p):
            rho = xty[:, j] - fitted[:, j] + diag[:, j] * beta[:, j]
            new = _soft_threshold(rho, lam) / diag[:, j]
            delta = new - beta[:, j]
            moved = delta != 0.0
            if np.any(moved):
                fitted[moved] += gram[moved, :, j] * delta[moved, None]
                beta[:, j] = new
            np.maximum(max_delta, np.abs(delta), out=max_delta)
        if objective_sink is not None:
            obj = (
                0.5 * np.einsum("bj,bj->b", beta, fitted)
                - np.einsum("bj,bj->b", xty, beta)
                + lam * np.abs(beta).sum(axis=1)
                + 0.5 * np.asarray(yty)
            )
            if objective_sink:
                prev = objective_sink[-1]
                if np.any(obj > prev + 1e-10 * np.maximum(np.abs(prev), 1.0)):
                    raise NumericalError("lasso objective increased between sweeps")
            objective_sink.append(obj)
        if np.all(max_delta <= 1e-10 * scale):
            fitted = np.einsum("bjk,bk->bj", gram, beta)  # exact refresh
            grad = xty - fitted
            violation = np.where(
                beta == 0.0,
                np.maximum(np.abs(grad) - lam[:, None], 0.0),
                np.abs(grad - lam[:, None] * np.sign(beta)),
            )
            if float(np.max(violation)) <= KKT_TOL:
                return beta[0] if squeeze else beta
    raise NumericalError("lasso diverged: no convergence within sweep budget")


def lasso_cd(data: PopulationData, lam: float) -> np.ndarray:
    """Lasso coefficients minimizing ``0.5/n ||y - X b||^2 + lam ||b||_1``.

    Solved by cyclic coordinate descent on the Gram form; the objective is
    asserted non-increasing across sweeps and the KKT residual of the returned
    solution is at most 1e-7.  ``lam = 0`` with n > p reduces to least squares.
    """
    lam = check_nonnegative("lambda", lam)
    X, y = data.X, data.y
    n, p = X.shape
    if lam == 0.0 and n > p:
        _condition_check(X, data.id)
        return np.linalg.solve(X.T @ X, X.T @ y)
    sink: list = []
    return _cd_lasso_gram(
        X.T @ X / n, X.T @ y / n, lam, objective_sink=sink, yty=float(y @ y) / n
    )


def default_lasso_lambda(X: np.ndarray, y: np.ndarray) -> float:
    """Universal-threshold default: sqrt(2 log p / n) times a pilot noise scale."""
    n, p = X.shape
    lam0 = math.sqrt(2.0 * math.log(p) / n)
    beta0 = _cd_lasso_gram(X.T @ X / n, X.T @ y / n, lam0)
    resid = y - X @ beta0
    dof = max(n - int(np.count_nonzero(beta0)), 1)
    sigma_pre = math.sqrt(float(resid @ resid) / dof)
    return lam0 * max(sigma_pre, 1e-8)


def _nodewise_direction(gram: np.ndarray, j: int, lambda_node) -> tuple[np.ndarray, np.ndarray]:
    """Nodewise-lasso row of the relaxed inverse covariance, batched.

    Returns (theta_j, tau_sq) where theta_j is (B, p) and tau_sq is (B,).
    """
    B, p, _ = gram.shape
    keep = np.arange(p) != j
    sub_gram = gram[:, keep][:, :, keep]
    sub_xty = gram[:, keep, j]
    gamma = _cd_lasso_gram(sub_gram, sub_xty, lambda_node)
    if gamma.ndim == 1:
        gamma = gamma[None]
    lam_vec = np.broadcast_to(np.asarray(lambda_node, dtype=float), (B,))
    # tau^2 = ||x_j - X_-j gamma||^2 / n + lambda ||gamma||_1, in Gram form.
    tau_sq = (
        gram[:, j, j]
        - 2.0 * np.einsum("bk,bk->b", gamma, sub_xty)
        + np.einsum("bk,bkl,bl->b", gamma, sub_gram, gamma)
        + lam_vec * np.abs(gamma).sum(axis=1)
    )
    if np.any(tau_sq <= 1e-12):
        raise NumericalError("nodewise regression degenerate: zero residual variance")
    theta = np.zeros((B, p))
    theta[:, keep] = -gamma / tau_sq[:, None]
    theta[:, j] = 1.0 / tau_sq
    return theta, tau_sq


def _debiased_lasso_arrays(
    Xs: np.ndarray,
    ys: np.ndarray,
    target_index: int,
    lam,
    lambda_node,
) -> tuple[np.ndarray, np.ndarray]:
    """Debiased-lasso point estimates and sqrt(n)-scale variances, batched."""
    B, n, p = Xs.shape
    gram = np.einsum("bij,bik->bjk", Xs, Xs) / n
    xty = np.einsum("bij,bi->bj", Xs, ys) / n
    beta = _cd_lasso_gram(gram, xty, lam)
    if beta.ndim == 1:
        beta = beta[None]
    resid = ys - np.einsum("bij,bj->bi", Xs, beta)
    support = np.count_nonzero(beta, axis=1)
    dof = n - support
    if np.any(dof <= 0):
        raise NumericalError("lasso support as large as the sample size")
    sigma_eps_sq = np.einsum("bi,bi->b", resid, resid) / dof
    theta_dir, _tau_sq = _nodewise_direction(gram, target_index, lambda_node)
    correction = np.einsum("bj,bj->b", theta_dir, np.einsum("bij,bi->bj", Xs, resid) / n)
    theta_tilde = beta[:, target_index] + correction
    # Asymptotic variance of sqrt(n)(theta_tilde - theta): sigma_eps^2 Theta' Sigma Theta.
    sandwich = np.einsum("bj,bjk,bk->b", theta_dir, gram, theta_dir)
    return theta_tilde, sigma_eps_sq * sandwich


def debiased_lasso(
    data: PopulationData,
    target_index: int = 0,
    lam: float | None = None,
    lambda_node: float | None = None,
) -> EstimateSummary:
    """Debiased (desparsified) lasso estimate of one coefficient.

    ``theta = beta_j + Theta_j' X'(y - X beta)/n`` with ``Theta_j`` from a
    nodewise lasso of column j on the others; variance is the sandwich
    ``sigma_eps^2 Theta_j' (X'X/n) Theta_j`` on the sqrt(n) scale, with the
    degrees-of-freedom correction ``n - |supp(beta)|`` in ``sigma_eps^2``.
    """
    X, y = data.X, data.y
    n, p = X.shape
    if not 0 <= target_index < p:
        raise ValueError(f"target_index {target_index} out of range for p={p}")
    if lam is None:
        lam = default_lasso_lambda(X, y)
    if lambda_node is None:
        lambda_node = lam
    lam = check_nonnegative("lambda", lam)
    lambda_node = check_nonnegative("lambda_node", lambda_node)
    theta, var = _debiased_lasso_arrays(X[None], y[None], target_index, lam, lambda_node)
    return EstimateSummary(
        id=data.id,
        theta_hat=float(theta[0]),
        sigma_hat_sq=max(float(var[0]), np.finfo(float).tiny),
        n=n,
    )


def debiased_lasso_batch(
    Xs: np.ndarray,
    ys: np.ndarray,
    target_index: int = 0,
    lam: float | None = None,
    lambda_node: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Debiased lasso across B same-shape populations at once.

    Returns per-population point estimates and sqrt(n)-scale variances; the
    per-population default penalty rescales the universal threshold by a pilot
    noise estimate, as in :func:`default_lasso_lambda`.
    """
    Xs = np.asarray(Xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    B, n, p = Xs.shape
    if lam is None:
        lam0 = math.sqrt(2.0 * math.log(p) / n)
        gram = np.einsum("bij,bik->bjk", Xs, Xs) / n
        xty = np.einsum("bij,bi->bj", Xs, ys) / n
        beta0 = _cd_lasso_gram(gram, xty, lam0)
        if beta0.ndim == 1:
            beta0 = beta0[None]
        resid = ys - np.einsum("bij,bj->bi", Xs, beta0)
        dof = np.maximum(n - np.count_nonzero(beta0, axis=1), 1)
        sigma_pre = np.sqrt(np.einsum("bi,bi->b", resid, resid) / dof)
        lam_vec = lam0 * np.maximum(sigma_pre, 1e-8)
    else:
        lam_vec = np.broadcast_to(float(lam), (B,))
    node_vec = lam_vec if lambda_node is None else np.broadcast_to(float(lambda_node), (B,))
    return _debiased_lasso_arrays(Xs, ys, target_index, lam_vec, node_vec)


def smooth_estimate(
    e: EstimateSummary, varsigma_sq: float, rng: np.random.Generator
) -> EstimateSummary:
    """Add independent N(0, varsigma_sq/n) noise to the estimate.

    The reported variance grows by ``varsigma_sq`` on the sqrt(n) scale.  With
    ``varsigma_sq = 0`` the values are unchanged (no draw is consumed) and only
    the flag is set.
    """
    varsigma_sq = check_nonnegative("varsigma_sq", varsigma_sq)
    if varsigma_sq == 0.0:
        return replace(e, smoothed=True, varsigma_sq=0.0)
    z = rng.standard_normal()
    return EstimateSummary(
        id=e.id,
        theta_hat=e.theta_hat + z * math.sqrt(varsigma_sq / e.n),
        sigma_hat_sq=e.sigma_hat_sq + varsigma_sq,
        n=e.n,
        smoothed=True,
        varsigma_sq=varsigma_sq,
    )


def _intercept_precision_denominator(X: np.ndarray) -> float:
    """n - 1'X (X'X)^-1 X'1, the intercept information after projecting out X."""
    n = X.shape[0]
    ones = np.ones(n)
    xt1 = X.T @ ones
    return float(n - xt1 @ np.linalg.solve(X.T @ X, xt1))


def anova_variance_components(populations: list[PopulationData]) -> tuple[float, float]:
    """Pooled noise and random-effect variance estimates for the one-way model.

    Each population is fit with an internally added intercept column; the
    pooled residual sum of squares over ``sum(n_k) - K p`` estimates the noise
    variance, and the intercept estimates (their squares, less their sampling
    variance) average to the random-effect variance, which may be negative.
    """
    if not populations:
        raise ValueError("need at least one population")
    K = len(populations)
    p = populations[0].p
    rss = 0.0
    total_n = 0
    theta = np.empty(K)
    denom = np.empty(K)
    for k, pop in enumerate(populations):
        if pop.p != p:
            raise ValueError(f"population {pop.id!r} has p={pop.p}, expected {p}")
        if pop.n <= p + 1:
            raise ValueError(f"population {pop.id!r}: need n > p + 1 rows")
        Z = np.column_stack([np.ones(pop.n), pop.X])
        _condition_check(Z, pop.id)
        coef = np.linalg.solve(Z.T @ Z, Z.T @ pop.y)
        resid = pop.y - Z @ coef
        rss += float(resid @ resid)
        total_n += pop.n
        theta[k] = coef[0]
        denom[k] = _intercept_precision_denominator(pop.X)
    sigma_eps_sq = rss / (total_n - K * p)
    sigma_pi_sq = float(np.mean(theta**2 - sigma_eps_sq / denom))
    return sigma_eps_sq, sigma_pi_sq
