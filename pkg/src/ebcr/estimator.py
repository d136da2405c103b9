"""scikit-learn style front end.

``EmpiricalBayesRegion`` fits a random-effects prior from per-population
summary rows and predicts confidence regions for a target population, so the
procedure composes with sklearn tooling (``get_params`` / ``set_params`` /
``clone``).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_probability
from .linear import EstimateSummary
from .priors import fit_deconv_prior, fit_gaussian_prior, fit_kde_prior
from .regions import (
    Region,
    TauSolveConfig,
    eb_gaussian_interval,
    hybrid_select,
    region_for_target,
)

_METHODS = ("parametric", "kde", "deconvolution", "hybrid")


def as_summaries(X) -> list[EstimateSummary]:
    """Coerce summary input to a list of :class:`EstimateSummary`.

    Accepts an existing list of summaries or an array-like of shape (K, 3)
    with columns ``theta_hat, sigma_hat_sq, n``.
    """
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], EstimateSummary):
        return list(X)
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError("summaries must be (K, 3): theta_hat, sigma_hat_sq, n")
    return [
        EstimateSummary(id=str(k), theta_hat=float(t), sigma_hat_sq=float(v), n=int(n))
        for k, (t, v, n) in enumerate(arr)
    ]


def _as_observation(obs) -> EstimateSummary | None:
    if obs is None or isinstance(obs, EstimateSummary):
        return obs
    arr = np.asarray(obs, dtype=float).ravel()
    if arr.size != 3:
        raise ValueError("observation must be (theta_hat, sigma_hat_sq, n)")
    return EstimateSummary(id="target", theta_hat=float(arr[0]),
                           sigma_hat_sq=float(arr[1]), n=int(arr[2]))


class EmpiricalBayesRegion(BaseEstimator):
    """Empirical Bayes confidence regions pooled across related populations.

    Parameters
    ----------
    method : {"parametric", "kde", "deconvolution", "hybrid"}
        Prior backend; "hybrid" fits the kde prior and falls back to the
        classical interval when the simulated expected region is wider.
    alpha : float
        One minus the nominal coverage level.
    zeta_sq, bandwidth_sq, deconv_b, kappa : float or None
        Backend tuning knobs; ``None`` uses the documented defaults.
    mc_draws, seed : int
        Monte Carlo budget and stream seed for the threshold solver.
    """

    def __init__(
        self,
        method: str = "parametric",
        alpha: float = 0.05,
        zeta_sq: float | None = None,
        bandwidth_sq: float | None = None,
        deconv_b: float | None = None,
        kappa: float | None = None,
        mc_draws: int = 4000,
        seed: int = 0,
    ):
        self.method = method
        self.alpha = alpha
        self.zeta_sq = zeta_sq
        self.bandwidth_sq = bandwidth_sq
        self.deconv_b = deconv_b
        self.kappa = kappa
        self.mc_draws = mc_draws
        self.seed = seed

    def fit(self, X, y=None):
        """Fit the prior from per-population summaries (rows or objects)."""
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}, got {self.method!r}")
        check_probability("alpha", self.alpha)
        summaries = as_summaries(X)
        if self.method == "parametric":
            self.prior_ = fit_gaussian_prior(summaries, self.zeta_sq)
        elif self.method == "deconvolution":
            self.prior_ = fit_deconv_prior(summaries, b=self.deconv_b, kappa=self.kappa)
        else:  # kde and hybrid share the kernel prior
            self.prior_ = fit_kde_prior(summaries, self.bandwidth_sq)
        self.n_populations_ = len(summaries)
        return self

    def _check_fitted(self):
        if not hasattr(self, "prior_"):
            raise NotFittedError("call fit before predicting regions")

    def _tau_cfg(self) -> TauSolveConfig:
        return TauSolveConfig(mc_draws=self.mc_draws, seed=self.seed)

    def predict_region(self, obs=None) -> Region:
        """Confidence region for a target population.

        ``obs`` is ``(theta_hat, sigma_hat_sq, n)`` or an
        :class:`EstimateSummary`; ``None`` requests the no-target-data region
        (a level set of the fitted prior).
        """
        self._check_fitted()
        obs = _as_observation(obs)
        if self.method == "hybrid":
            if obs is None:
                return region_for_target(self.prior_, None, self.alpha, self._tau_cfg())
            return hybrid_select(self.prior_, obs, self.alpha, self._tau_cfg()).region
        if self.method == "parametric" and obs is not None:
            return eb_gaussian_interval(self.prior_, obs, self.alpha)
        return region_for_target(self.prior_, obs, self.alpha, self._tau_cfg())

    def predict(self, X) -> list[Region]:
        """Regions for each observation row of ``X`` (theta_hat, sigma_hat_sq, n)."""
        self._check_fitted()
        arr = np.asarray(X, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError("X must be (m, 3): theta_hat, sigma_hat_sq, n")
        return [self.predict_region(row) for row in arr]
