"""Estimation of the random-effects distribution from K estimate summaries.

Three backends:

* ``fit_gaussian_prior`` -- Gaussian maximum likelihood with a variance floor
  (closed form when sample sizes are equal, profile likelihood otherwise);
* ``fit_kde_prior`` -- equal-weight Gaussian kernel mixture over the estimates;
* ``fit_deconv_prior`` -- truncated Fourier inversion that divides out the
  Gaussian estimation noise, clipped at zero and mixed with a Gaussian
  fallback so the resulting density has no holes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.optimize import brentq

from ._validation import check_positive, check_probability
from .errors import NumericalError
from .gaussian import DEFAULT_GRID_CELLS, GaussianParams, phi
from .grid import GridDensity, grid_for_gaussian
from .linear import EstimateSummary

SIMPSON_NODES = 4097
RICHARDSON_TARGET = 1e-7
RICHARDSON_LIMIT = 1e-5
MAX_SIMPSON_NODES = 65537
#: cap on sigma^2 z^2 / (2 m) at the integration edge, e^30 ~ 1e13.
DECONV_EXPONENT_CAP = 30.0


@dataclass(frozen=True)
class GaussianPrior:
    params: GaussianParams

    def density(self, x) -> np.ndarray:
        return phi(x, self.params.mean, self.params.variance)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.params.mean, self.params.sd, size=size)

    def moments(self) -> tuple[float, float]:
        return self.params.mean, self.params.variance


@dataclass(frozen=True)
class KernelMixturePrior:
    """Equal-weight Gaussian mixture centered at the K estimates."""

    centers: np.ndarray = field(repr=False)
    bandwidth_sq: float

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        if centers.ndim != 1 or centers.size < 2:
            raise ValueError("need at least 2 mixture centers")
        if not np.all(np.isfinite(centers)):
            raise ValueError("mixture centers must be finite")
        check_positive("bandwidth_sq", self.bandwidth_sq)
        centers = np.ascontiguousarray(centers)
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return phi(x[..., None], self.centers, self.bandwidth_sq).mean(axis=-1)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        picks = rng.integers(0, self.centers.size, size=size)
        return self.centers[picks] + rng.normal(0.0, math.sqrt(self.bandwidth_sq), size=size)

    def moments(self) -> tuple[float, float]:
        mean = float(self.centers.mean())
        var = self.bandwidth_sq + float(np.mean((self.centers - mean) ** 2))
        return mean, var


@dataclass(frozen=True)
class GridPrior:
    grid: GridDensity

    def __post_init__(self):
        if not self.grid.is_normalized():
            raise ValueError("grid prior must be normalized")

    def density(self, x) -> np.ndarray:
        return self.grid.density_at(x)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        probs = self.grid.values * self.grid.step
        probs = probs / probs.sum()
        cells = rng.choice(self.grid.n_cells, size=size, p=probs)
        offsets = rng.uniform(0.0, self.grid.step, size=size)
        return self.grid.start + cells * self.grid.step + offsets

    def moments(self) -> tuple[float, float]:
        x = self.grid.centers()
        w = self.grid.values * self.grid.step
        mean = float(np.dot(w, x))
        var = float(np.dot(w, (x - mean) ** 2)) + self.grid.step**2 / 12.0
        return mean, var


Prior = Union[GaussianPrior, KernelMixturePrior, GridPrior]


def _summaries_arrays(summaries: list[EstimateSummary]) -> tuple[np.ndarray, np.ndarray]:
    """Theta estimates and their per-population noise variances sigma_k^2/n_k."""
    if len(summaries) < 2:
        raise ValueError("need at least 2 populations to fit a prior")
    theta = np.array([s.theta_hat for s in summaries], dtype=float)
    noise = np.array([s.sigma_hat_sq / s.n for s in summaries], dtype=float)
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(noise))):
        raise ValueError("summaries contain non-finite values")
    return theta, noise


def default_zeta_sq(summaries: list[EstimateSummary]) -> float:
    """Variance floor sigma_med^2 / (m K); vanishes in both K and m."""
    K = len(summaries)
    med_var = float(np.median([s.sigma_hat_sq for s in summaries]))
    med_n = float(np.median([s.n for s in summaries]))
    return med_var / (med_n * K)


def _profile_gaussian_mle(theta: np.ndarray, noise: np.ndarray) -> tuple[float, float]:
    """Maximize prod_k phi(theta_k | mu, v + noise_k) by profiling out mu.

    Returns (mu_hat, v_hat) with v_hat >= 0.  The stationarity condition in v,
    after plugging the precision-weighted mean for mu, is solved by bracketing
    and Brent's method; the boundary v = 0 is kept when the score is negative
    there.
    """

    def mu_of(v: float) -> float:
        w = 1.0 / (v + noise)
        return float(np.dot(w, theta) / w.sum())

    def score(v: float) -> float:
        # d/dv log-likelihood, up to factor 1/2.
        w = 1.0 / (v + noise)
        resid_sq = (theta - mu_of(v)) ** 2
        return float(np.dot(w * w, resid_sq) - w.sum())

    spread = float(np.mean((theta - theta.mean()) ** 2))
    upper = max(spread, float(noise.max()), 1e-12) * 4.0
    while score(upper) > 0.0 and upper < 1e12:
        upper *= 4.0
    if score(0.0) <= 0.0:
        v_hat = 0.0
    else:
        v_hat = float(brentq(score, 0.0, upper, xtol=1e-14, rtol=1e-15, maxiter=200))
    return mu_of(v_hat), v_hat


def fit_gaussian_prior(
    summaries: list[EstimateSummary], zeta_sq: float | None = None
) -> GaussianPrior:
    """Gaussian MLE of the prior with variance floored at ``zeta_sq``.

    Equal sample sizes give the closed form: mean of the estimates, and the
    raw spread minus the average noise variance.  Unequal sample sizes go
    through the profile likelihood.  The floor defaults to
    :func:`default_zeta_sq`.
    """
    theta, noise = _summaries_arrays(summaries)
    if zeta_sq is None:
        zeta_sq = default_zeta_sq(summaries)
    zeta_sq = check_positive("zeta_sq", zeta_sq)
    ns = {s.n for s in summaries}
    if len(ns) == 1:
        mu = float(theta.mean())
        raw = float(np.mean((theta - mu) ** 2)) - float(noise.mean())
        v = max(raw, 0.0)
    else:
        mu, v = _profile_gaussian_mle(theta, noise)
    return GaussianPrior(GaussianParams(mean=mu, variance=max(v, zeta_sq)))


def silverman_bandwidth_sq(theta: np.ndarray) -> float:
    """Silverman's rule on the estimates: 0.9 min(sd, IQR/1.34) K^(-1/5), squared."""
    theta = np.asarray(theta, dtype=float)
    K = theta.size
    sd = float(theta.std())
    q75, q25 = np.percentile(theta, [75.0, 25.0])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0.0:
        spread = max(sd, 1e-3)
    b = 0.9 * spread * K ** (-0.2)
    return b * b


def fit_kde_prior(
    summaries: list[EstimateSummary], bandwidth_sq: float | None = None
) -> KernelMixturePrior:
    """Kernel density prior: equal-weight Gaussian mixture over the estimates."""
    theta, _ = _summaries_arrays(summaries)
    if bandwidth_sq is None:
        bandwidth_sq = silverman_bandwidth_sq(theta)
    bandwidth_sq = check_positive("bandwidth_sq", bandwidth_sq)
    return KernelMixturePrior(centers=theta, bandwidth_sq=bandwidth_sq)


def default_deconv_bandwidth(summaries: list[EstimateSummary]) -> float:
    """Truncation bandwidth balancing spectral bias against noise inflation.

    Uses ``1/b^2 = log(K) / (v_pi + r)`` with ``r`` the median noise variance
    ``sigma_k^2/n_k`` and ``v_pi`` the Gaussian-MLE prior variance, which
    equates the squared truncation bias of a Gaussian-scale signal with the
    ``e^{r z^2}/K`` variance term at the band edge.  Never exceeds the
    inflation-bound rule ``log(K)/r`` and keeps the edge exponent
    ``r z^2 / 2`` below ``DECONV_EXPONENT_CAP`` for every population.
    """
    _, noise = _summaries_arrays(summaries)
    K = len(summaries)
    r_med = float(np.median(noise))
    r_max = float(noise.max())
    if r_med <= 0.0:
        raise ValueError("noise variances must be positive")
    v_pi = fit_gaussian_prior(summaries).params.variance
    inv_b_sq = min(
        math.log(max(K, 2)) / (v_pi + r_med),
        2.0 * DECONV_EXPONENT_CAP / r_max,
    )
    return 1.0 / math.sqrt(inv_b_sq)


def deconvolution_char(z, theta: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Noise-corrected empirical characteristic function.

    ``A(z) = K^-1 sum_k exp(i z theta_k) exp(noise_k z^2 / 2)``; Hermitian in z,
    so the inverse Fourier integral below is real.
    """
    z = np.asarray(z, dtype=float)
    theta = np.asarray(theta, dtype=float)
    noise = np.asarray(noise, dtype=float)
    phase = np.exp(1j * np.multiply.outer(z, theta))
    inflation = np.exp(0.5 * np.multiply.outer(z**2, noise))
    return (phase * inflation).mean(axis=-1)


def _simpson_weights(nodes: int, h: float) -> np.ndarray:
    w = np.ones(nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def _deconv_values_once(
    x: np.ndarray, theta: np.ndarray, noise: np.ndarray, b: float, nodes: int
) -> tuple[np.ndarray, float]:
    """One Simpson pass of (2 pi)^-1 int_{-1/b}^{1/b} e^{-ixz} A(z) dz.

    Returns the real part per point and the largest |imaginary| part, which
    must vanish by the Hermitian symmetry of A.
    """
    zmax = 1.0 / b
    z = np.linspace(-zmax, zmax, nodes)
    w = _simpson_weights(nodes, z[1] - z[0])
    integrand = w * deconvolution_char(z, theta, noise)
    out = np.empty(x.size, dtype=complex)
    chunk = max(1, int(4e6) // nodes)
    for lo in range(0, x.size, chunk):
        seg = x[lo : lo + chunk]
        out[lo : lo + chunk] = np.exp(-1j * np.multiply.outer(seg, z)) @ integrand
    out /= 2.0 * math.pi
    return out.real, float(np.max(np.abs(out.imag))) if x.size else 0.0


def deconvolution_density(
    x, theta: np.ndarray, noise: np.ndarray, b: float
) -> np.ndarray:
    """Unclipped deconvolution density at the points ``x``.

    Composite Simpson over the truncated frequency band, doubled until the
    Richardson error estimate is below ``RICHARDSON_TARGET``; raises
    ``NumericalError`` if it will not refine below ``RICHARDSON_LIMIT`` or if
    the noise inflation would overflow at the band edge.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    theta = np.asarray(theta, dtype=float)
    noise = np.asarray(noise, dtype=float)
    b = check_positive("b", b)
    edge_exponent = float(noise.max()) / (2.0 * b * b)
    if edge_exponent > 700.0:
        raise NumericalError("bandwidth too small: noise inflation overflows")

    nodes = SIMPSON_NODES
    vals, imag = _deconv_values_once(x, theta, noise, b, nodes)
    while True:
        nodes = 2 * nodes - 1
        refined, imag = _deconv_values_once(x, theta, noise, b, nodes)
        scale = max(float(np.max(np.abs(refined))), 1e-300)
        err = float(np.max(np.abs(refined - vals))) / (15.0 * scale)
        vals = refined
        if err < RICHARDSON_TARGET:
            break
        if nodes >= MAX_SIMPSON_NODES:
            if err > RICHARDSON_LIMIT:
                raise NumericalError("refine z-grid: Simpson quadrature did not converge")
            break
    if imag > 1e-8 * max(float(np.max(np.abs(vals))), 1e-300):
        raise NumericalError("deconvolution integral has a non-vanishing imaginary part")
    return vals


def _default_deconv_grid(
    theta: np.ndarray, noise: np.ndarray, cells: int
) -> tuple[float, float, int]:
    sd = max(float(theta.std()), math.sqrt(float(np.median(noise))), 1e-6)
    lo = float(theta.min()) - 8.0 * sd
    hi = float(theta.max()) + 8.0 * sd
    return lo, hi, cells


def fit_deconv_prior(
    summaries: list[EstimateSummary],
    b: float | None = None,
    kappa: float | None = None,
    fallback: GaussianParams | None = None,
    grid_spec: tuple[float, float, int] | None = None,
) -> GridPrior:
    """Deconvolution prior: clipped Fourier inversion mixed with a Gaussian.

    The raw inverse-Fourier estimate is evaluated per grid cell, clipped at
    zero and renormalized, then combined as ``kappa * clipped + (1 - kappa) *
    fallback`` and renormalized again.  ``kappa`` defaults to ``1 - 1/K``; the
    fallback defaults to the Gaussian MLE prior of the same summaries.
    """
    theta, noise = _summaries_arrays(summaries)
    K = theta.size
    if b is None:
        b = default_deconv_bandwidth(summaries)
    b = check_positive("b", b)
    kappa = check_probability(
        "kappa", 1.0 - 1.0 / K if kappa is None else kappa, open_interval=False
    )
    if fallback is None:
        fallback = fit_gaussian_prior(summaries).params
    lo, hi, cells = grid_spec or _default_deconv_grid(theta, noise, DEFAULT_GRID_CELLS)
    step = (hi - lo) / cells
    mids = lo + step * (np.arange(cells) + 0.5)

    raw = deconvolution_density(mids, theta, noise, b)
    clipped = np.clip(raw, 0.0, None)
    mass = clipped.sum() * step
    fallback_vals = phi(mids, fallback.mean, fallback.variance)
    if mass <= 0.0:
        mixed = fallback_vals
    else:
        mixed = kappa * clipped / mass + (1.0 - kappa) * fallback_vals
    return GridPrior(GridDensity(lo, step, mixed).normalize())


def tabulate_prior(prior: Prior, cells: int = DEFAULT_GRID_CELLS) -> GridPrior:
    """Grid representation of any prior on its default (mean +/- 8 sd) range."""
    if isinstance(prior, GridPrior):
        return prior
    if isinstance(prior, GaussianPrior):
        return GridPrior(grid_for_gaussian(prior.params, cells))
    mean, var = prior.moments()
    sd = math.sqrt(var)
    lo, hi = mean - 8.0 * sd, mean + 8.0 * sd
    step = (hi - lo) / cells
    mids = lo + step * (np.arange(cells) + 0.5)
    return GridPrior(GridDensity(lo, step, prior.density(mids)).normalize())
