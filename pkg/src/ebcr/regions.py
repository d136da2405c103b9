"""Posteriors, the level-set threshold solver, and confidence regions.

The region for a target parameter is the set where its posterior density
exceeds a threshold.  The threshold is the largest value whose average
posterior mass above it is at least ``1 - alpha``, where the average runs over
the estimated marginal law of the target statistic; with no target data the
posterior is the prior itself and the construction is deterministic.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.optimize import brentq

from ._validation import check_probability
from .errors import NumericalError
from .gaussian import (
    DEFAULT_GRID_CELLS,
    SQRT_2PI,
    GaussianParams,
    Phi,
    log_phi,
    phi,
    two_sided_z,
)
from .grid import GridDensity
from .linear import EstimateSummary, PopulationData, _condition_check
from .priors import GaussianPrior, GridPrior, KernelMixturePrior, Prior

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class GaussianPosterior:
    params: GaussianParams

    def density(self, x) -> np.ndarray:
        return phi(x, self.params.mean, self.params.variance)

    def max_density(self) -> float:
        return 1.0 / (SQRT_2PI * self.params.sd)

    def moments(self) -> tuple[float, float]:
        return self.params.mean, self.params.variance


@dataclass(frozen=True)
class MixturePosterior:
    """Gaussian mixture with a common component variance."""

    weights: np.ndarray = field(repr=False)
    means: np.ndarray = field(repr=False)
    common_variance: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        if w.shape != m.shape or w.ndim != 1:
            raise ValueError("weights and means must be 1-d arrays of equal length")
        if np.any(w < 0.0) or abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        if not self.common_variance > 0.0:
            raise ValueError("common_variance must be > 0")
        for name, arr in (("weights", w), ("means", m)):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        comp = phi(x[..., None], self.means, self.common_variance)
        return comp @ self.weights

    def moments(self) -> tuple[float, float]:
        mean = float(np.dot(self.weights, self.means))
        var = self.common_variance + float(np.dot(self.weights, (self.means - mean) ** 2))
        return mean, var

    def max_density(self) -> float:
        lo, hi, step, mids = _default_grid(self)
        return float(self.density(mids).max())


@dataclass(frozen=True)
class GridPosterior:
    grid: GridDensity

    def density(self, x) -> np.ndarray:
        return self.grid.density_at(x)

    def max_density(self) -> float:
        return float(self.grid.values.max())

    def moments(self) -> tuple[float, float]:
        x = self.grid.centers()
        w = self.grid.values * self.grid.step
        mean = float(np.dot(w, x))
        return mean, float(np.dot(w, (x - mean) ** 2))


Posterior = Union[GaussianPosterior, MixturePosterior, GridPosterior]


@dataclass(frozen=True)
class Region:
    """Disjoint closed intervals with their total Lebesgue measure."""

    intervals: tuple[tuple[float, float], ...]
    measure: float
    tau: float
    plateau: bool = False
    full_support: bool = False

    def __post_init__(self):
        prev_hi = -math.inf
        total = 0.0
        for lo, hi in self.intervals:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"malformed interval ({lo}, {hi})")
            if lo < prev_hi:
                raise ValueError("intervals must be sorted and disjoint")
            prev_hi = hi
            total += hi - lo
        if abs(total - self.measure) > 1e-9 * max(1.0, abs(total)):
            raise ValueError("measure does not match the interval lengths")

    def contains(self, x: float) -> bool:
        return any(lo <= x <= hi for lo, hi in self.intervals)

    @property
    def is_interval(self) -> bool:
        return len(self.intervals) == 1


@dataclass(frozen=True)
class TauSolveConfig:
    mc_draws: int = 4000
    bisection_tol: float = 1e-12
    max_iters: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.mc_draws < 500:
            raise ValueError("mc_draws must be >= 500")
        if not self.bisection_tol > 0.0:
            raise ValueError("bisection_tol must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class TauResult:
    tau: float
    plateau: bool = False
    full_support: bool = False

    def __float__(self) -> float:
        return self.tau


@dataclass(frozen=True)
class HybridResult:
    region: Region
    method: str  # "eb" or "classical"
    expected_eb_measure: float
    classical_measure: float


# ---------------------------------------------------------------------------
# posterior construction


def compute_posterior(prior: Prior, obs: EstimateSummary | None = None) -> Posterior:
    """Posterior of the target parameter given its estimate, or the prior itself.

    With ``obs=None`` (no target data) the posterior equals the prior.  The
    Gaussian prior is conjugate; the kernel mixture posterior reweights the
    components by the marginal likelihood of the observation and shrinks each
    center; a grid prior is updated by the pointwise Bayes rule.
    """
    if obs is None:
        if isinstance(prior, GaussianPrior):
            return GaussianPosterior(prior.params)
        if isinstance(prior, KernelMixturePrior):
            K = prior.centers.size
            return MixturePosterior(
                weights=np.full(K, 1.0 / K),
                means=prior.centers,
                common_variance=prior.bandwidth_sq,
            )
        return GridPosterior(prior.grid)
    if obs.n == 0:
        raise ValueError("observation has n = 0: use obs=None")
    s2 = obs.sigma_hat_sq / obs.n  # noise variance of theta_hat around theta
    if isinstance(prior, GaussianPrior):
        mu, v = prior.params.mean, prior.params.variance
        denom = v + s2
        post_mean = (v * obs.theta_hat + s2 * mu) / denom
        post_var = v * s2 / denom
        return GaussianPosterior(GaussianParams(post_mean, post_var))
    if isinstance(prior, KernelMixturePrior):
        b2 = prior.bandwidth_sq
        logw = log_phi(obs.theta_hat, prior.centers, b2 + s2)
        logw = logw - logw.max()
        w = np.exp(logw)
        w /= w.sum()
        means = (s2 * prior.centers + b2 * obs.theta_hat) / (s2 + b2)
        return MixturePosterior(weights=w, means=means, common_variance=b2 * s2 / (b2 + s2))
    g = prior.grid
    vals = g.values * phi(obs.theta_hat, g.centers(), s2)
    mass = vals.sum() * g.step
    if mass <= 0.0:
        raise NumericalError("degenerate density: posterior has no mass on the grid")
    return GridPosterior(GridDensity(g.start, g.step, vals / mass))


# ---------------------------------------------------------------------------
# level-set machinery


def _default_grid(obj) -> tuple[float, float, float, np.ndarray]:
    """(lo, hi, step, midpoints) covering mean +/- 8 sd with the default cells."""
    mean, var = obj.moments()
    sd = math.sqrt(var)
    lo, hi = mean - 8.0 * sd, mean + 8.0 * sd
    step = (hi - lo) / DEFAULT_GRID_CELLS
    mids = lo + step * (np.arange(DEFAULT_GRID_CELLS) + 0.5)
    return lo, hi, step, mids


def _mass_above(values: np.ndarray, step: float, tau: float) -> float:
    """Piecewise-constant mass above the threshold, averaged over rows."""
    masked = np.where(values > tau, values, 0.0)
    if values.ndim == 1:
        return float(masked.sum() * step)
    return float(masked.sum(axis=1).mean() * step)


def _prepared_mass_fn(values: np.ndarray, step: float) -> Callable[[float], float]:
    """Fast evaluator of the row-averaged mass above a threshold.

    The average over rows of ``step * sum(v * [v > tau])`` depends only on the
    pooled multiset of cell values, so one sorted suffix-sum array answers
    every candidate tau during the bisection.
    """
    rows = 1 if values.ndim == 1 else values.shape[0]
    flat = np.sort(values.ravel())
    suffix = np.concatenate([np.cumsum(flat[::-1])[::-1], [0.0]])
    scale = step / rows

    def g(tau: float) -> float:
        k = int(np.searchsorted(flat, tau, side="right"))
        return float(suffix[k] * scale)

    return g


def _measures_above(values: np.ndarray, step: float, tau: float) -> np.ndarray:
    """Lebesgue measure of {density > tau} per row, midpoint-interpolated edges.

    Treats each row as midpoint samples; interior level crossings are located
    by linear interpolation between adjacent midpoints, which removes the
    O(step) bias of counting whole cells.
    """
    v = np.atleast_2d(values)
    mask = v > tau
    base = mask.sum(axis=1).astype(float) * step
    left, right = v[:, :-1], v[:, 1:]
    crossing = mask[:, :-1] != mask[:, 1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(crossing, (left - tau) / (left - right), 0.0)
    # Falling edge (in -> out): boundary sits at t*step past the left midpoint,
    # while cell counting credited half a step; rising edge is the mirror image.
    falling = crossing & mask[:, :-1]
    rising = crossing & ~mask[:, :-1]
    adjust = np.where(falling, (t - 0.5) * step, 0.0) + np.where(
        rising, (0.5 - t) * step, 0.0
    )
    out = base + adjust.sum(axis=1)
    return out if values.ndim == 2 else out


def _gaussian_mass_above(variance: float, tau: float) -> float:
    """Mass of a Gaussian above the density level tau (mean-invariant)."""
    peak = 1.0 / (SQRT_2PI * math.sqrt(variance))
    if tau >= peak:
        return 0.0
    if tau <= 0.0:
        return 1.0
    r_sq = -2.0 * variance * math.log(tau * SQRT_2PI * math.sqrt(variance))
    z = math.sqrt(r_sq / variance)
    return float(2.0 * Phi(z) - 1.0)


def _bisect_tau(
    g_fn: Callable[[float], float],
    alpha: float,
    max_density: float,
    cfg: TauSolveConfig,
    jump_scale: float,
) -> TauResult:
    """Largest tau with g(tau) >= 1 - alpha, ties resolved toward the larger region."""
    target = 1.0 - alpha
    if g_fn(0.0) < target:
        return TauResult(tau=0.0, full_support=True)
    lo, hi = 0.0, max_density * (1.0 + 1e-9)
    tol = cfg.bisection_tol * max(max_density, 1e-300)
    for _ in range(cfg.max_iters):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if g_fn(mid) >= target:
            lo = mid
        else:
            hi = mid
    overshoot = g_fn(lo) - target
    plateau = overshoot > max(4.0 * jump_scale, 1e-9)
    return TauResult(tau=lo, plateau=plateau)


def _posterior_draw_matrix(
    prior: Prior,
    sigma_hat_sq: float,
    n0: int,
    cfg: TauSolveConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """Per-draw posterior densities on a shared grid for the Monte Carlo G-hat.

    Draws ``theta ~ prior`` and ``u | theta ~ N(theta, sigma^2/n0)`` with
    common random numbers, then tabulates each draw's posterior density.  For
    the kernel mixture the posterior of draw i is a shift of a mixture over
    fixed component locations, so a single kernel matrix serves all draws.
    """
    s2 = sigma_hat_sq / n0
    theta = prior.sample(cfg.mc_draws, rng)
    u = theta + rng.normal(0.0, math.sqrt(s2), size=cfg.mc_draws)
    if isinstance(prior, KernelMixturePrior):
        b2 = prior.bandwidth_sq
        centers = prior.centers
        vc = b2 * s2 / (b2 + s2)
        a = s2 / (s2 + b2)  # coefficient on the component center
        scaled = a * centers
        half = 8.0 * math.sqrt(vc)
        lo, hi = scaled.min() - half, scaled.max() + half
        step = (hi - lo) / DEFAULT_GRID_CELLS
        mids = lo + step * (np.arange(DEFAULT_GRID_CELLS) + 0.5)
        kernel = phi(mids[None, :], scaled[:, None], vc)  # (K, G)
        logw = log_phi(u[:, None], centers[None, :], b2 + s2)
        logw -= logw.max(axis=1, keepdims=True)
        gamma = np.exp(logw)
        gamma /= gamma.sum(axis=1, keepdims=True)
        return gamma @ kernel, step
    if isinstance(prior, GridPrior):
        g = prior.grid
        mids = g.centers()
        like = phi(u[:, None], mids[None, :], s2)
        weighted = like * g.values[None, :]
        mass = weighted.sum(axis=1) * g.step
        if np.any(mass <= 0.0):
            raise NumericalError("degenerate density: simulated posterior lost all mass")
        return weighted / mass[:, None], g.step
    raise TypeError(f"no Monte Carlo path for prior type {type(prior).__name__}")


def solve_tau(
    prior: Prior,
    noise: tuple[float, int] | None = None,
    alpha: float = 0.05,
    cfg: TauSolveConfig | None = None,
) -> TauResult:
    """Level-set threshold: the largest tau whose average posterior mass above
    it is at least ``1 - alpha``.

    ``noise`` is ``(sigma_hat_sq, n0)`` for the target statistic, or ``None``
    (equivalently ``n0 = 0``), in which case the threshold applies to the prior
    itself and the computation is deterministic.  Gaussian priors admit a
    deterministic path for any ``n0`` because the posterior variance does not
    depend on the observed value; the other backends average posterior masses
    over ``cfg.mc_draws`` simulated draws, reusing the same draws for every
    candidate tau so the bisection target is monotone.
    """
    alpha = check_probability("alpha", alpha)
    cfg = cfg or TauSolveConfig()
    n0 = 0 if noise is None else int(noise[1])
    if n0 < 0:
        raise ValueError("n0 must be >= 0")

    if isinstance(prior, GaussianPrior):
        variance = prior.params.variance
        if n0 > 0:
            s2 = noise[0] / n0
            variance = variance * s2 / (variance + s2)
        peak = 1.0 / (SQRT_2PI * math.sqrt(variance))
        return _bisect_tau(
            lambda t: _gaussian_mass_above(variance, t), alpha, peak, cfg, 0.0
        )

    if n0 == 0:
        if isinstance(prior, GridPrior):
            values, step = prior.grid.values, prior.grid.step
        else:
            _, _, step, mids = _default_grid(prior)
            values = prior.density(mids)
        max_density = float(values.max())
        return _bisect_tau(
            _prepared_mass_fn(values, step),
            alpha,
            max_density,
            cfg,
            jump_scale=max_density * step,
        )

    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0,)))
    matrix, step = _posterior_draw_matrix(prior, float(noise[0]), n0, cfg, rng)
    max_density = float(matrix.max())
    return _bisect_tau(
        _prepared_mass_fn(matrix, step),
        alpha,
        max_density,
        cfg,
        jump_scale=max_density * step,
    )


# ---------------------------------------------------------------------------
# region extraction


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True as (first, last) index pairs."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    ends = np.concatenate([idx[breaks], [idx[-1]]])
    return list(zip(starts.tolist(), ends.tolist()))


def _merge_close(intervals: list[tuple[float, float]], gap: float) -> list[tuple[float, float]]:
    merged: list[tuple[float, float]] = []
    for lo, hi in intervals:
        if merged and lo - merged[-1][1] <= gap:
            merged[-1] = (merged[-1][0], hi)
        else:
            merged.append((lo, hi))
    return merged


def _intervals_from_samples(
    mids: np.ndarray,
    values: np.ndarray,
    tau: float,
    lo_edge: float,
    hi_edge: float,
    step: float,
    refine: Callable[[float, float], float] | None,
) -> list[tuple[float, float]]:
    """Threshold midpoint samples and locate the boundaries.

    ``refine(a, b)`` solves density(x) = tau on the bracket [a, b] for
    continuously evaluable densities; without it the crossing is linearly
    interpolated between the adjacent midpoints.
    """
    mask = values > tau
    out = []
    for first, last in _runs(mask):
        if first == 0:
            left = lo_edge
        else:
            a, b = mids[first - 1], mids[first]
            if refine is not None:
                left = refine(a, b)
            else:
                t = (values[first - 1] - tau) / (values[first - 1] - values[first])
                left = a + t * step
        if last == mids.size - 1:
            right = hi_edge
        else:
            a, b = mids[last], mids[last + 1]
            if refine is not None:
                right = refine(a, b)
            else:
                t = (values[last] - tau) / (values[last] - values[last + 1])
                right = a + t * step
        out.append((left, right))
    return _merge_close(out, gap=step)


def extract_region(posterior: Posterior, tau: float) -> Region:
    """Level set {theta : posterior density > tau} as a region.

    Gaussian posteriors short-circuit to the analytic interval; mixtures are
    threshold-scanned on the default grid with boundaries refined by bisection
    on the continuous density; grid posteriors interpolate the crossing
    between cell midpoints.
    """
    if not math.isfinite(tau) or tau < 0.0:
        raise ValueError("tau must be a nonnegative finite number")
    plateau = False
    full_support = False
    if isinstance(posterior, GaussianPosterior):
        m, v = posterior.params.mean, posterior.params.variance
        peak = posterior.max_density()
        if tau >= peak:
            raise NumericalError("tau too large: empty region")
        if tau <= 0.0:
            sd = posterior.params.sd
            lo, hi = m - 8.0 * sd, m + 8.0 * sd
            full_support = True
        else:
            r = math.sqrt(-2.0 * v * math.log(tau * SQRT_2PI * math.sqrt(v)))
            lo, hi = m - r, m + r
        return Region(
            intervals=((lo, hi),), measure=hi - lo, tau=tau, full_support=full_support
        )

    if isinstance(posterior, MixturePosterior):
        lo_edge, hi_edge, step, mids = _default_grid(posterior)
        values = posterior.density(mids)

        def refine(a: float, b: float) -> float:
            fa = float(posterior.density(a)) - tau
            fb = float(posterior.density(b)) - tau
            if fa * fb > 0.0:
                return 0.5 * (a + b)
            span = hi_edge - lo_edge
            return float(
                brentq(lambda x: float(posterior.density(x)) - tau, a, b, xtol=1e-8 * span)
            )

    else:
        g = posterior.grid
        lo_edge, hi_edge, step, mids = g.start, g.stop, g.step, g.centers()
        values = g.values
        refine = None

    if tau == 0.0:
        intervals = [(lo_edge, hi_edge)]
        full_support = True
    else:
        intervals = _intervals_from_samples(
            mids, values, tau, lo_edge, hi_edge, step, refine
        )
        if not intervals:
            raise NumericalError("tau too large: empty region")
    measure = float(sum(hi - lo for lo, hi in intervals))
    return Region(
        intervals=tuple(intervals),
        measure=measure,
        tau=tau,
        plateau=plateau,
        full_support=full_support,
    )


def region_for_target(
    prior: Prior,
    obs: EstimateSummary | None,
    alpha: float,
    cfg: TauSolveConfig | None = None,
) -> Region:
    """Full pipeline: solve the threshold, then extract the level-set region.

    With ``obs=None`` the region is a level set of the prior itself.  Plateau
    and full-support flags from the threshold solver are carried onto the
    returned region.
    """
    cfg = cfg or TauSolveConfig()
    noise = None if obs is None else (obs.sigma_hat_sq, obs.n)
    t = solve_tau(prior, noise, alpha, cfg)
    posterior = compute_posterior(prior, obs)
    region = extract_region(posterior, t.tau)
    if t.plateau or t.full_support:
        region = dataclasses.replace(
            region,
            plateau=t.plateau or region.plateau,
            full_support=t.full_support or region.full_support,
        )
    return region


# ---------------------------------------------------------------------------
# closed-form intervals and the hybrid selector


def eb_gaussian_interval(prior: GaussianPrior, obs: EstimateSummary, alpha: float) -> Region:
    """Closed-form empirical Bayes interval under a Gaussian prior.

    Centered at the precision-weighted blend of the estimate and the prior
    mean, with half-width ``z * sqrt(v_pi * s / (s + n0 * v_pi))`` where
    ``s = sigma_hat_sq`` and ``v_pi`` is the prior variance.
    """
    if not isinstance(prior, GaussianPrior):
        raise TypeError("eb_gaussian_interval needs a Gaussian prior")
    if obs.n < 1:
        raise ValueError("eb_gaussian_interval needs n0 >= 1; use solve_tau for n0 = 0")
    alpha = check_probability("alpha", alpha)
    z = two_sided_z(alpha)
    v_pi = prior.params.variance
    s = obs.sigma_hat_sq
    n0 = obs.n
    denom = s + n0 * v_pi
    center = (n0 * v_pi * obs.theta_hat + s * prior.params.mean) / denom
    post_var = v_pi * s / denom
    half = z * math.sqrt(post_var)
    tau = math.exp(-0.5 * z * z) / (SQRT_2PI * math.sqrt(post_var))
    return Region(intervals=((center - half, center + half),), measure=2.0 * half, tau=tau)


def classical_interval(obs: EstimateSummary, alpha: float) -> Region:
    """Large-sample interval ``theta_hat +/- z sqrt(sigma_hat_sq / n)``."""
    if obs.n < 1:
        raise ValueError("classical interval needs n0 >= 1")
    alpha = check_probability("alpha", alpha)
    z = two_sided_z(alpha)
    var = obs.sigma_hat_sq / obs.n
    half = z * math.sqrt(var)
    tau = math.exp(-0.5 * z * z) / (SQRT_2PI * math.sqrt(var))
    return Region(
        intervals=((obs.theta_hat - half, obs.theta_hat + half),),
        measure=2.0 * half,
        tau=tau,
    )


def expected_region_measure(
    prior: Prior,
    sigma_hat_sq: float,
    n0: int,
    tau: float,
    cfg: TauSolveConfig,
) -> float:
    """Mean Lebesgue measure of the level-set region over the fitted hierarchy.

    Simulates ``(theta, theta_hat)`` pairs from the estimated model on a
    dedicated stream and averages the measures of the per-draw regions at the
    given threshold.  Gaussian priors are exact: every draw's region has the
    same width.
    """
    if isinstance(prior, GaussianPrior):
        v = prior.params.variance
        s2 = sigma_hat_sq / n0
        post_var = v * s2 / (v + s2)
        peak = 1.0 / (SQRT_2PI * math.sqrt(post_var))
        if tau >= peak:
            return 0.0
        return 2.0 * math.sqrt(-2.0 * post_var * math.log(tau * SQRT_2PI * math.sqrt(post_var)))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(1,)))
    matrix, step = _posterior_draw_matrix(prior, sigma_hat_sq, n0, cfg, rng)
    return float(_measures_above(matrix, step, tau).mean())


def hybrid_select(
    prior: Prior,
    obs: EstimateSummary,
    alpha: float,
    cfg: TauSolveConfig | None = None,
) -> HybridResult:
    """Choose between the empirical Bayes region and the classical interval.

    Simulates the fitted hierarchy (independently of the observed target
    estimate), compares the expected EB region measure with the classical
    width, and applies the winner to the real estimate.
    """
    if obs.n < 1:
        raise ValueError("hybrid selection needs n0 >= 1")
    alpha = check_probability("alpha", alpha)
    cfg = cfg or TauSolveConfig()
    noise = (obs.sigma_hat_sq, obs.n)
    tau = solve_tau(prior, noise, alpha, cfg)
    expected = expected_region_measure(prior, obs.sigma_hat_sq, obs.n, tau.tau, cfg)
    cl = classical_interval(obs, alpha)
    if expected < cl.measure:
        region = extract_region(compute_posterior(prior, obs), tau.tau)
        return HybridResult(region, "eb", expected, cl.measure)
    return HybridResult(cl, "classical", expected, cl.measure)


# ---------------------------------------------------------------------------
# one-way random-effects closed forms


def _separate_intercept_fit(pop: PopulationData) -> tuple[float, float]:
    """Intercept estimate and its precision denominator for one population."""
    Z = np.column_stack([np.ones(pop.n), pop.X])
    _condition_check(Z, pop.id)
    coef = np.linalg.solve(Z.T @ Z, Z.T @ pop.y)
    ones = np.ones(pop.n)
    xt1 = pop.X.T @ ones
    denom = pop.n - float(xt1 @ np.linalg.solve(pop.X.T @ pop.X, xt1))
    return float(coef[0]), denom


def _pooled_intercept_fit(populations: list[PopulationData]) -> float:
    """Target-intercept estimate from the joint fit with a shared slope vector."""
    p = populations[0].p
    K1 = len(populations)
    rows = sum(pop.n for pop in populations)
    design = np.zeros((rows, K1 + p))
    response = np.zeros(rows)
    at = 0
    for k, pop in enumerate(populations):
        design[at : at + pop.n, k] = 1.0
        design[at : at + pop.n, K1:] = pop.X
        response[at : at + pop.n] = pop.y
        at += pop.n
    coef, _, rank, _ = np.linalg.lstsq(design, response, rcond=None)
    if rank < K1 + p:
        raise NumericalError("singular design in the pooled fit")
    return float(coef[0])


def anova_case_posteriors(
    populations: list[PopulationData | None],
    prior: GaussianParams,
    sigma_eps_sq: float,
    case: int,
) -> GaussianParams:
    """Closed-form laws for the four pooling strategies of the one-way model.

    ``populations[0]`` is the target (``None`` means no target data); the rest
    are auxiliary.  Cases 1 and 2 return the estimated sampling law of the
    target intercept (separate and pooled-design variants); cases 3 and 4
    return its posterior under the Gaussian prior.  With no target data the
    posterior cases reduce to the prior.
    """
    if case not in (1, 2, 3, 4):
        raise ValueError("case must be one of 1, 2, 3, 4")
    if not populations:
        raise ValueError("need at least the target slot in populations")
    if sigma_eps_sq <= 0.0:
        raise ValueError("sigma_eps_sq must be > 0")
    target = populations[0]
    others = [pop for pop in populations[1:] if pop is not None]

    if target is None:
        if case in (3, 4):
            return GaussianParams(prior.mean, prior.variance)
        raise ValueError(f"case {case} needs target data")

    ones = np.ones(target.n)
    xt1 = target.X.T @ ones
    if case in (1, 3):
        gram = target.X.T @ target.X
    else:
        gram = sum((pop.X.T @ pop.X for pop in others), target.X.T @ target.X)
    denom = target.n - float(xt1 @ np.linalg.solve(gram, xt1))
    if denom <= 0.0:
        raise NumericalError("singular design: nonpositive intercept information")

    if case in (1, 3):
        theta_hat, _ = _separate_intercept_fit(target)
    else:
        theta_hat = _pooled_intercept_fit([target, *others])

    sampling_var = sigma_eps_sq / denom
    if case in (1, 2):
        return GaussianParams(theta_hat, sampling_var)
    v_pi = prior.variance
    weight = v_pi * denom / (v_pi * denom + sigma_eps_sq)
    post_mean = weight * theta_hat + (1.0 - weight) * prior.mean
    post_var = v_pi * sigma_eps_sq / (v_pi * denom + sigma_eps_sq)
    return GaussianParams(post_mean, post_var)
