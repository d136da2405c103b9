"""Scalar and vectorized Gaussian primitives.

Everything downstream (prior fitting, posteriors, level sets) funnels through
these few functions, so they are kept dependency-light: ``math.erf`` for the
CDF (double-precision accurate) and ``scipy.special.ndtri`` for the quantile.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from ._validation import check_finite_scalar, check_positive, check_probability

SQRT_2PI = math.sqrt(2.0 * math.pi)

#: Default tabulation rule: mean +/- 8 standard deviations, 2048 cells.
DEFAULT_GRID_CELLS = 2048
DEFAULT_GRID_HALF_WIDTH_SDS = 8.0


@dataclass(frozen=True)
class GaussianParams:
    """Mean/variance pair with a strictly positive variance."""

    mean: float
    variance: float

    def __post_init__(self):
        check_finite_scalar("mean", self.mean)
        check_positive("variance", self.variance)

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)


def normal_pdf_cdf(x: float, params: GaussianParams) -> tuple[float, float]:
    """Density and distribution function of N(mean, variance) at ``x``."""
    x = check_finite_scalar("x", x)
    sd = params.sd
    z = (x - params.mean) / sd
    density = math.exp(-0.5 * z * z) / (SQRT_2PI * sd)
    cumulative = 0.5 * math.erfc(-z / math.sqrt(2.0))
    return density, cumulative


def normal_quantile(p: float) -> float:
    """Standard normal quantile, |Phi(result) - p| <= 1e-10."""
    p = check_probability("p", p)
    return float(ndtri(p))


def two_sided_z(alpha: float) -> float:
    """Critical value z with Phi(z) = 1 - alpha/2."""
    alpha = check_probability("alpha", alpha)
    return float(ndtri(1.0 - 0.5 * alpha))


def tv_upper_bound(a: GaussianParams, b: GaussianParams) -> float:
    """Divergence bound between two Gaussians used as a test oracle.

    Returns ``log(v2/v1)/2 + (v1 + (m1-m2)^2)/(2 v2) - 1/2``; callers take the
    square root to bound the distance between the two laws (Pinsker direction).
    """
    d = a.mean - b.mean
    return (
        0.5 * math.log(b.variance / a.variance)
        + (a.variance + d * d) / (2.0 * b.variance)
        - 0.5
    )


# Vectorized helpers shared by the prior/posterior machinery.

def phi(x, mean, variance):
    """Elementwise Gaussian density; arguments broadcast."""
    x = np.asarray(x, dtype=float)
    sd = np.sqrt(variance)
    z = (x - mean) / sd
    return np.exp(-0.5 * z * z) / (SQRT_2PI * sd)


def log_phi(x, mean, variance):
    x = np.asarray(x, dtype=float)
    z = (x - mean) / np.sqrt(variance)
    return -0.5 * z * z - 0.5 * np.log(2.0 * math.pi * np.asarray(variance, dtype=float))


def Phi(x, mean=0.0, variance=1.0):
    """Elementwise Gaussian distribution function."""
    x = np.asarray(x, dtype=float)
    return ndtr((x - mean) / np.sqrt(variance))
