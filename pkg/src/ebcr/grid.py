"""Piecewise-constant density on a uniform grid.

A :class:`GridDensity` stores density heights at cell midpoints.  Interval
integrals treat the density as constant on each cell, which makes the midpoint
rule exact for the stored representation; partial cells at the interval ends
are weighted by their overlap.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_finite_scalar, check_positive
from .errors import NumericalError
from .gaussian import (
    DEFAULT_GRID_CELLS,
    DEFAULT_GRID_HALF_WIDTH_SDS,
    GaussianParams,
    phi,
)

MIN_CELLS = 16
NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class GridDensity:
    start: float
    step: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_finite_scalar("start", self.start)
        check_positive("step", self.step)
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if vals.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if vals.size < MIN_CELLS:
            raise ValueError(f"grid needs at least {MIN_CELLS} cells, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values contain non-finite entries")
        if np.any(vals < 0.0):
            raise ValueError("values must be nonnegative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_cells(self) -> int:
        return self.values.size

    @property
    def stop(self) -> float:
        return self.start + self.step * self.n_cells

    def centers(self) -> np.ndarray:
        return self.start + self.step * (np.arange(self.n_cells) + 0.5)

    def total_mass(self) -> float:
        return float(self.step * self.values.sum())

    def is_normalized(self, tol: float = NORMALIZATION_TOL) -> bool:
        return abs(self.total_mass() - 1.0) <= tol

    def normalize(self) -> "GridDensity":
        """Rescale so that step * sum(values) == 1; idempotent."""
        mass = self.total_mass()
        if mass <= 0.0:
            raise NumericalError("degenerate density: no positive mass to normalize")
        if abs(mass - 1.0) <= 1e-12:  # already normalized up to summation error
            return self
        return GridDensity(self.start, self.step, self.values / mass)

    def density_at(self, x) -> np.ndarray:
        """Piecewise-constant lookup; zero outside the grid."""
        x = np.asarray(x, dtype=float)
        idx = np.floor((x - self.start) / self.step).astype(int)
        inside = (idx >= 0) & (idx < self.n_cells)
        out = np.zeros_like(x, dtype=float)
        out[inside] = self.values[idx[inside]]
        return out

    def integral(self, lo: float, hi: float) -> float:
        """Integral of the piecewise-constant density over [lo, hi]."""
        if hi < lo:
            lo, hi = hi, lo
        lo = max(lo, self.start)
        hi = min(hi, self.stop)
        if hi <= lo:
            return 0.0
        edges = self.start + self.step * np.arange(self.n_cells + 1)
        left = np.clip(edges[:-1], lo, hi)
        right = np.clip(edges[1:], lo, hi)
        return float(np.dot(right - left, self.values))


def grid_for_gaussian(
    params: GaussianParams,
    cells: int = DEFAULT_GRID_CELLS,
    half_width_sds: float = DEFAULT_GRID_HALF_WIDTH_SDS,
) -> GridDensity:
    """Tabulate a Gaussian on its default grid (mean +/- 8 sd, 2048 cells)."""
    half = half_width_sds * params.sd
    start = params.mean - half
    step = 2.0 * half / cells
    mids = start + step * (np.arange(cells) + 0.5)
    return GridDensity(start, step, phi(mids, params.mean, params.variance)).normalize()


def grid_from_function(fn, lo: float, hi: float, cells: int = DEFAULT_GRID_CELLS) -> GridDensity:
    """Tabulate an arbitrary nonnegative density evaluator and normalize."""
    if hi <= lo:
        raise ValueError("hi must exceed lo")
    step = (hi - lo) / cells
    mids = lo + step * (np.arange(cells) + 0.5)
    vals = np.clip(np.asarray(fn(mids), dtype=float), 0.0, None)
    return GridDensity(lo, step, vals).normalize()
