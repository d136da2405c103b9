import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ebcr import GaussianParams, GridDensity, NumericalError, grid_for_gaussian


def test_normalize_uniform():
    g = GridDensity(0.0, 0.01, np.full(100, 7.3)).normalize()
    np.testing.assert_allclose(g.values, 1.0, rtol=1e-14)
    assert g.total_mass() == pytest.approx(1.0, abs=1e-12)


def test_normalize_idempotent_to_one_ulp():
    rng = np.random.default_rng(5)
    g = GridDensity(-2.0, 0.125, rng.uniform(0.0, 3.0, 64)).normalize()
    again = g.normalize()
    np.testing.assert_array_max_ulp(g.values, again.values, maxulp=1)


def test_gaussian_grid_interval_integral_matches_cdf():
    g = grid_for_gaussian(GaussianParams(0.0, 1.0))
    assert g.n_cells == 2048
    got = g.integral(-1.959964, 1.959964)
    # oracle: Phi differences via erf
    oracle = math.erf(1.959964 / math.sqrt(2.0))
    assert got == pytest.approx(oracle, abs=1e-4)
    assert got == pytest.approx(0.95, abs=1e-4)


def test_all_zero_grid_is_degenerate():
    with pytest.raises(NumericalError, match="degenerate"):
        GridDensity(0.0, 0.1, np.zeros(32)).normalize()


def test_validation_errors():
    with pytest.raises(ValueError):
        GridDensity(0.0, 0.1, np.ones(8))  # too few cells
    with pytest.raises(ValueError):
        GridDensity(0.0, -0.1, np.ones(32))
    with pytest.raises(ValueError):
        GridDensity(0.0, 0.1, np.concatenate([np.ones(31), [-0.5]]))
    with pytest.raises(ValueError):
        GridDensity(0.0, 0.1, np.concatenate([np.ones(31), [np.nan]]))


def test_partial_cell_integral_is_exact_for_uniform():
    g = GridDensity(0.0, 1.0 / 64, np.ones(64)).normalize()
    assert g.integral(0.25, 0.5) == pytest.approx(0.25, abs=1e-14)
    # off-edge endpoints hit partial cells
    assert g.integral(0.2501, 0.4999) == pytest.approx(0.2498, abs=1e-12)
    assert g.integral(-5.0, 5.0) == pytest.approx(1.0, abs=1e-14)
    assert g.integral(2.0, 3.0) == 0.0


def test_density_lookup():
    g = GridDensity(0.0, 0.5, np.arange(1.0, 17.0))
    assert g.density_at(np.array([0.1]))[0] == 1.0
    assert g.density_at(np.array([7.9]))[0] == 16.0
    assert g.density_at(np.array([-0.1]))[0] == 0.0
    assert g.density_at(np.array([8.1]))[0] == 0.0


@settings(max_examples=30, deadline=None)
@given(
    start=st.floats(-10, 10),
    step=st.floats(0.001, 1.0),
    seed=st.integers(0, 2**31),
)
def test_normalize_property(start, step, seed):
    rng = np.random.default_rng(seed)
    vals = rng.uniform(0.0, 5.0, 48)
    vals[0] = 1.0  # guarantee positive mass
    g = GridDensity(start, step, vals).normalize()
    assert abs(g.total_mass() - 1.0) <= 1e-9
    again = g.normalize()
    np.testing.assert_array_max_ulp(g.values, again.values, maxulp=1)
