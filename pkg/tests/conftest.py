"""Shared fixtures and field generators for the test suite."""

import numpy as np
import pytest

from shearspec.spectral import (
    TorusGrid,
    SpectralField2D,
    dealias,
    from_physical,
)


def random_real_field(grid: TorusGrid, rng: np.random.Generator,
                      band_limited: bool = True) -> SpectralField2D:
    """A random real field; band-limited fields are also Nyquist-free.

    Built by transforming white noise sampled on the collocation grid, so
    the coefficients are exactly Hermitian; the two-thirds truncation then
    confines the spectrum to the dealias band.
    """
    f = from_physical(grid, rng.standard_normal((grid.nx, grid.ny)))
    return dealias(f) if band_limited else f


def random_smooth_field(grid: TorusGrid, rng: np.random.Generator,
                        kc: float = 3.0, mean: float = 0.0) -> SpectralField2D:
    """A random field with exponentially decaying spectrum (analytic-like)."""
    f = random_real_field(grid, rng)
    k, l = grid.wavenumber_mesh()
    kappa = np.sqrt((k * k + l * l).astype(np.float64))
    c = f.coeffs * np.exp(-kappa / kc)
    c[0, 0] = mean
    return SpectralField2D(grid, c)


@pytest.fixture
def grid64():
    return TorusGrid(64, 64)


@pytest.fixture
def grid32():
    return TorusGrid(32, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(20260819)
