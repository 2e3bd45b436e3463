"""Shared fixtures: grids, parameter sets and a one-line Raman model"""

import numpy as np
import pytest

from simulators.polsqueeze.grid_spectral import SimGrid
from simulators.polsqueeze.raman_model import Lorentzian, RamanModel, build_kernel
from simulators.polsqueeze.units_params import PhysicalParams


@pytest.fixture
def fibre_params():
    """13.4 m fibre, t0 = 74 fs, z0 = 0.52 m, nbar = 2e8, 1.51 um"""
    return PhysicalParams()


@pytest.fixture
def default_grid():
    return SimGrid(1024, 40.0)


@pytest.fixture
def small_grid():
    return SimGrid(256, 40.0)


@pytest.fixture
def toy_raman():
    """Single damped oscillator near the silica gain peak, 18% delayed weight"""
    return RamanModel((Lorentzian(center_freq=6.0, width=2.0, strength=1.0),), 0.82)


@pytest.fixture
def kerr_kernel(small_grid, fibre_params):
    return build_kernel(RamanModel.pure_kerr(), small_grid, fibre_params)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
